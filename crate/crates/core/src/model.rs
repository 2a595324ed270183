//! Feed-forward softmax classifiers: inference, backpropagation, seeded
//! mini-batch SGD training and a textual checkpoint format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::prob::{log_softmax, softmax, ProbVector};
use crate::rng;

pub const CHECKPOINT_HEADER: &str = "outrand-checkpoint v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Checkpoint(format!("unknown activation `{other}`"))),
        }
    }
}

/// Dense layer, `weights` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Parameter gradients, shaped like the classifier's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

/// Immutable after construction; evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    layers: Vec<Layer>,
    /// First-layer weights transposed (`inputs × outputs`), for
    /// single-coordinate updates of the first pre-activation.
    first_columns: Vec<f64>,
}

struct Trace {
    /// `inputs[l]` is the input to layer `l`.
    inputs: Vec<Vec<f64>>,
    /// `pre[l]` is layer `l`'s pre-activation.
    pre: Vec<Vec<f64>>,
}

impl Classifier {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("classifier needs at least one layer"));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(Error::invalid(format!("layer {l}: parameter shapes do not match dims")));
            }
            if l > 0 && layers[l - 1].outputs != layer.inputs {
                return Err(Error::invalid(format!("layer {l}: input dim does not chain")));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::invalid("final layer must emit raw logits"));
        }
        let first = &layers[0];
        let mut first_columns = vec![0.0; first.weights.len()];
        for (o, row) in first.weights.chunks_exact(first.inputs).enumerate() {
            for (i, w) in row.iter().enumerate() {
                first_columns[i * first.outputs + o] = *w;
            }
        }
        Ok(Classifier { layers, first_columns })
    }

    /// He-initialised network with ReLU hidden layers.
    pub fn init(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || classes < 2 {
            return Err(Error::invalid("need input_dim > 0 and at least two classes"));
        }
        let mut s = rng::derive_stream(seed, &[0x1417]);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (inputs, outputs) = (w[0], w[1]);
                let scale = (2.0 / inputs as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| scale * s.sample::<f64, _>(StandardNormal))
                        .collect(),
                    bias: vec![0.0; outputs],
                    activation: if l + 2 == dims.len() {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Classifier::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer
                .pre_activation(&a)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(a)
    }

    /// Pre-activation of the first layer.
    pub fn first_pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.layers[0].pre_activation(x))
    }

    /// Logits given the first layer's pre-activation at `x`, with input
    /// coordinate `i` moved by `delta`.
    pub fn logits_from_shifted_pre(&self, pre: &[f64], i: usize, delta: f64) -> Vec<f64> {
        let first = &self.layers[0];
        let col = &self.first_columns[i * first.outputs..(i + 1) * first.outputs];
        let mut a: Vec<f64> = pre
            .iter()
            .zip(col)
            .map(|(z, w)| first.activation.apply(z + delta * w))
            .collect();
        for layer in &self.layers[1..] {
            a = layer
                .pre_activation(&a)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        a
    }

    /// `f(x)`: the softmax output.
    pub fn forward(&self, x: &[f64]) -> Result<ProbVector> {
        Ok(ProbVector::from_logits(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::prob::argmax(&self.logits(x)?))
    }

    /// Which hidden units are active at `x`; used to detect kinks.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>> {
        self.check_dim(x)?;
        let trace = self.trace(x);
        Ok(trace.pre[..trace.pre.len() - 1]
            .iter()
            .flatten()
            .map(|z| *z > 0.0)
            .collect())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.pre_activation(&a);
            let next = z.iter().map(|v| layer.activation.apply(*v)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// Back-propagates `dl_dlogits` to the input: returns `∂L/∂x`.
    pub fn input_gradient_from_logits(&self, x: &[f64], dl_dlogits: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if dl_dlogits.len() != self.classes() {
            return Err(Error::DimensionMismatch {
                expected: self.classes(),
                actual: dl_dlogits.len(),
            });
        }
        let trace = self.trace(x);
        let mut delta = dl_dlogits.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            // through the activation
            for (d, z) in delta.iter_mut().zip(&trace.pre[l]) {
                *d *= layer.activation.derivative(*z);
            }
            let mut prev = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Back-propagates a gradient with respect to the softmax output.
    pub fn input_gradient_from_probs(&self, x: &[f64], dl_dprobs: &[f64]) -> Result<Vec<f64>> {
        let p = softmax(&self.logits(x)?);
        let dot: f64 = p.iter().zip(dl_dprobs).map(|(a, b)| a * b).sum();
        let dl_dz: Vec<f64> = p.iter().zip(dl_dprobs).map(|(pi, gi)| pi * (gi - dot)).collect();
        self.input_gradient_from_logits(x, &dl_dz)
    }

    /// Mean cross-entropy over `batch` and its parameter gradients.
    pub fn loss_and_gradients(&self, batch: &[&Example]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        };
        if batch.is_empty() {
            return Ok((0.0, grads));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for ex in batch {
            self.check_dim(&ex.pixels)?;
            let trace = self.trace(&ex.pixels);
            let logits = trace.pre.last().unwrap();
            loss -= log_softmax(logits)[ex.label] * scale;
            let mut delta = softmax(logits);
            delta[ex.label] -= 1.0;
            for (l, layer) in self.layers.iter().enumerate().rev() {
                for (d, z) in delta.iter_mut().zip(&trace.pre[l]) {
                    *d *= layer.activation.derivative(*z);
                }
                let input = &trace.inputs[l];
                for (o, d) in delta.iter().enumerate() {
                    grads.bias[l][o] += d * scale;
                    let row = &mut grads.weights[l][o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g += d * a * scale;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * d;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss, grads))
    }

    fn apply_step(&mut self, grads: &Gradients, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer
                .weights
                .iter_mut()
                .zip(&grads.weights[l])
                .for_each(|(w, g)| *w -= lr * g);
            layer
                .bias
                .iter_mut()
                .zip(&grads.bias[l])
                .for_each(|(b, g)| *b -= lr * g);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }

    /// Versioned text dump. Floats use Rust's shortest round-trip formatting,
    /// so a reload is bit-identical.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_HEADER}").unwrap();
        writeln!(out, "layers {}", self.layers.len()).unwrap();
        for layer in &self.layers {
            writeln!(
                out,
                "layer {} {} {}",
                layer.inputs,
                layer.outputs,
                layer.activation.tag()
            )
            .unwrap();
            for row in layer.weights.chunks_exact(layer.inputs) {
                writeln!(out, "{}", join(row)).unwrap();
            }
            writeln!(out, "{}", join(&layer.bias)).unwrap();
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Checkpoint(format!("missing {what}")));
        let header = next("header")?;
        if header != CHECKPOINT_HEADER {
            return Err(Error::Checkpoint(format!("unsupported header `{header}`")));
        }
        let count: usize = next("layer count")?
            .strip_prefix("layers ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad layer count line".into()))?;
        let mut layers = Vec::with_capacity(count);
        for l in 0..count {
            let spec: Vec<&str> = next("layer header")?.split_whitespace().collect();
            if spec.len() != 4 || spec[0] != "layer" {
                return Err(Error::Checkpoint(format!("bad header for layer {l}")));
            }
            let parse_dim = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Checkpoint(format!("bad dim `{s}`")))
            };
            let (inputs, outputs) = (parse_dim(spec[1])?, parse_dim(spec[2])?);
            let activation = spec[3].parse()?;
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                let row = parse_row(next("weight row")?)?;
                if row.len() != inputs {
                    return Err(Error::Checkpoint(format!(
                        "layer {l}: weight row has {} values",
                        row.len()
                    )));
                }
                weights.extend(row);
            }
            let bias = parse_row(next("bias row")?)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        Classifier::from_layers(layers).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_row(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("bad number `{t}`")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64],
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Mini-batch SGD on mean cross-entropy. Deterministic given `cfg.seed`.
pub fn train_classifier(data: &Dataset, cfg: &TrainConfig) -> Result<Classifier> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::invalid("batch_size must be positive and learning_rate > 0"));
    }
    let mut model = Classifier::init(data.dim, &cfg.hidden, data.classes, cfg.seed)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut s = rng::derive_stream(cfg.seed, &[0x5eed, 1]);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut s);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.examples[i]).collect();
            let (_, grads) = model.loss_and_gradients(&batch)?;
            model.apply_step(&grads, cfg.learning_rate);
        }
    }
    Classifier::from_layers(model.layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BlobSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny(seed: u64, n: usize, c: usize) -> Classifier {
        Classifier::init(n, &[5], c, seed).unwrap()
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let m = tiny(1, 3, 2);
        assert!(matches!(
            m.forward(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let d = BlobSpec::random_means(2, 3, 5, 0.1, 2).generate().unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            hidden: vec![4],
            seed: 11,
            ..Default::default()
        };
        let m = train_classifier(&d, &cfg).unwrap();
        assert_eq!(m, Classifier::init(3, &[4], 2, 11).unwrap());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let d = Dataset {
            name: "e".into(),
            examples: vec![],
            dim: 2,
            classes: 2,
        };
        assert!(matches!(
            train_classifier(&d, &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let d = BlobSpec::random_means(3, 4, 20, 0.1, 5).generate().unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            hidden: vec![8],
            seed: 3,
            ..Default::default()
        };
        assert_eq!(train_classifier(&d, &cfg).unwrap(), train_classifier(&d, &cfg).unwrap());
    }

    #[test]
    fn shifted_pre_activation_matches_forward() {
        let m = Classifier::init(5, &[7, 4], 3, 21).unwrap();
        let x = [0.1, 0.4, 0.5, 0.9, 0.0];
        let pre = m.first_pre_activation(&x).unwrap();
        for i in 0..5 {
            let mut z = x;
            z[i] += 0.3;
            let full = m.logits(&z).unwrap();
            let fast = m.logits_from_shifted_pre(&pre, i, 0.3);
            for (a, b) in full.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = Classifier::init(6, &[7, 3], 4, 99).unwrap();
        let back = Classifier::from_checkpoint_str(&m.to_checkpoint_string()).unwrap();
        assert_eq!(back, m);
        assert!(Classifier::from_checkpoint_str("outrand-checkpoint v0\n").is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = Classifier::init(4, &[6], 3, 8).unwrap();
        let x = [0.3, 0.6, 0.1, 0.9];
        let w = [0.7, -1.1, 0.4];
        let f = |x: &[f64]| -> f64 {
            m.forward(x)
                .unwrap()
                .as_slice()
                .iter()
                .zip(&w)
                .map(|(p, w)| p * w)
                .sum()
        };
        let g = m.input_gradient_from_probs(&x, &w).unwrap();
        for i in 0..4 {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }

    fn param_fd_check(seed: u64, n: usize, c: usize) -> std::result::Result<(), TestCaseError> {
        let mut m = Classifier::init(n, &[6], c, seed).unwrap();
        // non-zero biases so units are away from their kinks
        let mut s = rng::stream(seed ^ 0xabc);
        for layer in m.layers.iter_mut() {
            layer.bias.iter_mut().for_each(|b| *b = s.random_range(-0.5..0.5));
        }
        let examples: Vec<Example> = (0..4)
            .map(|k| Example {
                pixels: (0..n).map(|_| s.random::<f64>()).collect(),
                label: k % c,
            })
            .collect();
        let batch: Vec<&Example> = examples.iter().collect();
        let (_, grads) = m.loss_and_gradients(&batch).unwrap();
        let step = 1e-5;
        for l in 0..m.layers.len() {
            for k in 0..m.layers[l].weights.len() {
                let orig = m.layers[l].weights[k];
                m.layers[l].weights[k] = orig + step;
                let up = m.loss_and_gradients(&batch).unwrap().0;
                m.layers[l].weights[k] = orig - step;
                let down = m.loss_and_gradients(&batch).unwrap().0;
                m.layers[l].weights[k] = orig;
                let fd = (up - down) / (2.0 * step);
                let an = grads.weights[l][k];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                prop_assert!(
                    rel < 1e-4 || (fd - an).abs() < 1e-9,
                    "layer {} w{}: fd {} vs {}",
                    l,
                    k,
                    fd,
                    an
                );
            }
            for k in 0..m.layers[l].bias.len() {
                let orig = m.layers[l].bias[k];
                m.layers[l].bias[k] = orig + step;
                let up = m.loss_and_gradients(&batch).unwrap().0;
                m.layers[l].bias[k] = orig - step;
                let down = m.loss_and_gradients(&batch).unwrap().0;
                m.layers[l].bias[k] = orig;
                let fd = (up - down) / (2.0 * step);
                let an = grads.bias[l][k];
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
                prop_assert!(
                    rel < 1e-4 || (fd - an).abs() < 1e-9,
                    "layer {} b{}: fd {} vs {}",
                    l,
                    k,
                    fd,
                    an
                );
            }
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn backprop_matches_central_differences(seed in 0u64..10_000, n in 1usize..=10, c in 2usize..=4) {
            param_fd_check(seed, n, c)?;
        }

        #[test]
        fn forward_is_deterministic_and_normalised(seed in 0u64..1000, x in prop::collection::vec(0.0f64..=1.0, 5)) {
            let m = tiny(seed, 5, 3);
            let a = m.forward(&x).unwrap();
            prop_assert_eq!(&a, &m.forward(&x).unwrap());
            prop_assert!((a.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}
