//! The attacker's only channel to the model.
//!
//! An attacker submits inputs and observes the (possibly randomized) output
//! vector. It never sees parameters or gradients, it knows the form of the
//! defense, and it does not know the defense's random draws: those come from
//! a stream owned by the oracle.

use crate::defense::NoiseModel;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::rng::Stream;

pub struct QueryOracle<'m> {
    model: &'m Classifier,
    noise: Option<NoiseModel>,
    stream: Stream,
    queries: u64,
    // first-layer pre-activation of the last probed base point
    anchor: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'m> QueryOracle<'m> {
    pub fn new(model: &'m Classifier, noise: Option<NoiseModel>, stream: Stream) -> Result<Self> {
        if let Some(n) = &noise {
            if n.classes() != model.classes() {
                return Err(Error::DimensionMismatch {
                    expected: model.classes(),
                    actual: n.classes(),
                });
            }
        }
        Ok(QueryOracle {
            model,
            noise,
            stream,
            queries: 0,
            anchor: None,
        })
    }

    pub fn undefended(model: &'m Classifier) -> Self {
        QueryOracle {
            model,
            noise: None,
            stream: crate::rng::stream(0),
            queries: 0,
            anchor: None,
        }
    }

    /// Number of queries answered so far.
    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.model.classes()
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    fn perturb(&mut self, p: &[f64]) -> Vec<f64> {
        match &self.noise {
            None => p.to_vec(),
            Some(n) => p.iter().zip(n.sample(&mut self.stream)).map(|(a, e)| a + e).collect(),
        }
    }

    /// One query: `d(f(x))`, or `f(x)` when undefended.
    pub fn query(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.model.forward(x)?;
        self.queries += 1;
        Ok(self.perturb(p.as_slice()))
    }

    /// `k` independent queries at the same input. The model is deterministic,
    /// so `f(x)` is computed once and perturbed `k` times.
    pub fn query_many(&mut self, x: &[f64], k: usize) -> Result<Vec<Vec<f64>>> {
        let p = self.model.forward(x)?;
        self.queries += k as u64;
        Ok((0..k).map(|_| self.perturb(p.as_slice())).collect())
    }

    /// `k` queries at `x` with coordinate `i` replaced by `value`. Same
    /// answers as `query_many` up to rounding; the model side reuses work
    /// across probes that share the base point.
    pub fn query_many_probe(&mut self, x: &[f64], i: usize, value: f64, k: usize) -> Result<Vec<Vec<f64>>> {
        if i >= x.len() {
            return Err(Error::invalid(format!("coordinate {i} out of range")));
        }
        let stale = !matches!(&self.anchor, Some((a, _)) if a.as_slice() == x);
        if stale {
            let pre = self.model.first_pre_activation(x)?;
            self.anchor = Some((x.to_vec(), pre));
        }
        let pre = &self.anchor.as_ref().unwrap().1;
        let logits = self.model.logits_from_shifted_pre(pre, i, value - x[i]);
        let p = crate::prob::softmax(&logits);
        self.queries += k as u64;
        Ok((0..k).map(|_| self.perturb(&p)).collect())
    }

    /// Componentwise mean of `k` independent queries.
    pub fn averaged_query(&mut self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(Error::invalid("averaged_query needs k >= 1"));
        }
        let outs = self.query_many(x, k)?;
        let mut mean = vec![0.0; self.classes()];
        for o in &outs {
            mean.iter_mut().zip(o).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= k as f64);
        Ok(mean)
    }

    /// Clean label of `x`. For adjudicating results only: it is not a query
    /// and attacks never consult it while searching.
    pub fn referee_label(&self, x: &[f64]) -> Result<usize> {
        self.model.predict(x)
    }
}
