//! Seeded experiment runner.
//!
//! An experiment is a grid (noise variance, and for adaptive runs the
//! number of averaged queries) crossed with repeats. Every cell gets its own
//! seed derived from the root seed, the experiment id and the cell indices,
//! so a rerun reproduces the CSV byte for byte apart from wall time.
//!
//! Attack experiments use the first `images` examples of the dataset that
//! the clean model classifies correctly.

mod config;
mod results;

pub use config::{load_config, parse_config, parse_dataset_ref, ConfigMap, KEYS};
pub use results::{render_csv, strip_wall_time, write_results, ResultRow, COLUMNS, SCHEMA_TAG};

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;

use crate::analysis;
use crate::attacks::{ql_attack, whitebox_attack, zoo_attack, AttackConfig, AttackKind, AttackResult};
use crate::data::{load_dataset, Dataset, DatasetSource, Example};
use crate::defense::{calibrate_variance, CalibrationMode, NoiseModel};
use crate::error::{Error, Result};
use crate::loss::AttackGoal;
use crate::model::Classifier;
use crate::oracle::QueryOracle;
use crate::rng::{self, derive_seed, label_hash};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "OUTRAND_OUT_DIR";

pub const DEFAULT_SIGMA2: [f64; 5] = [0.0, 1e-6, 1e-4, 1e-2, 5.76e-2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    AsrVsVariance,
    AdaptiveAveraging,
    AccuracyVsVariance,
    GradErrorVsVariance,
    CalibrationCurve,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::AsrVsVariance,
        ExperimentKind::AdaptiveAveraging,
        ExperimentKind::AccuracyVsVariance,
        ExperimentKind::GradErrorVsVariance,
        ExperimentKind::CalibrationCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AsrVsVariance => "asr_vs_variance",
            ExperimentKind::AdaptiveAveraging => "adaptive_averaging",
            ExperimentKind::AccuracyVsVariance => "accuracy_vs_variance",
            ExperimentKind::GradErrorVsVariance => "grad_error_vs_variance",
            ExperimentKind::CalibrationCurve => "calibration_curve",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalKind {
    Untargeted,
    Targeted,
}

impl fmt::Display for GoalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GoalKind::Untargeted => "untargeted",
            GoalKind::Targeted => "targeted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Folded into every seed and written to each row.
    pub id: String,
    pub kind: ExperimentKind,
    pub dataset: Option<DatasetSource>,
    /// Checkpoint path.
    pub model: Option<PathBuf>,
    pub attack: AttackKind,
    pub goal: GoalKind,
    pub sigma2: Vec<f64>,
    pub avg_samples: Vec<usize>,
    pub images: usize,
    pub repeats: usize,
    pub seed: u64,
    /// CSV destination; see [`ExperimentSpec::out_path`].
    pub out: Option<PathBuf>,
    pub mode: CalibrationMode,
    /// Calibration targets for `calibration_curve`.
    pub target_k: Vec<f64>,
    /// Confidence gaps for `calibration_curve`.
    pub delta: Vec<f64>,
    /// Defended-gradient draws per image for `grad_error_vs_variance`.
    pub samples: usize,
    pub attack_config: AttackConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            id: "experiment".into(),
            kind: ExperimentKind::AsrVsVariance,
            dataset: None,
            model: None,
            attack: AttackKind::Zoo,
            goal: GoalKind::Untargeted,
            sigma2: DEFAULT_SIGMA2.to_vec(),
            avg_samples: vec![1],
            images: 100,
            repeats: 30,
            seed: 0,
            out: None,
            mode: CalibrationMode::Corrected,
            target_k: vec![0.005, 0.01, 0.1, 0.2],
            delta: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            samples: 10,
            attack_config: AttackConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        if self.sigma2.is_empty() || self.avg_samples.is_empty() || self.target_k.is_empty() || self.delta.is_empty() {
            return bad("grids must not be empty");
        }
        if self.sigma2.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("sigma2 values must be finite and >= 0");
        }
        if self.avg_samples.contains(&0) {
            return bad("avg_samples values must be >= 1");
        }
        if self.images == 0 || self.repeats == 0 || self.samples == 0 {
            return bad("images, repeats and samples must be >= 1");
        }
        if self.id.is_empty() {
            return bad("id must not be empty");
        }
        self.attack_config.validate()
    }

    /// `out` if set, otherwise `<id>.csv` in `$OUTRAND_OUT_DIR` (default
    /// `results`).
    pub fn out_path(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from);
            dir.join(format!("{}.csv", self.id))
        })
    }
}

/// Fraction of `data` whose released output (after the defense, when
/// present) has its argmax on the true label.
pub fn evaluate_accuracy(model: &Classifier, data: &Dataset, noise: Option<&NoiseModel>, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut oracle = QueryOracle::new(model, noise.cloned(), rng::stream(seed))?;
    let mut correct = 0usize;
    for e in &data.examples {
        if crate::prob::argmax(&oracle.query(&e.pixels)?) == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Runs one attack of `kind`. Black-box attacks get an oracle whose noise
/// stream is seeded by `noise_seed`; the white-box attack derives its own
/// from `attack_seed`.
pub fn run_attack(
    kind: AttackKind,
    model: &Classifier,
    noise: Option<&NoiseModel>,
    x0: &[f64],
    goal: AttackGoal,
    cfg: &AttackConfig,
    noise_seed: u64,
    attack_seed: u64,
) -> Result<AttackResult> {
    match kind {
        AttackKind::Whitebox => whitebox_attack(model, noise, x0, goal, cfg, attack_seed),
        _ => {
            let mut oracle = QueryOracle::new(model, noise.cloned(), rng::stream(noise_seed))?;
            if kind == AttackKind::Zoo {
                zoo_attack(&mut oracle, x0, goal, cfg, attack_seed)
            } else {
                ql_attack(&mut oracle, x0, goal, cfg, attack_seed)
            }
        }
    }
}

/// Correctly classified examples, in dataset order, at most `limit`.
pub fn attack_pool<'d>(model: &Classifier, data: &'d Dataset, limit: usize) -> Result<Vec<&'d Example>> {
    let mut pool = Vec::with_capacity(limit);
    for e in &data.examples {
        if pool.len() == limit {
            break;
        }
        if model.predict(&e.pixels)? == e.label {
            pool.push(e);
        }
    }
    Ok(pool)
}

fn noise_for(classes: usize, sigma2: f64) -> Result<Option<NoiseModel>> {
    if sigma2 == 0.0 {
        Ok(None)
    } else {
        NoiseModel::isotropic(classes, sigma2).map(Some)
    }
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    model: &'a Classifier,
    data: &'a Dataset,
    pool: Vec<&'a Example>,
    goals: Vec<AttackGoal>,
}

impl Context<'_> {
    fn cell_seed(&self, path: &[u64]) -> u64 {
        let mut full = vec![label_hash(&self.spec.id)];
        full.extend_from_slice(path);
        derive_seed(self.spec.seed, &full)
    }

    fn attack_cell(&self, row: &mut ResultRow, sigma2: f64, k: usize, seed: u64) -> Result<()> {
        let noise = noise_for(self.model.classes(), sigma2)?;
        let cfg = AttackConfig {
            avg_samples: k,
            ..self.spec.attack_config.clone()
        };
        let (mut wins, mut l2, mut queries) = (0usize, 0.0, 0u64);
        for (j, (e, goal)) in self.pool.iter().zip(&self.goals).enumerate() {
            let image = derive_seed(seed, &[j as u64]);
            let r = run_attack(
                self.spec.attack,
                self.model,
                noise.as_ref(),
                &e.pixels,
                *goal,
                &cfg,
                derive_seed(image, &[0]),
                derive_seed(image, &[1]),
            )?;
            if r.success {
                wins += 1;
                l2 += r.l2_distortion;
            }
            queries += r.queries;
        }
        let n = self.pool.len() as f64;
        row.attack = Some(self.spec.attack);
        row.goal = Some(self.spec.goal);
        row.avg_samples = Some(k);
        row.asr = Some(wins as f64 / n);
        row.mean_l2_distortion = (wins > 0).then(|| l2 / wins as f64);
        row.mean_queries = Some(queries as f64 / n);
        row.accuracy = Some(evaluate_accuracy(
            self.model,
            self.data,
            noise.as_ref(),
            derive_seed(seed, &[u64::MAX]),
        )?);
        Ok(())
    }

    fn grad_cell(&self, row: &mut ResultRow, sigma2: f64, seed: u64) -> Result<()> {
        let noise = NoiseModel::isotropic(self.model.classes(), sigma2)?;
        let coords: Vec<usize> = (0..self.model.input_dim()).collect();
        let mut total = 0.0;
        for (j, e) in self.pool.iter().enumerate() {
            let s = analysis::gradient_l2_divergence(
                self.model,
                &noise,
                &e.pixels,
                &coords,
                self.spec.attack_config.h,
                self.spec.samples,
                derive_seed(seed, &[j as u64]),
            )?;
            total += s.mean;
        }
        row.grad_divergence = Some(total / self.pool.len() as f64);
        Ok(())
    }
}

fn target_for(label: usize, classes: usize, stream: &mut rng::Stream) -> usize {
    let r = stream.random_range(0..classes - 1);
    if r >= label {
        r + 1
    } else {
        r
    }
}

/// Executes the grid in (variance, sample count, repeat) order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if spec.kind == ExperimentKind::CalibrationCurve {
        return calibration_rows(spec);
    }
    let model_path = spec
        .model
        .as_ref()
        .ok_or_else(|| Error::Spec("`model` is required".into()))?;
    let source = spec
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Spec("`dataset` is required".into()))?;
    let model = Classifier::load(model_path)?;
    let data = load_dataset(source)?;
    run_experiment_with(spec, &model, &data)
}

/// As [`run_experiment`], with the model and dataset already resolved.
pub fn run_experiment_with(spec: &ExperimentSpec, model: &Classifier, data: &Dataset) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if spec.kind == ExperimentKind::CalibrationCurve {
        return calibration_rows(spec);
    }
    if data.dim != model.input_dim() || data.classes != model.classes() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: data.dim,
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let uses_pool = matches!(
        spec.kind,
        ExperimentKind::AsrVsVariance | ExperimentKind::AdaptiveAveraging | ExperimentKind::GradErrorVsVariance
    );
    let pool = if uses_pool {
        attack_pool(model, data, spec.images)?
    } else {
        Vec::new()
    };
    if uses_pool && pool.is_empty() {
        return Err(Error::Spec("no correctly classified examples to attack".into()));
    }
    let mut target_stream = rng::derive_stream(spec.seed, &[label_hash(&spec.id), 0x7a49]);
    let goals = pool
        .iter()
        .map(|e| match spec.goal {
            GoalKind::Untargeted => AttackGoal::Untargeted { original: e.label },
            GoalKind::Targeted => AttackGoal::Targeted {
                target: target_for(e.label, model.classes(), &mut target_stream),
            },
        })
        .collect();
    let ctx = Context {
        spec,
        model,
        data,
        pool,
        goals,
    };

    let ks: &[usize] = if spec.kind == ExperimentKind::AdaptiveAveraging {
        &spec.avg_samples
    } else {
        &spec.avg_samples[..1]
    };
    let mut rows = Vec::new();
    for (gi, &sigma2) in spec.sigma2.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            for run in 0..spec.repeats {
                let started = Instant::now();
                let seed = ctx.cell_seed(&[gi as u64, ki as u64, run as u64]);
                let mut row = ResultRow::new(&spec.id, sigma2, run);
                match spec.kind {
                    ExperimentKind::AsrVsVariance | ExperimentKind::AdaptiveAveraging => {
                        ctx.attack_cell(&mut row, sigma2, k, seed)?
                    }
                    ExperimentKind::AccuracyVsVariance => {
                        let noise = noise_for(model.classes(), sigma2)?;
                        row.accuracy = Some(evaluate_accuracy(model, data, noise.as_ref(), seed)?);
                    }
                    ExperimentKind::GradErrorVsVariance => ctx.grad_cell(&mut row, sigma2, seed)?,
                    ExperimentKind::CalibrationCurve => unreachable!(),
                }
                row.wall_time = started.elapsed().as_secs_f64();
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn calibration_rows(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for &k in &spec.target_k {
        for &delta in &spec.delta {
            let started = Instant::now();
            let mut row = ResultRow::new(&spec.id, calibrate_variance(k, delta, spec.mode)?, 0);
            row.target_k = Some(k);
            row.delta = Some(delta);
            row.wall_time = started.elapsed().as_secs_f64();
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs `spec` and writes its CSV; returns the rows and the path written.
pub fn run_and_write(spec: &ExperimentSpec) -> Result<(Vec<ResultRow>, PathBuf)> {
    let rows = run_experiment(spec)?;
    let path = spec.out_path();
    write_results(&path, &rows)?;
    Ok((rows, path))
}
