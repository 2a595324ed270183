//! Gradient estimators and attack loops.

mod adam;
mod gradient;
mod ql;
mod whitebox;
mod zoo;

pub use adam::{AdamParams, CoordinateAdam};
pub use gradient::{
    fd_coordinate_gradient, nes_estimate, nes_estimate_along, nes_gradient, observe_loss, symmetric_difference,
    GradientEstimate,
};
pub use ql::ql_attack;
pub use whitebox::whitebox_attack;
pub use zoo::zoo_attack;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::loss::AttackGoal;
use crate::oracle::QueryOracle;

/// How an adaptive attacker combines `k` queries at one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AveragingMode {
    /// Mean of the loss over the `k` outputs.
    #[default]
    Loss,
    /// Loss of the mean output.
    Output,
}

impl FromStr for AveragingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(AveragingMode::Loss),
            "output" => Ok(AveragingMode::Output),
            other => Err(Error::invalid(format!("unknown averaging mode `{other}`"))),
        }
    }
}

impl fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AveragingMode::Loss => "loss",
            AveragingMode::Output => "output",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Zoo,
    Ql,
    Whitebox,
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zoo" => Ok(AttackKind::Zoo),
            "ql" => Ok(AttackKind::Ql),
            "whitebox" => Ok(AttackKind::Whitebox),
            other => Err(Error::invalid(format!("unknown attack `{other}`"))),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Zoo => "zoo",
            AttackKind::Ql => "ql",
            AttackKind::Whitebox => "whitebox",
        })
    }
}

/// Hyperparameters shared by every attack. Each attack reads the fields it
/// needs.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Confidence margin of the adversarial loss.
    pub kappa: f64,
    /// Initial weight of the loss term against distortion.
    pub c_init: f64,
    pub binary_search_steps: usize,
    pub adam: AdamParams,
    /// Coordinates estimated per ZOO iteration.
    pub coord_batch: usize,
    /// Inner iterations per binary-search round (ZOO, white box) or PGD steps
    /// (QL), before the adaptive doubling.
    pub max_iters: usize,
    /// Stop a round once the objective stalls, checked every tenth of the
    /// iteration budget.
    pub abort_early: bool,
    /// PGD step size.
    pub eta: f64,
    /// NES search standard deviation.
    pub sigma_search: f64,
    /// NES search directions per estimate.
    pub nes_samples: usize,
    /// l∞ radius of the QL feasible ball.
    pub eps_budget: f64,
    /// Queries averaged per evaluation; 1 is the non-adaptive attacker.
    pub avg_samples: usize,
    pub averaging: AveragingMode,
    /// Adaptive attackers (`avg_samples > 1`) run twice the iterations.
    pub adaptive_doubles_iterations: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            h: 1e-4,
            kappa: 0.0,
            c_init: 1.0,
            binary_search_steps: 9,
            adam: AdamParams::default(),
            coord_batch: 128,
            max_iters: 100,
            abort_early: true,
            eta: 0.01,
            sigma_search: 1e-3,
            nes_samples: 50,
            eps_budget: 0.3,
            avg_samples: 1,
            averaging: AveragingMode::Loss,
            adaptive_doubles_iterations: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.h > 0.0) {
            return bad("h must be > 0");
        }
        if !(self.kappa >= 0.0) || !(self.c_init > 0.0) {
            return bad("kappa must be >= 0 and c_init > 0");
        }
        if self.nes_samples == 0 {
            return bad("nes_samples must be >= 1");
        }
        if !(self.sigma_search > 0.0) || !(self.eta > 0.0) {
            return bad("sigma_search and eta must be > 0");
        }
        if !(self.eps_budget >= 0.0) {
            return bad("eps_budget must be >= 0");
        }
        if self.avg_samples == 0 {
            return bad("avg_samples must be >= 1");
        }
        if self.coord_batch == 0 {
            return bad("coord_batch must be >= 1");
        }
        self.adam.validate()
    }

    /// Iteration budget after the adaptive doubling.
    pub fn effective_iters(&self) -> usize {
        if self.avg_samples > 1 && self.adaptive_doubles_iterations {
            self.max_iters * 2
        } else {
            self.max_iters
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub success: bool,
    pub adversarial_example: Vec<f64>,
    pub l2_distortion: f64,
    pub linf_distortion: f64,
    pub queries: u64,
    pub iterations_run: usize,
    /// Clean-model label of `adversarial_example`.
    pub final_label: usize,
}

/// Builds the reported result for `candidate`. A run is a success only when
/// the attacker found a candidate it believes adversarial *and* the clean
/// model agrees; noise-induced flips are not credited.
pub(crate) fn adjudicate(
    oracle: &QueryOracle<'_>,
    x0: &[f64],
    candidate: Option<Vec<f64>>,
    goal: AttackGoal,
    queries: u64,
    iterations_run: usize,
) -> Result<AttackResult> {
    let found = candidate.is_some();
    let x = candidate.unwrap_or_else(|| x0.to_vec());
    let final_label = oracle.referee_label(&x)?;
    Ok(AttackResult {
        success: found && goal.is_met_by(final_label),
        l2_distortion: crate::loss::squared_distance(&x, x0).sqrt(),
        linf_distortion: x.iter().zip(x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        adversarial_example: x,
        queries,
        iterations_run,
        final_label,
    })
}

/// Observed output used for the attacker's own success test: the mean of
/// `k` queries.
pub(crate) fn observe(oracle: &mut QueryOracle<'_>, x: &[f64], k: usize) -> Result<Vec<f64>> {
    oracle.averaged_query(x, k)
}
