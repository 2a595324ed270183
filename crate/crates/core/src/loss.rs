//! Adversarial losses and the distortion-penalised attack objective.
//!
//! Losses take any output vector: a clean softmax output or a randomized one
//! whose entries can be zero or negative. Logs of entries below
//! [`LOG_FLOOR`] are taken at the floor.

use crate::error::{Error, Result};
use crate::prob::argmax;

pub const LOG_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackGoal {
    /// Leave the original class.
    Untargeted { original: usize },
    /// Reach class `target`.
    Targeted { target: usize },
}

impl AttackGoal {
    pub fn class(&self) -> usize {
        match *self {
            AttackGoal::Untargeted { original } => original,
            AttackGoal::Targeted { target } => target,
        }
    }

    /// Whether a predicted label satisfies the goal.
    pub fn is_met_by(&self, label: usize) -> bool {
        match *self {
            AttackGoal::Untargeted { original } => label != original,
            AttackGoal::Targeted { target } => label == target,
        }
    }

    /// Eq. (1)/(2) style loss of `out` for this goal.
    pub fn loss(&self, out: &[f64], kappa: f64) -> Result<f64> {
        match *self {
            AttackGoal::Untargeted { original } => untargeted_loss(out, original, kappa),
            AttackGoal::Targeted { target } => targeted_loss(out, target, kappa),
        }
    }

    /// Same loss evaluated from log-probabilities such as a log-softmax.
    pub fn loss_from_log_probs(&self, logp: &[f64], kappa: f64) -> Result<f64> {
        let k = self.class();
        check(logp, k)?;
        let other = logp
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let raw = match self {
            AttackGoal::Untargeted { .. } => logp[k] - other,
            AttackGoal::Targeted { .. } => other - logp[k],
        };
        Ok(raw.max(-kappa))
    }

    /// Goal met on `out` with log-margin at least `kappa`.
    pub fn is_met_with_margin(&self, out: &[f64], kappa: f64) -> bool {
        if !self.is_met_by(argmax(out)) {
            return false;
        }
        kappa <= 0.0 || self.raw_margin(out) <= -kappa
    }

    /// Loss before the `-κ` clamp.
    pub fn raw_margin(&self, out: &[f64]) -> f64 {
        let (k, j) = self.pivot(out);
        match *self {
            AttackGoal::Untargeted { .. } => safe_log(out[k]) - safe_log(out[j]),
            AttackGoal::Targeted { .. } => safe_log(out[j]) - safe_log(out[k]),
        }
    }

    /// `(goal class, strongest competing class)`.
    fn pivot(&self, out: &[f64]) -> (usize, usize) {
        let k = self.class();
        let mut best = usize::MAX;
        for (j, v) in out.iter().enumerate() {
            if j != k && (best == usize::MAX || *v > out[best]) {
                best = j;
            }
        }
        (k, best)
    }

    /// `∂L/∂out` for [`AttackGoal::loss`]. Floored entries and the clamped
    /// region have zero derivative.
    pub fn loss_gradient(&self, out: &[f64], kappa: f64) -> Result<Vec<f64>> {
        check(out, self.class())?;
        let mut g = vec![0.0; out.len()];
        if self.raw_margin(out) <= -kappa {
            return Ok(g);
        }
        let (k, j) = self.pivot(out);
        let d = |v: f64| if v > LOG_FLOOR { 1.0 / v } else { 0.0 };
        let sign = match self {
            AttackGoal::Untargeted { .. } => 1.0,
            AttackGoal::Targeted { .. } => -1.0,
        };
        g[k] = sign * d(out[k]);
        g[j] = -sign * d(out[j]);
        Ok(g)
    }

    /// `∂L/∂logits` when `out = softmax(logits)` and no noise is present.
    pub fn loss_gradient_logits(&self, probs: &[f64], kappa: f64) -> Result<Vec<f64>> {
        check(probs, self.class())?;
        let mut g = vec![0.0; probs.len()];
        if self.raw_margin(probs) <= -kappa {
            return Ok(g);
        }
        let (k, j) = self.pivot(probs);
        let sign = match self {
            AttackGoal::Untargeted { .. } => 1.0,
            AttackGoal::Targeted { .. } => -1.0,
        };
        g[k] = sign;
        g[j] = -sign;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub kappa: f64,
    pub c: f64,
}

impl LossParams {
    pub fn new(kappa: f64, c: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !(c >= 0.0) {
            return Err(Error::invalid("kappa and c must be >= 0"));
        }
        Ok(LossParams { kappa, c })
    }
}

#[inline]
pub fn safe_log(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

fn check(out: &[f64], class: usize) -> Result<()> {
    if out.len() < 2 {
        return Err(Error::invalid("losses need at least two classes"));
    }
    if class >= out.len() {
        return Err(Error::invalid(format!(
            "class {class} out of range for {} outputs",
            out.len()
        )));
    }
    Ok(())
}

/// `max{ max_{i≠t}(log out_i − log out_t), −κ }`.
pub fn targeted_loss(out: &[f64], target: usize, kappa: f64) -> Result<f64> {
    check(out, target)?;
    Ok((safe_log(max_excluding(out, target)) - safe_log(out[target])).max(-kappa))
}

/// `max{ log out_i − max_{j≠i} log out_j, −κ }` for the original class `i`.
pub fn untargeted_loss(out: &[f64], original: usize, kappa: f64) -> Result<f64> {
    check(out, original)?;
    Ok((safe_log(out[original]) - safe_log(max_excluding(out, original))).max(-kappa))
}

// log is monotone, so the max of logs is the log of the max
fn max_excluding(out: &[f64], skip: usize) -> f64 {
    out.iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `log(out_i / max_{j≠i} out_j)` without the clamp.
pub fn simplified_untargeted_loss(out: &[f64], original: usize) -> Result<f64> {
    untargeted_loss(out, original, f64::INFINITY)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `‖x − x₀‖₂² + c·L(out)`, where `out` is the oracle's response at `x`.
pub fn zoo_objective(x: &[f64], x0: &[f64], goal: AttackGoal, params: LossParams, out: &[f64]) -> Result<f64> {
    if x.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            actual: x.len(),
        });
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfBox { index, value });
    }
    let dist = squared_distance(x, x0);
    if params.c == 0.0 {
        return Ok(dist);
    }
    Ok(dist + params.c * goal.loss(out, params.kappa)?)
}
