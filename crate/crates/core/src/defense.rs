//! Output randomization `d(p) = p + ε` with Gaussian `ε`, its calibration to
//! a target misclassification rate, and misclassification analysis.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::normal;
use crate::prob::{argmax, ProbVector};
use crate::rng::{self, Stream};

/// Per-class Gaussian noise `ε_i ~ N(μ_i, σ_i²)`, independent across classes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    mu: Vec<f64>,
    sigma2: Vec<f64>,
}

impl NoiseModel {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma2.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                actual: sigma2.len(),
            });
        }
        if let Some(v) = sigma2.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("variance must be finite and >= 0, got {v}")));
        }
        Ok(NoiseModel { mu, sigma2 })
    }

    /// Zero-mean isotropic noise `N(0, σ² I_C)`.
    pub fn isotropic(classes: usize, sigma2: f64) -> Result<Self> {
        NoiseModel::new(vec![0.0; classes], vec![sigma2; classes])
    }

    pub fn classes(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn is_silent(&self) -> bool {
        self.sigma2.iter().all(|v| *v == 0.0) && self.mu.iter().all(|v| *v == 0.0)
    }

    /// One draw of `ε`.
    pub fn sample(&self, stream: &mut Stream) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.sigma2)
            .map(|(m, s2)| {
                if *s2 == 0.0 {
                    *m
                } else {
                    m + s2.sqrt() * stream.sample::<f64, _>(StandardNormal)
                }
            })
            .collect()
    }
}

/// `d(p)`. Entries may be negative and need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedOutput(pub Vec<f64>);

impl RandomizedOutput {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl AsRef<[f64]> for RandomizedOutput {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalibrationMode {
    /// Standardises the noise difference by the sum of variances, as printed
    /// in the original derivation.
    PaperFaithful,
    /// Standardises by the standard deviation of the noise difference.
    #[default]
    Corrected,
}

impl FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper-faithful" => Ok(CalibrationMode::PaperFaithful),
            "corrected" => Ok(CalibrationMode::Corrected),
            other => Err(Error::invalid(format!("unknown calibration mode `{other}`"))),
        }
    }
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibrationMode::PaperFaithful => "paper",
            CalibrationMode::Corrected => "corrected",
        })
    }
}

/// `d(p) = p + ε` with a fresh `ε`; no clipping, no renormalisation.
pub fn randomize_output(p: &[f64], noise: &NoiseModel, stream: &mut Stream) -> Result<RandomizedOutput> {
    if p.len() != noise.classes() {
        return Err(Error::DimensionMismatch {
            expected: noise.classes(),
            actual: p.len(),
        });
    }
    let eps = noise.sample(stream);
    Ok(RandomizedOutput(p.iter().zip(eps).map(|(a, e)| a + e).collect()))
}

/// Probability that the noise lifts class `i` above the top class,
/// `P(d(p)_i > d(p)_1)`, for a confidence gap `delta = p₁ − p_i`.
pub fn pairwise_flip_probability(
    delta: f64,
    mu_top: f64,
    sigma2_top: f64,
    mu_i: f64,
    sigma2_i: f64,
    mode: CalibrationMode,
) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("confidence gap must be >= 0, got {delta}")));
    }
    if sigma2_top < 0.0 || sigma2_i < 0.0 {
        return Err(Error::invalid("variances must be >= 0"));
    }
    let shift = delta - mu_i + mu_top;
    let var = sigma2_i + sigma2_top;
    if var == 0.0 {
        return Ok(match shift.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 0.0,
            Some(std::cmp::Ordering::Less) => 1.0,
            _ => 0.5,
        });
    }
    let scale = match mode {
        CalibrationMode::PaperFaithful => var,
        CalibrationMode::Corrected => var.sqrt(),
    };
    Ok(normal::cdf(-shift / scale))
}

/// Isotropic zero-mean `σ²` for which the pairwise flip probability at gap
/// `delta` equals `k`.
pub fn calibrate_variance(k: f64, delta: f64, mode: CalibrationMode) -> Result<f64> {
    if !(k > 0.0 && k < 0.5) {
        return Err(Error::invalid(format!("target rate K must lie in (0, 0.5), got {k}")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("confidence gap must be > 0, got {delta}")));
    }
    let z = normal::probit(k);
    Ok(match mode {
        CalibrationMode::PaperFaithful => -delta / (2.0 * z),
        CalibrationMode::Corrected => delta * delta / (2.0 * z * z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MisclassificationMethod {
    MonteCarlo {
        draws: usize,
        seed: u64,
    },
    /// Bonferroni bound `min(1, Σ_{i≠top} P(flip_i))`.
    UnionBound,
}

/// Probability that `argmax d(p) ≠ argmax p`.
pub fn misclassification_rate(
    p: &ProbVector,
    noise: &NoiseModel,
    method: MisclassificationMethod,
    mode: CalibrationMode,
) -> Result<f64> {
    let probs = p.as_slice();
    if probs.len() != noise.classes() {
        return Err(Error::DimensionMismatch {
            expected: noise.classes(),
            actual: probs.len(),
        });
    }
    let top = p.argmax();
    match method {
        MisclassificationMethod::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::invalid("Monte Carlo needs at least one draw"));
            }
            let mut s = rng::stream(seed);
            let mut out = vec![0.0; probs.len()];
            let mut flips = 0usize;
            for _ in 0..draws {
                for (c, o) in out.iter_mut().enumerate() {
                    let sd = noise.sigma2[c].sqrt();
                    let e = if sd == 0.0 {
                        0.0
                    } else {
                        sd * s.sample::<f64, _>(StandardNormal)
                    };
                    *o = probs[c] + noise.mu[c] + e;
                }
                if argmax(&out) != top {
                    flips += 1;
                }
            }
            Ok(flips as f64 / draws as f64)
        }
        MisclassificationMethod::UnionBound => {
            let mut total = 0.0;
            for i in (0..probs.len()).filter(|&i| i != top) {
                total += pairwise_flip_probability(
                    probs[top] - probs[i],
                    noise.mu[top],
                    noise.sigma2[top],
                    noise.mu[i],
                    noise.sigma2[i],
                    mode,
                )?;
            }
            Ok(total.min(1.0))
        }
    }
}
