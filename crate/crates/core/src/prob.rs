use crate::error::{Error, Result};

/// Tolerance on the unit-sum invariant.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A model output over C classes: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        if let Some((i, &v)) = probs.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("probability entry {i} is {v}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    /// Softmax of `logits`, evaluated with max subtraction.
    pub fn from_logits(logits: &[f64]) -> Self {
        ProbVector(softmax(logits))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// `p₁ = max p`.
    pub fn top(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Entries sorted so that `p₁ ≥ p₂ ≥ … ≥ p_C`.
    pub fn sorted_desc(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    /// Confidence gaps `δ_i = p₁ − p_i` in class order.
    pub fn gaps(&self) -> Vec<f64> {
        let top = self.top();
        self.0.iter().map(|p| top - p).collect()
    }

    /// Indices of the largest and runner-up entries (lowest index on ties).
    pub fn top_two(&self) -> (usize, usize) {
        top_two(&self.0)
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn top_two(values: &[f64]) -> (usize, usize) {
    let first = argmax(values);
    let mut second = if first == 0 { 1 } else { 0 };
    for (i, &v) in values.iter().enumerate() {
        if i != first && v > values[second] {
            second = i;
        }
    }
    (first, second)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
