use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::invalid("ADAM needs lr > 0, betas in [0,1), eps > 0"));
        }
        Ok(())
    }
}

/// ADAM with an independent step counter per coordinate, so that updating a
/// subset of coordinates leaves the others' moments and bias correction
/// untouched.
#[derive(Debug, Clone)]
pub struct CoordinateAdam {
    params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: Vec<i32>,
}

impl CoordinateAdam {
    pub fn new(dim: usize, params: AdamParams) -> Self {
        CoordinateAdam {
            params,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: vec![0; dim],
        }
    }

    /// Returns the step to subtract from coordinate `i` given gradient `g`.
    pub fn step(&mut self, i: usize, g: f64) -> f64 {
        let AdamParams { lr, beta1, beta2, eps } = self.params;
        self.t[i] += 1;
        self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
        self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
        let corr = (1.0 - beta2.powi(self.t[i])).sqrt() / (1.0 - beta1.powi(self.t[i]));
        lr * corr * self.m[i] / (self.v[i].sqrt() + eps)
    }
}
