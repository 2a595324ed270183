//! How much output noise corrupts a finite-difference gradient.
//!
//! Everything here uses the two-term loss `L(q) = log q_a − log q_b`, where
//! `a` and `b` are the top two classes of the clean vector the loss is
//! evaluated around. Each side of the quotient keeps its own pair.
//!
//! Draws that push any of the four log arguments to `≤ 1e-30` are rejected
//! and counted instead of floored, since flooring would bias the mean.

use crate::defense::NoiseModel;
use crate::error::{Error, Result};
use crate::loss::{self, LOG_FLOOR};
use crate::model::Classifier;
use crate::prob;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct GradErrorReport {
    /// `g_i` on the clean outputs.
    pub g_clean: f64,
    /// Mean of `γ_i`, estimated with common noise on both sides plus
    /// antithetic draws. Same expectation as independent draws, far lower
    /// variance.
    pub gamma_mean: f64,
    /// Mean of `γ_i` over independent `(ε, ε′)` pairs.
    pub gamma_mean_independent: f64,
    /// `|g_i − mean γ_i|`, the quantity the closed form approximates.
    pub empirical_error: f64,
    /// `mean |g_i − γ_i|` over independent pairs. Upper envelope of the above.
    pub mean_abs_error: f64,
    /// Standard deviation of `γ_i` over independent pairs.
    pub gamma_sd: f64,
    pub taylor_error: f64,
    pub samples: usize,
    pub rejected: usize,
    pub sigma2: f64,
    pub h: f64,
    pub p: Vec<f64>,
    pub p_prime: Vec<f64>,
}

impl GradErrorReport {
    pub fn rejection_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.rejected as f64 / self.samples as f64
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                sd: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, sd, n }
    }
}

/// The closed-form second-order approximation
/// `|σ²/(4h)·((σ² + p₂² + p₁′²)/(p₁′²p₂²) − (σ² + p₂′² + p₁²)/(p₁²p₂′²))|`.
pub fn taylor_gradient_error(p: (f64, f64), p_prime: (f64, f64), sigma2: f64, h: f64) -> Result<f64> {
    let (p1, p2) = p;
    let (q1, q2) = p_prime;
    for v in [p1, p2, q1, q2] {
        if v == 0.0 {
            return Err(Error::ZeroProbability(v));
        }
        if !(0.0..1.0).contains(&v) {
            return Err(Error::invalid(format!("probability {v} outside (0,1)")));
        }
    }
    if !(h > 0.0) || sigma2 < 0.0 {
        return Err(Error::invalid("need h > 0 and sigma2 >= 0"));
    }
    let first = (sigma2 + p2 * p2 + q1 * q1) / (q1 * q1 * p2 * p2);
    let second = (sigma2 + q2 * q2 + p1 * p1) / (p1 * p1 * q2 * q2);
    Ok((sigma2 / (4.0 * h) * (first - second)).abs())
}

#[derive(Clone, Copy)]
struct Pair {
    top: usize,
    runner: usize,
}

impl Pair {
    fn of(p: &[f64]) -> Result<Pair> {
        let (top, runner) = prob::top_two(p);
        if p[top] == p[runner] {
            return Err(Error::DegenerateTopTwo);
        }
        Ok(Pair { top, runner })
    }

    fn clean(self, p: &[f64]) -> f64 {
        p[self.top].ln() - p[self.runner].ln()
    }

    /// `None` when either perturbed argument is at or below the floor.
    fn noisy(self, p: &[f64], eps: &[f64]) -> Option<f64> {
        let a = p[self.top] + eps[self.top];
        let b = p[self.runner] + eps[self.runner];
        (a > LOG_FLOOR && b > LOG_FLOOR).then(|| a.ln() - b.ln())
    }
}

fn probe_outputs(model: &Classifier, x: &[f64], i: usize, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if i >= x.len() {
        return Err(Error::invalid(format!("coordinate {i} out of range")));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("h must be > 0"));
    }
    let mut z = x.to_vec();
    z[i] = x[i] + h;
    let p = model.forward(&z)?.into_vec();
    z[i] = x[i] - h;
    let q = model.forward(&z)?.into_vec();
    Ok((p, q))
}

/// Monte Carlo measurement of the defense-induced error in `g_i`, with `N`
/// draws.
pub fn empirical_gradient_error(
    model: &Classifier,
    noise: &NoiseModel,
    x: &[f64],
    i: usize,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<GradErrorReport> {
    empirical_gradient_error_averaged(model, noise, x, i, h, samples, 1, seed)
}

/// As [`empirical_gradient_error`], with each side of `γ_i` averaging the
/// loss over `k` draws.
#[allow(clippy::too_many_arguments)]
pub fn empirical_gradient_error_averaged(
    model: &Classifier,
    noise: &NoiseModel,
    x: &[f64],
    i: usize,
    h: f64,
    samples: usize,
    k: usize,
    seed: u64,
) -> Result<GradErrorReport> {
    if samples == 0 || k == 0 {
        return Err(Error::invalid("need at least one sample and k >= 1"));
    }
    if noise.classes() != model.classes() {
        return Err(Error::DimensionMismatch {
            expected: model.classes(),
            actual: noise.classes(),
        });
    }
    let (p, q) = probe_outputs(model, x, i, h)?;
    let (a, b) = (Pair::of(&p)?, Pair::of(&q)?);
    let g = (a.clean(&p) - b.clean(&q)) / (2.0 * h);
    let two_h = 2.0 * h;

    let side = |pair: Pair, v: &[f64], s: &mut Stream| -> Option<f64> {
        let mut total = 0.0;
        for _ in 0..k {
            total += pair.noisy(v, &noise.sample(s))?;
        }
        Some(total / k as f64)
    };

    let mut s = rng::derive_stream(seed, &[1]);
    let mut gammas = Vec::with_capacity(samples);
    let mut rejected = 0;
    for _ in 0..samples {
        match (side(a, &p, &mut s), side(b, &q, &mut s)) {
            (Some(u), Some(d)) => gammas.push((u - d) / two_h),
            _ => rejected += 1,
        }
    }
    let indep = Summary::of(&gammas);
    let mean_abs_error = gammas.iter().map(|v| (g - v).abs()).sum::<f64>() / gammas.len().max(1) as f64;

    // Coupled estimate: the same ε on both sides, and its reflection about μ.
    let mut s = rng::derive_stream(seed, &[2]);
    let mut coupled = 0.0;
    let mut kept = 0usize;
    let mu = noise.mu();
    for _ in 0..samples.div_ceil(2) {
        let draws: Vec<Vec<f64>> = (0..k).map(|_| noise.sample(&mut s)).collect();
        for sign in [1.0, -1.0] {
            let mut total = 0.0;
            let mut ok = true;
            for e in &draws {
                let e: Vec<f64> = e.iter().zip(mu).map(|(v, m)| m + sign * (v - m)).collect();
                match (a.noisy(&p, &e), b.noisy(&q, &e)) {
                    (Some(u), Some(d)) => total += u - d,
                    _ => ok = false,
                }
            }
            if ok {
                coupled += total / k as f64 / two_h;
                kept += 1;
            }
        }
    }
    let gamma_mean = if kept > 0 { coupled / kept as f64 } else { f64::NAN };

    let taylor_error = taylor_gradient_error(
        (p[a.top], p[a.runner]),
        (q[b.top], q[b.runner]),
        isotropic_variance(noise)?,
        h,
    )?;
    Ok(GradErrorReport {
        g_clean: g,
        gamma_mean,
        gamma_mean_independent: indep.mean,
        empirical_error: (g - gamma_mean).abs(),
        mean_abs_error,
        gamma_sd: indep.sd,
        taylor_error,
        samples,
        rejected,
        sigma2: isotropic_variance(noise)?,
        h,
        p,
        p_prime: q,
    })
}

// The closed form assumes one shared variance.
fn isotropic_variance(noise: &NoiseModel) -> Result<f64> {
    let s = noise.sigma2();
    if s.iter().any(|v| *v != s[0]) {
        return Err(Error::invalid("closed-form error needs isotropic noise"));
    }
    Ok(s[0])
}

/// L2 distance between the clean FD gradient over `coords` and the one an
/// attacker sees through the defense (one draw per query), over
/// `repetitions` independent repetitions.
///
/// The loss is the unclamped untargeted loss for the clean label at `x`,
/// with the attacker's log floor; probes are clipped to the box.
pub fn gradient_l2_divergence(
    model: &Classifier,
    noise: &NoiseModel,
    x: &[f64],
    coords: &[usize],
    h: f64,
    repetitions: usize,
    seed: u64,
) -> Result<Summary> {
    if coords.is_empty() || repetitions == 0 {
        return Err(Error::invalid(
            "need a non-empty coordinate set and at least one repetition",
        ));
    }
    if let Some(i) = coords.iter().find(|i| **i >= x.len()) {
        return Err(Error::invalid(format!("coordinate {i} out of range")));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("h must be > 0"));
    }
    let label = model.predict(x)?;
    let mut outputs = Vec::with_capacity(coords.len());
    let mut clean = Vec::with_capacity(coords.len());
    for &i in coords {
        let mut z = x.to_vec();
        z[i] = (x[i] + h).min(1.0);
        let up = model.forward(&z)?.into_vec();
        z[i] = (x[i] - h).max(0.0);
        let down = model.forward(&z)?.into_vec();
        clean.push(
            (loss::simplified_untargeted_loss(&up, label)? - loss::simplified_untargeted_loss(&down, label)?)
                / (2.0 * h),
        );
        outputs.push((up, down));
    }
    let mut s = rng::derive_stream(seed, &[3]);
    let mut norms = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut sq = 0.0;
        for ((up, down), g) in outputs.iter().zip(&clean) {
            let u: Vec<f64> = up.iter().zip(noise.sample(&mut s)).map(|(v, e)| v + e).collect();
            let d: Vec<f64> = down.iter().zip(noise.sample(&mut s)).map(|(v, e)| v + e).collect();
            let gamma = (loss::simplified_untargeted_loss(&u, label)? - loss::simplified_untargeted_loss(&d, label)?)
                / (2.0 * h);
            sq += (g - gamma) * (g - gamma);
        }
        norms.push(sq.sqrt());
    }
    Ok(Summary::of(&norms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Classifier {
        Classifier::init(6, &[8], 4, 17).unwrap()
    }

    #[test]
    fn worked_example() {
        // term1 = 0.4501/0.0324, term2 = 0.6501/0.0784, prefactor 0.25
        let v = taylor_gradient_error((0.7, 0.3), (0.6, 0.4), 1e-4, 1e-4).unwrap();
        assert!((v - 1.3999708679768).abs() < 1e-9, "{v}");
    }

    #[test]
    fn closed_form_zero_cases() {
        assert_eq!(taylor_gradient_error((0.7, 0.3), (0.6, 0.4), 0.0, 1e-4).unwrap(), 0.0);
        assert_eq!(
            taylor_gradient_error((0.55, 0.2), (0.55, 0.2), 1e-3, 1e-4).unwrap(),
            0.0
        );
        assert!(matches!(
            taylor_gradient_error((0.7, 0.0), (0.6, 0.4), 1e-4, 1e-4),
            Err(Error::ZeroProbability(_))
        ));
    }

    #[test]
    fn closed_form_is_linear_in_small_variance() {
        for s2 in [1e-9, 1e-8, 1e-7, 5e-7] {
            let a = taylor_gradient_error((0.62, 0.21), (0.58, 0.25), s2, 1e-4).unwrap();
            let b = taylor_gradient_error((0.62, 0.21), (0.58, 0.25), 2.0 * s2, 1e-4).unwrap();
            assert!((b / a - 2.0).abs() < 0.02, "{s2}: {}", b / a);
        }
    }

    #[test]
    fn silent_noise_gives_zero_error() {
        let m = model();
        let x = [0.2, 0.4, 0.6, 0.8, 0.1, 0.3];
        let r = empirical_gradient_error(&m, &NoiseModel::isotropic(4, 0.0).unwrap(), &x, 2, 1e-4, 50, 1).unwrap();
        assert_eq!(r.empirical_error, 0.0);
        assert_eq!(r.gamma_sd, 0.0);
        assert_eq!(r.taylor_error, 0.0);
        assert_eq!(r.rejected, 0);
        let d = gradient_l2_divergence(&m, &NoiseModel::isotropic(4, 0.0).unwrap(), &x, &[0, 3], 1e-4, 5, 1).unwrap();
        assert_eq!(d.mean, 0.0);
    }

    #[test]
    fn equal_outputs_mean_zero_gradient() {
        // a coordinate the model ignores: p = p′, so g_i = 0 and the closed form is 0
        let mut layers = model().layers().to_vec();
        for row in layers[0].weights.chunks_exact_mut(6) {
            row[0] = 0.0;
        }
        let m = Classifier::from_layers(layers).unwrap();
        let x = [0.5; 6];
        let r = empirical_gradient_error(&m, &NoiseModel::isotropic(4, 1e-4).unwrap(), &x, 0, 1e-4, 10, 3).unwrap();
        assert_eq!(r.p, r.p_prime);
        assert_eq!(r.g_clean, 0.0);
        assert_eq!(r.taylor_error, 0.0);
    }

    #[test]
    fn single_coordinate_divergence_is_absolute_error() {
        let m = model();
        let x = [0.2, 0.4, 0.6, 0.8, 0.1, 0.3];
        let noise = NoiseModel::isotropic(4, 1e-3).unwrap();
        let d = gradient_l2_divergence(&m, &noise, &x, &[4], 1e-4, 1, 9).unwrap();
        let label = m.predict(&x).unwrap();
        let mut z = x.to_vec();
        z[4] = x[4] + 1e-4;
        let up = m.forward(&z).unwrap().into_vec();
        z[4] = x[4] - 1e-4;
        let down = m.forward(&z).unwrap().into_vec();
        let l = |v: &[f64]| loss::simplified_untargeted_loss(v, label).unwrap();
        let g = (l(&up) - l(&down)) / 2e-4;
        let mut s = rng::derive_stream(9, &[3]);
        let u: Vec<f64> = up.iter().zip(noise.sample(&mut s)).map(|(v, e)| v + e).collect();
        let dn: Vec<f64> = down.iter().zip(noise.sample(&mut s)).map(|(v, e)| v + e).collect();
        let gamma = (l(&u) - l(&dn)) / 2e-4;
        assert!((d.mean - (g - gamma).abs()).abs() < 1e-9 * d.mean.max(1.0));
    }

    #[test]
    fn averaging_shrinks_spread_not_bias() {
        let m = model();
        let x = [0.2, 0.4, 0.6, 0.8, 0.1, 0.3];
        let noise = NoiseModel::isotropic(4, 1e-5).unwrap();
        let one = empirical_gradient_error_averaged(&m, &noise, &x, 1, 1e-4, 20_000, 1, 4).unwrap();
        let four = empirical_gradient_error_averaged(&m, &noise, &x, 1, 1e-4, 20_000, 4, 4).unwrap();
        let ratio = (one.gamma_sd / four.gamma_sd).powi(2);
        assert!((ratio - 4.0).abs() < 0.8, "variance ratio {ratio}");
        let tol = 0.1 * one.empirical_error + 4.0 * four.gamma_sd / 20_000f64.sqrt();
        assert!((one.empirical_error - four.empirical_error).abs() < tol);
    }

    #[test]
    fn larger_variance_larger_error() {
        let m = model();
        let x = [0.2, 0.4, 0.6, 0.8, 0.1, 0.3];
        let small =
            empirical_gradient_error(&m, &NoiseModel::isotropic(4, 1e-4).unwrap(), &x, 3, 1e-4, 100_000, 5).unwrap();
        let large =
            empirical_gradient_error(&m, &NoiseModel::isotropic(4, 1e-2).unwrap(), &x, 3, 1e-4, 100_000, 5).unwrap();
        assert!(large.empirical_error > small.empirical_error);
        assert!(large.mean_abs_error > small.mean_abs_error);
    }

    #[test]
    fn degenerate_top_two_is_an_error() {
        // all-zero parameters give a uniform output
        let mut layers = model().layers().to_vec();
        for l in layers.iter_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let m = Classifier::from_layers(layers).unwrap();
        let r = empirical_gradient_error(&m, &NoiseModel::isotropic(4, 1e-4).unwrap(), &[0.5; 6], 0, 1e-4, 10, 1);
        assert!(matches!(r, Err(Error::DegenerateTopTwo)));
    }
}
