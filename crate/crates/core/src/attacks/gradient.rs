use rand_distr::{Distribution, StandardNormal};

use super::AveragingMode;
use crate::error::{Error, Result};
use crate::oracle::QueryOracle;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// Per-coordinate estimate for ZOO (length one), full vector for NES.
    pub g: Vec<f64>,
    pub queries_used: u64,
}

impl GradientEstimate {
    pub fn scalar(&self) -> f64 {
        self.g[0]
    }
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` with both points clipped to `[0,1]`.
pub fn symmetric_difference<F>(mut f: F, x: &[f64], i: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if i >= x.len() {
        return Err(Error::invalid(format!("coordinate {i} out of range")));
    }
    let mut probe = x.to_vec();
    probe[i] = (x[i] + h).min(1.0);
    let up = f(&probe)?;
    probe[i] = (x[i] - h).max(0.0);
    let down = f(&probe)?;
    Ok((up - down) / (2.0 * h))
}

/// Loss at `x` as seen by an attacker averaging `k` queries.
pub fn observe_loss<L>(oracle: &mut QueryOracle<'_>, x: &[f64], k: usize, mode: AveragingMode, loss: &L) -> Result<f64>
where
    L: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    reduce(&oracle.query_many(x, k)?, mode, loss)
}

fn reduce<L>(outs: &[Vec<f64>], mode: AveragingMode, loss: &L) -> Result<f64>
where
    L: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    let k = outs.len() as f64;
    if outs.len() == 1 {
        return loss(&outs[0]);
    }
    match mode {
        AveragingMode::Loss => {
            let mut total = 0.0;
            for o in outs {
                total += loss(o)?;
            }
            Ok(total / k)
        }
        AveragingMode::Output => {
            let mut mean = vec![0.0; outs[0].len()];
            for o in outs {
                mean.iter_mut().zip(o).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= k);
            loss(&mean)
        }
    }
}

/// ZOO's per-coordinate estimate through the oracle; `2k` queries. Same
/// formula as `symmetric_difference`.
pub fn fd_coordinate_gradient<L>(
    oracle: &mut QueryOracle<'_>,
    loss: &L,
    x: &[f64],
    i: usize,
    h: f64,
    k: usize,
    mode: AveragingMode,
) -> Result<GradientEstimate>
where
    L: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    if !(h > 0.0) {
        return Err(Error::invalid("h must be > 0"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if i >= x.len() {
        return Err(Error::invalid(format!("coordinate {i} out of range")));
    }
    let before = oracle.queries();
    let up = reduce(&oracle.query_many_probe(x, i, (x[i] + h).min(1.0), k)?, mode, loss)?;
    let down = reduce(&oracle.query_many_probe(x, i, (x[i] - h).max(0.0), k)?, mode, loss)?;
    let g = (up - down) / (2.0 * h);
    Ok(GradientEstimate {
        g: vec![g],
        queries_used: oracle.queries() - before,
    })
}

/// NES estimate along explicit search directions:
/// `Σ_i [f(x + σu_i) − f(x − σu_i)]·u_i / (2mσ)`.
pub fn nes_estimate_along<F>(mut f: F, x: &[f64], sigma: f64, directions: &[Vec<f64>]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let m = directions.len();
    if m == 0 || !(sigma > 0.0) {
        return Err(Error::invalid("NES needs at least one direction and sigma > 0"));
    }
    let mut g = vec![0.0; x.len()];
    let mut probe = vec![0.0; x.len()];
    for u in directions {
        if u.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: u.len(),
            });
        }
        probe
            .iter_mut()
            .zip(x)
            .zip(u)
            .for_each(|((p, xi), ui)| *p = xi + sigma * ui);
        let up = f(&probe)?;
        probe
            .iter_mut()
            .zip(x)
            .zip(u)
            .for_each(|((p, xi), ui)| *p = xi - sigma * ui);
        let down = f(&probe)?;
        let w = (up - down) / (2.0 * m as f64 * sigma);
        g.iter_mut().zip(u).for_each(|(gi, ui)| *gi += w * ui);
    }
    Ok(g)
}

/// NES estimate with `m` standard-normal directions drawn from `stream`.
pub fn nes_estimate<F>(f: F, x: &[f64], sigma: f64, m: usize, stream: &mut Stream) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let directions: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..x.len()).map(|_| StandardNormal.sample(stream)).collect())
        .collect();
    nes_estimate_along(f, x, sigma, &directions)
}

/// QL's full-gradient estimate through the oracle; `2mk` queries.
#[allow(clippy::too_many_arguments)]
pub fn nes_gradient<L>(
    oracle: &mut QueryOracle<'_>,
    loss: &L,
    x: &[f64],
    sigma: f64,
    m: usize,
    stream: &mut Stream,
    k: usize,
    mode: AveragingMode,
) -> Result<GradientEstimate>
where
    L: Fn(&[f64]) -> Result<f64> + ?Sized,
{
    let before = oracle.queries();
    let g = nes_estimate(|z| observe_loss(oracle, z, k, mode, loss), x, sigma, m, stream)?;
    Ok(GradientEstimate {
        g,
        queries_used: oracle.queries() - before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defense::NoiseModel;
    use crate::model::Classifier;
    use crate::rng;

    #[test]
    fn constant_loss_has_zero_gradient() {
        let x = [0.2, 0.5, 0.9];
        for i in 0..3 {
            assert_eq!(symmetric_difference(|_| Ok(4.2), &x, i, 1e-4).unwrap(), 0.0);
        }
        let g = nes_estimate(|_| Ok(4.2), &x, 0.01, 10, &mut rng::stream(1)).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn symmetric_difference_is_exact_for_quadratics() {
        let x = [0.7, 0.3];
        for h in [0.1, 0.05, 1e-2, 1e-3] {
            let g = symmetric_difference(|z| Ok(z[1] * z[1]), &x, 1, h).unwrap();
            assert!((g - 0.6).abs() < 1e-12, "h={h}: {g}");
        }
    }

    #[test]
    fn single_forced_direction() {
        let x = [0.4, 0.6, 0.1];
        let sigma = 0.01;
        let g = nes_estimate_along(|z| Ok(z[0]), &x, sigma, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert_eq!(&g[1..], &[0.0, 0.0]);
    }

    #[test]
    fn query_accounting() {
        let m = Classifier::init(4, &[5], 3, 2).unwrap();
        let noise = NoiseModel::isotropic(3, 1e-3).unwrap();
        let mut o = QueryOracle::new(&m, Some(noise), rng::stream(9)).unwrap();
        let loss = |out: &[f64]| crate::loss::untargeted_loss(out, 0, 0.0);
        let x = [0.5; 4];
        let e = fd_coordinate_gradient(&mut o, &loss, &x, 2, 1e-4, 3, AveragingMode::Loss).unwrap();
        assert_eq!(e.queries_used, 6);
        let e = nes_gradient(
            &mut o,
            &loss,
            &x,
            1e-3,
            5,
            &mut rng::stream(1),
            2,
            AveragingMode::Output,
        )
        .unwrap();
        assert_eq!(e.queries_used, 20);
        assert_eq!(e.g.len(), 4);
        assert_eq!(o.queries(), 26);
    }
}
