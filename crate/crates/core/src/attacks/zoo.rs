use rand::seq::index;

use super::{adjudicate, fd_coordinate_gradient, observe, AttackConfig, AttackResult, CoordinateAdam};
use crate::error::{Error, Result};
use crate::loss::{squared_distance, AttackGoal};
use crate::oracle::QueryOracle;
use crate::rng;

const C_UPPER_SENTINEL: f64 = 1e10;

/// Zeroth-order coordinate descent with per-coordinate ADAM and a binary
/// search over the loss weight `c`.
///
/// Each inner iteration observes the current point (success test and
/// objective), then estimates `coord_batch` coordinates of the loss gradient
/// by symmetric differences and applies one ADAM step to each. Every round
/// restarts from `x0` with fresh moments. The smallest-l2 point the attacker
/// observed as adversarial is returned.
pub fn zoo_attack(
    oracle: &mut QueryOracle<'_>,
    x0: &[f64],
    goal: AttackGoal,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    cfg.validate()?;
    let n = x0.len();
    if n != oracle.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.input_dim(),
            actual: n,
        });
    }
    let start = oracle.queries();
    let iters = cfg.effective_iters();
    if iters == 0 || cfg.binary_search_steps == 0 {
        return adjudicate(oracle, x0, None, goal, 0, 0);
    }
    let k = cfg.avg_samples;
    let batch = cfg.coord_batch.min(n);
    let check_every = (iters / 10).max(1);
    let loss = |out: &[f64]| goal.loss(out, cfg.kappa);
    let mut stream = rng::derive_stream(seed, &[0x200]);

    let (mut lower, mut upper, mut c) = (0.0, C_UPPER_SENTINEL, cfg.c_init);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations_run = 0;

    for _round in 0..cfg.binary_search_steps {
        let mut x = x0.to_vec();
        let mut adam = CoordinateAdam::new(n, cfg.adam);
        let mut round_success = false;
        let mut prev = f64::INFINITY;

        for it in 0..iters {
            let seen = observe(oracle, &x, k)?;
            let dist = squared_distance(&x, x0);
            if goal.is_met_with_margin(&seen, cfg.kappa) {
                round_success = true;
                if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                    best = Some((dist, x.clone()));
                }
            }
            if cfg.abort_early && it % check_every == 0 {
                let objective = dist + c * loss(&seen)?;
                if objective > prev * 0.9999 {
                    break;
                }
                prev = objective;
            }

            let coords = index::sample(&mut stream, n, batch);
            let mut grads = Vec::with_capacity(batch);
            for i in coords.iter() {
                let est = fd_coordinate_gradient(oracle, &loss, &x, i, cfg.h, k, cfg.averaging)?;
                grads.push((i, c * est.scalar() + 2.0 * (x[i] - x0[i])));
            }
            for (i, g) in grads {
                x[i] = (x[i] - adam.step(i, g)).clamp(0.0, 1.0);
            }
            iterations_run += 1;
        }

        if round_success {
            upper = upper.min(c);
            c = (lower + upper) / 2.0;
        } else {
            lower = lower.max(c);
            c = if upper < C_UPPER_SENTINEL {
                (lower + upper) / 2.0
            } else {
                c * 2.0
            };
        }
    }

    let used = oracle.queries() - start;
    adjudicate(oracle, x0, best.map(|(_, x)| x), goal, used, iterations_run)
}
