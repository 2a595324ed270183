use super::{adjudicate, nes_gradient, observe, AttackConfig, AttackResult};
use crate::error::{Error, Result};
use crate::loss::AttackGoal;
use crate::oracle::QueryOracle;
use crate::rng;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// NES gradient estimates with sign-PGD steps inside the l∞ ball of radius
/// `eps_budget` around `x0`. Stops as soon as a fresh (averaged) query shows
/// the goal met.
pub fn ql_attack(
    oracle: &mut QueryOracle<'_>,
    x0: &[f64],
    goal: AttackGoal,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    cfg.validate()?;
    if x0.len() != oracle.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.input_dim(),
            actual: x0.len(),
        });
    }
    let start = oracle.queries();
    let iters = cfg.effective_iters();
    if cfg.eps_budget == 0.0 || iters == 0 {
        return adjudicate(oracle, x0, None, goal, 0, 0);
    }
    let k = cfg.avg_samples;
    let loss = |out: &[f64]| goal.loss(out, cfg.kappa);
    let mut stream = rng::derive_stream(seed, &[0x91]);
    let lo: Vec<f64> = x0.iter().map(|v| (v - cfg.eps_budget).max(0.0)).collect();
    let hi: Vec<f64> = x0.iter().map(|v| (v + cfg.eps_budget).min(1.0)).collect();

    let mut x = x0.to_vec();
    let mut found = None;
    let mut steps = 0;
    loop {
        let seen = observe(oracle, &x, k)?;
        if goal.is_met_with_margin(&seen, cfg.kappa) {
            found = Some(x.clone());
            break;
        }
        if steps == iters {
            break;
        }
        let est = nes_gradient(
            oracle,
            &loss,
            &x,
            cfg.sigma_search,
            cfg.nes_samples,
            &mut stream,
            k,
            cfg.averaging,
        )?;
        for (j, g) in est.g.iter().enumerate() {
            x[j] = (x[j] - cfg.eta * sign(*g)).clamp(lo[j], hi[j]);
        }
        steps += 1;
    }

    let used = oracle.queries() - start;
    adjudicate(oracle, x0, found, goal, used, steps)
}
