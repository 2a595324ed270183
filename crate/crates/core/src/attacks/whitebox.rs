use super::{adjudicate, AttackConfig, AttackResult, AveragingMode, CoordinateAdam};
use crate::defense::NoiseModel;
use crate::error::{Error, Result};
use crate::loss::{squared_distance, AttackGoal};
use crate::model::Classifier;
use crate::oracle::QueryOracle;
use crate::rng;

/// Gradient-descent attack on the distortion-penalised objective using
/// backpropagated gradients. Outputs still come from the (possibly
/// randomized) endpoint; the additive noise is a constant offset in the
/// backward pass. With `avg_samples = k > 1` the loss gradient is averaged
/// over `k` draws. Same binary search over `c` as [`super::zoo_attack`].
pub fn whitebox_attack(
    model: &Classifier,
    noise: Option<&NoiseModel>,
    x0: &[f64],
    goal: AttackGoal,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    cfg.validate()?;
    let n = x0.len();
    if n != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: n,
        });
    }
    let mut oracle = QueryOracle::new(model, noise.cloned(), rng::derive_stream(seed, &[0xdef]))?;
    let iters = cfg.effective_iters();
    if iters == 0 || cfg.binary_search_steps == 0 {
        return adjudicate(&oracle, x0, None, goal, 0, 0);
    }
    let k = cfg.avg_samples;
    let classes = model.classes();
    let check_every = (iters / 10).max(1);

    let (mut lower, mut upper, mut c): (f64, f64, f64) = (0.0, 1e10, cfg.c_init);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations_run = 0;

    for _round in 0..cfg.binary_search_steps {
        let mut x = x0.to_vec();
        let mut adam = CoordinateAdam::new(n, cfg.adam);
        let mut round_success = false;
        let mut prev = f64::INFINITY;

        for it in 0..iters {
            let outs = oracle.query_many(&x, k)?;
            let mut mean = vec![0.0; classes];
            for o in &outs {
                mean.iter_mut().zip(o).for_each(|(m, v)| *m += v / k as f64);
            }
            let dist = squared_distance(&x, x0);
            if goal.is_met_with_margin(&mean, cfg.kappa) {
                round_success = true;
                if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                    best = Some((dist, x.clone()));
                }
            }

            let (loss, grad_loss) = if oracle.noise().is_none_or(NoiseModel::is_silent) {
                let logits = model.logits(&x)?;
                let probs = crate::prob::softmax(&logits);
                let dz = goal.loss_gradient_logits(&probs, cfg.kappa)?;
                let loss = goal.loss_from_log_probs(&crate::prob::log_softmax(&logits), cfg.kappa)?;
                (loss, model.input_gradient_from_logits(&x, &dz)?)
            } else {
                let (loss, dp) = match cfg.averaging {
                    AveragingMode::Loss => {
                        let mut dp = vec![0.0; classes];
                        let mut loss = 0.0;
                        for o in &outs {
                            loss += goal.loss(o, cfg.kappa)? / k as f64;
                            let g = goal.loss_gradient(o, cfg.kappa)?;
                            dp.iter_mut().zip(g).for_each(|(d, v)| *d += v / k as f64);
                        }
                        (loss, dp)
                    }
                    AveragingMode::Output => (goal.loss(&mean, cfg.kappa)?, goal.loss_gradient(&mean, cfg.kappa)?),
                };
                (loss, model.input_gradient_from_probs(&x, &dp)?)
            };

            if cfg.abort_early && it % check_every == 0 {
                let objective = dist + c * loss;
                if objective > prev * 0.9999 {
                    break;
                }
                prev = objective;
            }
            for i in 0..n {
                let g = c * grad_loss[i] + 2.0 * (x[i] - x0[i]);
                x[i] = (x[i] - adam.step(i, g)).clamp(0.0, 1.0);
            }
            iterations_run += 1;
        }

        if round_success {
            upper = upper.min(c);
            c = (lower + upper) / 2.0;
        } else {
            lower = lower.max(c);
            c = if upper < 1e10 { (lower + upper) / 2.0 } else { c * 2.0 };
        }
    }

    let used = oracle.queries();
    adjudicate(&oracle, x0, best.map(|(_, x)| x), goal, used, iterations_run)
}
