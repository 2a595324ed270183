mod common;

use outrand::attacks::*;
use outrand::defense::NoiseModel;
use outrand::loss;
use outrand::oracle::QueryOracle;
use outrand::rng;

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn doubling_k_halves_fd_variance() {
    let model = common::digits_model();
    // a probe whose runner-up is far above the noise scale, so no draw hits the log floor
    let e = common::digits_test()
        .examples
        .iter()
        .find(|e| model.forward(&e.pixels).unwrap().sorted_desc()[1] > 0.05)
        .unwrap();
    let label = model.predict(&e.pixels).unwrap();
    let l = |out: &[f64]| loss::untargeted_loss(out, label, 0.0);
    let noise = NoiseModel::isotropic(10, 1e-6).unwrap();
    let mut o = QueryOracle::new(model, Some(noise), rng::stream(5)).unwrap();
    let i = 20;
    let mut prev = None;
    for k in [1, 2, 4, 8] {
        let g: Vec<f64> = (0..4000)
            .map(|_| {
                fd_coordinate_gradient(&mut o, &l, &e.pixels, i, 1e-4, k, AveragingMode::Loss)
                    .unwrap()
                    .scalar()
            })
            .collect();
        let v = variance(&g);
        if let Some(p) = prev {
            let ratio: f64 = p / v;
            assert!((ratio - 2.0).abs() <= 0.4, "k={k}: ratio {ratio}");
        }
        prev = Some(v);
    }
}

#[test]
fn fd_matches_backprop_on_the_blob_model() {
    let m = common::blob_model();
    let data = common::blobs();
    let mut ok = 0;
    let mut total = 0;
    for (j, e) in data.examples.iter().step_by(9).enumerate() {
        let label = m.predict(&e.pixels).unwrap();
        let goal = loss::AttackGoal::Untargeted { original: label };
        let out = m.forward(&e.pixels).unwrap().into_vec();
        let dl = goal.loss_gradient(&out, f64::INFINITY).unwrap();
        let exact = m.input_gradient_from_probs(&e.pixels, &dl).unwrap();
        let i = j % m.input_dim();
        let x = &e.pixels;
        if x[i] < 1e-4 || x[i] > 1.0 - 1e-4 {
            continue;
        }
        let mut o = QueryOracle::undefended(m);
        let l = |out: &[f64]| loss::untargeted_loss(out, label, f64::INFINITY);
        let g = fd_coordinate_gradient(&mut o, &l, x, i, 1e-4, 1, AveragingMode::Loss)
            .unwrap()
            .scalar();
        total += 1;
        if (g - exact[i]).abs() <= 1e-3 * exact[i].abs().max(1e-6) {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.9 * total as f64, "{ok}/{total}");
}

#[test]
fn nes_is_unbiased_for_linear_losses() {
    let a = [0.7, -1.3, 0.2, 2.0];
    let x = [0.5; 4];
    let f = |z: &[f64]| Ok(z.iter().zip(&a).map(|(v, w)| v * w).sum::<f64>());
    let runs = 2000;
    let est: Vec<Vec<f64>> = (0..runs)
        .map(|r| nes_estimate(f, &x, 1e-3, 10, &mut rng::derive_stream(42, &[r])).unwrap())
        .collect();
    for c in 0..4 {
        let col: Vec<f64> = est.iter().map(|g| g[c]).collect();
        let mean = col.iter().sum::<f64>() / runs as f64;
        let se = (variance(&col) / runs as f64).sqrt();
        assert!((mean - a[c]).abs() <= 3.0 * se, "coord {c}: {mean} vs {}", a[c]);
    }
}

#[test]
fn nes_query_count_scales_with_m_and_k() {
    let m = common::blob_model();
    let x = common::blobs().examples[0].pixels.clone();
    let l = |out: &[f64]| loss::untargeted_loss(out, 0, 0.0);
    for (samples, k) in [(1, 1), (4, 3), (10, 2)] {
        let mut o = QueryOracle::new(m, Some(NoiseModel::isotropic(3, 1e-3).unwrap()), rng::stream(1)).unwrap();
        let g = nes_gradient(
            &mut o,
            &l,
            &x,
            1e-3,
            samples,
            &mut rng::stream(2),
            k,
            AveragingMode::Loss,
        )
        .unwrap();
        assert_eq!(g.queries_used, 2 * samples as u64 * k as u64);
        assert_eq!(o.queries(), g.queries_used);
    }
}
