mod common;

use outrand::data::{BlobSpec, Dataset};
use outrand::defense::NoiseModel;
use outrand::harness::evaluate_accuracy;
use outrand::model::{train_classifier, Classifier, TrainConfig};

fn three_blobs() -> Dataset {
    BlobSpec {
        means: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.9]],
        per_cluster: 100,
        spread: 0.08,
        seed: 4,
    }
    .generate()
    .unwrap()
}

/// Multiclass perceptron. Returns weights with zero training errors when it
/// finds them, which certifies linear separability.
fn perceptron_certificate(data: &Dataset) -> Option<Vec<[f64; 3]>> {
    let mut w = vec![[0.0; 3]; data.classes];
    let score = |w: &[f64; 3], x: &[f64]| w[0] * x[0] + w[1] * x[1] + w[2];
    for _ in 0..10_000 {
        let mut errors = 0;
        for e in &data.examples {
            let pred = (0..data.classes)
                .max_by(|a, b| score(&w[*a], &e.pixels).total_cmp(&score(&w[*b], &e.pixels)))
                .unwrap();
            if pred != e.label {
                errors += 1;
                for (j, v) in [e.pixels[0], e.pixels[1], 1.0].iter().enumerate() {
                    w[e.label][j] += v;
                    w[pred][j] -= v;
                }
            }
        }
        if errors == 0 {
            return Some(w);
        }
    }
    None
}

#[test]
fn separable_blobs_are_learned() {
    let data = three_blobs();
    assert_eq!(data.len(), 300);
    assert!(
        perceptron_certificate(&data).is_some(),
        "blobs are not linearly separable"
    );
    let cfg = TrainConfig {
        hidden: vec![16],
        epochs: 50,
        ..TrainConfig::default()
    };
    let model = train_classifier(&data, &cfg).unwrap();
    let acc = common::accuracy(&model, &data);
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn digits_model_generalises() {
    let acc = common::accuracy(common::digits_model(), common::digits_test());
    assert!(acc >= 0.90, "test accuracy {acc}");
}

#[test]
fn zero_epochs_returns_the_initialisation() {
    let data = three_blobs();
    let cfg = TrainConfig {
        hidden: vec![5],
        epochs: 0,
        seed: 12,
        ..TrainConfig::default()
    };
    assert_eq!(
        train_classifier(&data, &cfg).unwrap(),
        Classifier::init(2, &[5], 3, 12).unwrap()
    );
}

#[test]
fn training_is_bit_reproducible() {
    let data = three_blobs();
    let cfg = TrainConfig {
        hidden: vec![6],
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train_classifier(&data, &cfg).unwrap();
    let b = train_classifier(&data, &cfg).unwrap();
    assert_eq!(a.to_checkpoint_string(), b.to_checkpoint_string());
}

#[test]
fn empty_training_set_is_rejected() {
    let data = Dataset::new("empty", vec![], 2, 3).unwrap();
    assert!(train_classifier(&data, &TrainConfig::default()).is_err());
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    common::blob_model().save(&p).unwrap();
    assert_eq!(&Classifier::load(&p).unwrap(), common::blob_model());
}

#[test]
fn accuracy_under_silent_and_small_noise() {
    let data = common::blobs();
    let m = common::blob_model();
    let clean = evaluate_accuracy(m, &data, None, 0).unwrap();
    assert_eq!(clean, common::accuracy(m, &data));
    let silent = NoiseModel::isotropic(3, 0.0).unwrap();
    assert_eq!(evaluate_accuracy(m, &data, Some(&silent), 5).unwrap(), clean);
    let small = NoiseModel::isotropic(3, 1e-4).unwrap();
    let mean = (0..30)
        .map(|s| evaluate_accuracy(m, &data, Some(&small), s).unwrap())
        .sum::<f64>()
        / 30.0;
    assert!((mean - clean).abs() <= 0.01, "{mean} vs {clean}");
}

#[test]
fn softmax_edge_cases() {
    use outrand::prob::softmax;
    assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    let p = softmax(&[2f64.ln(), 0.0]);
    assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    let p = softmax(&[1000.0, 0.0]);
    assert!(p.iter().all(|v| v.is_finite()) && p[0] == 1.0);
}
