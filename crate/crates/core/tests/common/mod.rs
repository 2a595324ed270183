#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use outrand::data::{load_idx, BlobSpec, Dataset};
use outrand::model::{train_classifier, Classifier, TrainConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn digits_paths(split: &str) -> (PathBuf, PathBuf) {
    let d = data_dir();
    (
        d.join(format!("digits-{split}-images.idx")),
        d.join(format!("digits-{split}-labels.idx")),
    )
}

pub fn digits_ref(split: &str) -> String {
    let (i, l) = digits_paths(split);
    format!("idx:{},{}", i.display(), l.display())
}

pub fn digits(split: &str) -> Dataset {
    let (i, l) = digits_paths(split);
    load_idx(&i, &l, 10).unwrap()
}

pub fn digits_train_config() -> TrainConfig {
    TrainConfig {
        hidden: vec![64],
        epochs: 30,
        learning_rate: 0.1,
        batch_size: 32,
        seed: 1,
    }
}

/// The desk-scale digits MLP shared by the attack tests.
pub fn digits_model() -> &'static Classifier {
    static MODEL: OnceLock<Classifier> = OnceLock::new();
    MODEL.get_or_init(|| train_classifier(&digits("train"), &digits_train_config()).unwrap())
}

pub fn digits_test() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| digits("test"))
}

pub fn blobs() -> Dataset {
    BlobSpec::random_means(3, 8, 150, 0.06, 5).generate().unwrap()
}

pub fn blob_model() -> &'static Classifier {
    static MODEL: OnceLock<Classifier> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = TrainConfig {
            hidden: vec![16],
            epochs: 40,
            ..TrainConfig::default()
        };
        train_classifier(&blobs(), &cfg).unwrap()
    })
}

pub fn accuracy(model: &Classifier, data: &Dataset) -> f64 {
    let hits = data
        .examples
        .iter()
        .filter(|e| model.predict(&e.pixels).unwrap() == e.label)
        .count();
    hits as f64 / data.len() as f64
}
