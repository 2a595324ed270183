//! Flat `key = value` experiment files.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Lists
//! are comma separated. Keys use underscores; the CLI accepts the same keys
//! with dashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ExperimentKind, ExperimentSpec, GoalKind};
use crate::attacks::AttackConfig;
use crate::data::{BlobSpec, DatasetSource};
use crate::error::{Error, Result};

pub type ConfigMap = BTreeMap<String, String>;

/// Every key an experiment file may set.
pub const KEYS: &[&str] = &[
    "id",
    "kind",
    "dataset",
    "model",
    "attack",
    "goal",
    "sigma2",
    "avg_samples",
    "images",
    "repeats",
    "seed",
    "out",
    "mode",
    "target_k",
    "delta",
    "samples",
    "h",
    "kappa",
    "c_init",
    "binary_search_steps",
    "learning_rate",
    "coord_batch",
    "max_iters",
    "abort_early",
    "eta",
    "sigma_search",
    "nes_samples",
    "eps_budget",
    "averaging",
    "double_iters",
];

pub fn parse_config(text: &str, origin: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Spec(format!("{origin}:{}: expected `key = value`", n + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Spec(format!("{origin}:{}: unknown key `{key}`", n + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Spec(format!("{origin}:{}: `{key}` set twice", n + 1)));
        }
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Spec(format!("bad value `{raw}` for `{key}`")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw.split(',').map(|v| value(key, v)).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Spec(format!("`{key}` must not be empty")));
    }
    Ok(items)
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Spec(format!("bad value `{raw}` for `{key}`"))),
    }
}

/// `idx:IMAGES,LABELS[,CLASSES]`, `csv:PATH[,CLASSES]` or
/// `blobs:CLASSES,DIM,PER_CLUSTER,SPREAD,SEED`. Classes default to 10.
pub fn parse_dataset_ref(raw: &str) -> Result<DatasetSource> {
    let bad = || Error::Spec(format!("bad dataset reference `{raw}`"));
    let (scheme, rest) = raw.split_once(':').ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
    let classes = |i: usize| -> Result<usize> { parts.get(i).map_or(Ok(10), |v| v.parse().map_err(|_| bad())) };
    match scheme {
        "idx" if (2..=3).contains(&parts.len()) => Ok(DatasetSource::Idx {
            images: PathBuf::from(parts[0]),
            labels: PathBuf::from(parts[1]),
            classes: classes(2)?,
        }),
        "csv" if (1..=2).contains(&parts.len()) => Ok(DatasetSource::Csv {
            path: PathBuf::from(parts[0]),
            classes: classes(1)?,
        }),
        "blobs" if parts.len() == 5 => {
            let n = |i: usize| parts[i].parse::<usize>().map_err(|_| bad());
            let spread: f64 = parts[3].parse().map_err(|_| bad())?;
            let seed: u64 = parts[4].parse().map_err(|_| bad())?;
            Ok(DatasetSource::Blobs(BlobSpec::random_means(
                n(0)?,
                n(1)?,
                n(2)?,
                spread,
                seed,
            )))
        }
        _ => Err(bad()),
    }
}

impl ExperimentSpec {
    pub fn from_map(map: &ConfigMap) -> Result<ExperimentSpec> {
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Spec(format!("unknown key `{k}`")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let mut spec = ExperimentSpec::default();
        if let Some(v) = get("kind") {
            spec.kind = value("kind", v)?;
        }
        if spec.kind == ExperimentKind::AdaptiveAveraging {
            spec.avg_samples = vec![10, 50, 100];
        }
        if let Some(v) = get("id") {
            spec.id = v.to_string();
        }
        if let Some(v) = get("dataset") {
            spec.dataset = Some(parse_dataset_ref(v)?);
        }
        if let Some(v) = get("model") {
            spec.model = Some(PathBuf::from(v));
        }
        if let Some(v) = get("attack") {
            spec.attack = value("attack", v)?;
        }
        if let Some(v) = get("goal") {
            spec.goal = value("goal", v)?;
        }
        if let Some(v) = get("sigma2") {
            spec.sigma2 = list("sigma2", v)?;
        }
        if let Some(v) = get("avg_samples") {
            spec.avg_samples = list("avg_samples", v)?;
        }
        if let Some(v) = get("images") {
            spec.images = value("images", v)?;
        }
        if let Some(v) = get("repeats") {
            spec.repeats = value("repeats", v)?;
        }
        if let Some(v) = get("seed") {
            spec.seed = value("seed", v)?;
        }
        if let Some(v) = get("out") {
            spec.out = Some(PathBuf::from(v));
        }
        if let Some(v) = get("mode") {
            spec.mode = value("mode", v)?;
        }
        if let Some(v) = get("target_k") {
            spec.target_k = list("target_k", v)?;
        }
        if let Some(v) = get("delta") {
            spec.delta = list("delta", v)?;
        }
        if let Some(v) = get("samples") {
            spec.samples = value("samples", v)?;
        }
        apply_attack_keys(&mut spec.attack_config, map)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        ExperimentSpec::from_map(&load_config(path)?)
    }
}

fn apply_attack_keys(cfg: &mut AttackConfig, map: &ConfigMap) -> Result<()> {
    for (key, raw) in map {
        match key.as_str() {
            "h" => cfg.h = value(key, raw)?,
            "kappa" => cfg.kappa = value(key, raw)?,
            "c_init" => cfg.c_init = value(key, raw)?,
            "binary_search_steps" => cfg.binary_search_steps = value(key, raw)?,
            "learning_rate" => cfg.adam.lr = value(key, raw)?,
            "coord_batch" => cfg.coord_batch = value(key, raw)?,
            "max_iters" => cfg.max_iters = value(key, raw)?,
            "abort_early" => cfg.abort_early = flag(key, raw)?,
            "eta" => cfg.eta = value(key, raw)?,
            "sigma_search" => cfg.sigma_search = value(key, raw)?,
            "nes_samples" => cfg.nes_samples = value(key, raw)?,
            "eps_budget" => cfg.eps_budget = value(key, raw)?,
            "averaging" => cfg.averaging = value(key, raw)?,
            "double_iters" => cfg.adaptive_doubles_iterations = flag(key, raw)?,
            _ => {}
        }
    }
    cfg.validate()
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown experiment kind `{s}`")))
    }
}

impl FromStr for GoalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "untargeted" => Ok(GoalKind::Untargeted),
            "targeted" => Ok(GoalKind::Targeted),
            other => Err(Error::Spec(format!("unknown goal `{other}`"))),
        }
    }
}
