//! Result rows and their CSV form.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::GoalKind;
use crate::attacks::AttackKind;
use crate::error::{Error, Result};

pub const SCHEMA_TAG: &str = "# outrand-results v1";

pub const COLUMNS: &[&str] = &[
    "experiment",
    "attack",
    "goal",
    "sigma2",
    "avg_samples",
    "run",
    "asr",
    "accuracy",
    "mean_l2_distortion",
    "mean_queries",
    "grad_divergence",
    "target_k",
    "delta",
    "wall_time",
];

/// One grid cell. Fields that do not apply to an experiment kind are `None`
/// and render as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub attack: Option<AttackKind>,
    pub goal: Option<GoalKind>,
    pub sigma2: f64,
    pub avg_samples: Option<usize>,
    pub run: usize,
    pub asr: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_l2_distortion: Option<f64>,
    pub mean_queries: Option<f64>,
    pub grad_divergence: Option<f64>,
    pub target_k: Option<f64>,
    pub delta: Option<f64>,
    /// Seconds. Informational; excluded from determinism checks.
    pub wall_time: f64,
}

impl ResultRow {
    pub fn new(experiment: &str, sigma2: f64, run: usize) -> ResultRow {
        ResultRow {
            experiment: experiment.to_string(),
            attack: None,
            goal: None,
            sigma2,
            avg_samples: None,
            run,
            asr: None,
            accuracy: None,
            mean_l2_distortion: None,
            mean_queries: None,
            grad_divergence: None,
            target_k: None,
            delta: None,
            wall_time: 0.0,
        }
    }

    pub fn to_csv_line(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut line = String::new();
        let cells = [
            escape(&self.experiment),
            opt(self.attack),
            opt(self.goal),
            self.sigma2.to_string(),
            opt(self.avg_samples),
            self.run.to_string(),
            opt(self.asr),
            opt(self.accuracy),
            opt(self.mean_l2_distortion),
            opt(self.mean_queries),
            opt(self.grad_divergence),
            opt(self.target_k),
            opt(self.delta),
        ];
        for cell in cells {
            write!(line, "{cell},").unwrap();
        }
        write!(line, "{:.3}", self.wall_time).unwrap();
        line
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{SCHEMA_TAG}\n{}\n", COLUMNS.join(","));
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Writes to a temporary file beside `path`, then renames over it, so
/// readers never see a partial file.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(render_csv(rows).as_bytes())?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(&tmp, e));
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// The CSV text with the wall-time column blanked, for comparing reruns.
pub fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| match l.rsplit_once(',') {
            Some((head, _)) if !l.starts_with('#') => head,
            _ => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
