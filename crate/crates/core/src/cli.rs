//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis;
use crate::attacks::{AttackConfig, AttackKind};
use crate::data::load_dataset;
use crate::defense::{calibrate_variance, CalibrationMode, NoiseModel};
use crate::error::{Error, Result};
use crate::harness::{self, parse_dataset_ref, ConfigMap, ExperimentSpec, GoalKind};
use crate::loss::AttackGoal;
use crate::model::{train_classifier, Classifier, TrainConfig};
use crate::rng;

#[derive(Parser, Debug)]
#[command(
    name = "outrand",
    version,
    about = "Black-box attacks against output-randomized classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Attack one image and print the result.
    Attack(AttackArgs),
    /// Print the noise variance for a target misclassification rate.
    Calibrate(CalibrateArgs),
    /// Measure the defense-induced error of one finite-difference gradient.
    Analyze(AnalyzeArgs),
    /// Run an experiment grid and write its CSV.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// idx:IMAGES,LABELS[,CLASSES] | csv:PATH[,CLASSES] | blobs:C,DIM,N,SPREAD,SEED
    #[arg(long)]
    dataset: String,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_values_t = [64])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "zoo")]
    attack: String,
    #[arg(long, default_value = "untargeted")]
    goal: String,
    /// Target class for targeted attacks; drawn from the wrong classes when
    /// omitted.
    #[arg(long)]
    target: Option<usize>,
    /// Example index in the dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1)]
    avg_samples: usize,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Target misclassification rate, in (0, 0.5).
    #[arg(long)]
    k: f64,
    /// Confidence gap.
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value = "corrected", value_parser = ["paper", "corrected"])]
    mode: String,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Input coordinate to differentiate.
    #[arg(long, default_value_t = 0)]
    coord: usize,
    #[arg(long, default_value_t = 1e-4)]
    sigma2: f64,
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Every experiment key can be set here; flags override the spec file.
#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    attack: Option<String>,
    #[arg(long)]
    goal: Option<String>,
    /// Repeatable.
    #[arg(long)]
    sigma2: Vec<String>,
    /// Repeatable.
    #[arg(long)]
    avg_samples: Vec<String>,
    #[arg(long)]
    images: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Repeatable.
    #[arg(long)]
    target_k: Vec<String>,
    /// Repeatable.
    #[arg(long)]
    delta: Vec<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    c_init: Option<String>,
    #[arg(long)]
    binary_search_steps: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    coord_batch: Option<String>,
    #[arg(long, alias = "iters")]
    max_iters: Option<String>,
    #[arg(long)]
    abort_early: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    sigma_search: Option<String>,
    #[arg(long)]
    nes_samples: Option<String>,
    #[arg(long)]
    eps_budget: Option<String>,
    #[arg(long)]
    averaging: Option<String>,
    #[arg(long)]
    double_iters: Option<String>,
}

impl ExperimentArgs {
    fn overrides(&self) -> ConfigMap {
        let mut map = ConfigMap::new();
        let mut put = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        };
        put("id", &self.id);
        put("kind", &self.kind);
        put("dataset", &self.dataset);
        put("model", &self.model);
        put("attack", &self.attack);
        put("goal", &self.goal);
        put("images", &self.images);
        put("repeats", &self.repeats);
        put("seed", &self.seed);
        put("out", &self.out);
        put("mode", &self.mode);
        put("samples", &self.samples);
        put("h", &self.h);
        put("kappa", &self.kappa);
        put("c_init", &self.c_init);
        put("binary_search_steps", &self.binary_search_steps);
        put("learning_rate", &self.learning_rate);
        put("coord_batch", &self.coord_batch);
        put("max_iters", &self.max_iters);
        put("abort_early", &self.abort_early);
        put("eta", &self.eta);
        put("sigma_search", &self.sigma_search);
        put("nes_samples", &self.nes_samples);
        put("eps_budget", &self.eps_budget);
        put("averaging", &self.averaging);
        put("double_iters", &self.double_iters);
        for (k, v) in [
            ("sigma2", &self.sigma2),
            ("avg_samples", &self.avg_samples),
            ("target_k", &self.target_k),
            ("delta", &self.delta),
        ] {
            if !v.is_empty() {
                map.insert(k.to_string(), v.join(","));
            }
        }
        map
    }
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 2 for usage errors, 1 otherwise.
pub fn cli_dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_cli(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// As [`cli_dispatch`], writing to the given streams.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => {
            let data = load_dataset(&parse_dataset_ref(&a.dataset)?)?;
            let cfg = TrainConfig {
                hidden: a.hidden,
                epochs: a.epochs,
                learning_rate: a.lr,
                batch_size: a.batch_size,
                seed: a.seed,
            };
            let model = train_classifier(&data, &cfg)?;
            let acc = harness::evaluate_accuracy(&model, &data, None, 0)?;
            model.save(&a.out)?;
            writeln!(out, "train_accuracy={acc} checkpoint={}", a.out.display()).map_err(io_err)
        }
        Command::Attack(a) => {
            let data = load_dataset(&parse_dataset_ref(&a.dataset)?)?;
            let model = Classifier::load(&a.model)?;
            let example = data
                .examples
                .get(a.index)
                .ok_or_else(|| Error::invalid(format!("index {} out of range ({} examples)", a.index, data.len())))?;
            let kind: AttackKind = a.attack.parse()?;
            let goal = match a.goal.parse::<GoalKind>()? {
                GoalKind::Untargeted => AttackGoal::Untargeted {
                    original: example.label,
                },
                GoalKind::Targeted => {
                    let target = match a.target {
                        Some(t) => t,
                        None => {
                            use rand::Rng;
                            let r = rng::derive_stream(a.seed, &[2]).random_range(0..model.classes() - 1);
                            r + usize::from(r >= example.label)
                        }
                    };
                    if target >= model.classes() {
                        return Err(Error::invalid(format!("target {target} out of range")));
                    }
                    AttackGoal::Targeted { target }
                }
            };
            let noise = if a.sigma2 > 0.0 {
                Some(NoiseModel::isotropic(model.classes(), a.sigma2)?)
            } else {
                None
            };
            let cfg = AttackConfig {
                max_iters: a.iters,
                avg_samples: a.avg_samples,
                kappa: a.kappa,
                ..Default::default()
            };
            let r = harness::run_attack(
                kind,
                &model,
                noise.as_ref(),
                &example.pixels,
                goal,
                &cfg,
                rng::derive_seed(a.seed, &[0]),
                rng::derive_seed(a.seed, &[1]),
            )?;
            writeln!(
                out,
                "success={} l2_distortion={} linf_distortion={} queries={} iterations={} final_label={} original_label={}",
                r.success, r.l2_distortion, r.linf_distortion, r.queries, r.iterations_run, r.final_label, example.label
            )
            .map_err(io_err)
        }
        Command::Calibrate(a) => {
            let mode: CalibrationMode = a.mode.parse()?;
            let s2 = calibrate_variance(a.k, a.delta, mode)?;
            let text = if s2 >= 1e-3 {
                format!("{s2:.6}")
            } else {
                format!("{s2:.6e}")
            };
            writeln!(out, "{text}").map_err(io_err)
        }
        Command::Analyze(a) => {
            let data = load_dataset(&parse_dataset_ref(&a.dataset)?)?;
            let model = Classifier::load(&a.model)?;
            let example = data
                .examples
                .get(a.index)
                .ok_or_else(|| Error::invalid(format!("index {} out of range", a.index)))?;
            let noise = NoiseModel::isotropic(model.classes(), a.sigma2)?;
            let r =
                analysis::empirical_gradient_error(&model, &noise, &example.pixels, a.coord, a.h, a.samples, a.seed)?;
            writeln!(
                out,
                "g_clean={}\ngamma_mean={}\ngamma_mean_independent={}\nempirical_error={}\nmean_abs_error={}\n\
                 gamma_sd={}\ntaylor_error={}\nsamples={}\nrejected={}\nsigma2={}\nh={}",
                r.g_clean,
                r.gamma_mean,
                r.gamma_mean_independent,
                r.empirical_error,
                r.mean_abs_error,
                r.gamma_sd,
                r.taylor_error,
                r.samples,
                r.rejected,
                r.sigma2,
                r.h
            )
            .map_err(io_err)
        }
        Command::Experiment(a) => {
            let mut map = match &a.spec {
                Some(path) => harness::load_config(path)?,
                None => ConfigMap::new(),
            };
            map.extend(a.overrides());
            let spec = ExperimentSpec::from_map(&map)?;
            let (rows, path) = harness::run_and_write(&spec)?;
            writeln!(out, "wrote {} rows to {}", rows.len(), path.display()).map_err(io_err)
        }
    }
}
