//! `duplab` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors
//! (unknown flags, malformed values, contradictory settings).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, ExperimentKind, ModelKind};
use super::sweeps::run_and_write;
use crate::datasets::synthetic::SyntheticImageSpec;
use crate::datasets::{LabeledDataset, Origin};
use crate::duplication::{dedup_exact, Selection};
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "duplab", version, about = "Duplication sweeps for SVM and MLP classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-class Gaussian sweep with an RBF SVM.
    Gaussian(SweepArgs),
    /// CIFAR-10 sweep with an MLP, optionally adversarially trained.
    Image(SweepArgs),
    /// Per-class bias/variance probe of duplication on Gaussian data.
    Bvd(SweepArgs),
    /// Drop exact duplicate rows from a dataset CSV.
    Dedup(DedupArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated D-rates in percent.
    #[arg(long, visible_alias = "d-rate", value_name = "LIST")]
    d_rates: Option<String>,
    /// Comma-separated sweep seeds.
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// `uniform` or `biased:<label>=<w>,...`.
    #[arg(long)]
    policy: Option<Selection>,
    #[arg(long, value_parser = ["svm", "mlp"])]
    model: Option<String>,
    /// Train adversarially.
    #[arg(long)]
    adv: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    pgd_steps: Option<usize>,
    #[arg(long)]
    pgd_step_size: Option<f64>,
    #[arg(long)]
    random_start: Option<bool>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    svm_gamma: Option<f64>,
    /// Gaussian training points per class.
    #[arg(long)]
    n_per_class: Option<usize>,
    /// Held-out points per class (Gaussian) or test cap per class (image).
    #[arg(long)]
    test_per_class: Option<usize>,
    /// CIFAR-10 binary directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generate synthetic CIFAR-layout batches instead of reading `--data`.
    #[arg(long)]
    synthetic: bool,
    /// Comma-separated CIFAR-10 class ids.
    #[arg(long, value_name = "LIST")]
    classes: Option<String>,
    #[arg(long)]
    downscale: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_name = "LIST")]
    hidden: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Probe replicates per policy.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    eval_per_class: Option<usize>,
}

#[derive(Debug, Args)]
struct DedupArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Parse(_) | Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

fn list<T: std::str::FromStr>(flag: &str, raw: &str) -> Result<Vec<T>, Failure> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Failure::Usage(format!("--{flag} needs at least one value")));
    }
    items.iter().map(|s| s.parse().map_err(|_| Failure::Usage(format!("--{flag}: cannot parse {s:?}")))).collect()
}

fn build_config(kind: ExperimentKind, a: SweepArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Runtime(Error::Io { path: path.clone(), source: e }))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            if cfg.experiment != kind {
                return Err(Failure::Usage(format!(
                    "{} is a {} config, not {}",
                    path.display(),
                    cfg.experiment.name(),
                    kind.name()
                )));
            }
            cfg
        }
        None => ExperimentConfig::for_kind(kind),
    };
    if let Some(v) = a.out {
        cfg.output = v;
    }
    if let Some(v) = &a.d_rates {
        cfg.d_rates = list("d-rates", v)?;
    }
    if let Some(v) = &a.seeds {
        cfg.seeds = list("seeds", v)?;
    }
    if let Some(v) = a.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = a.policy {
        cfg.policy = v;
    }
    if let Some(v) = a.model {
        cfg.model = if v == "svm" { ModelKind::Svm } else { ModelKind::Mlp };
    }
    if a.adv {
        cfg.adversarial = true;
    }
    if let Some(v) = a.epsilon {
        cfg.pgd.epsilon = v;
    }
    if let Some(v) = a.pgd_steps {
        cfg.pgd.n_steps = v;
    }
    if let Some(v) = a.pgd_step_size {
        cfg.pgd.step_size = Some(v);
    }
    if let Some(v) = a.random_start {
        cfg.pgd.random_start = v;
    }
    if let Some(v) = a.svm_c {
        cfg.svm.c = v;
    }
    if let Some(v) = a.svm_gamma {
        cfg.svm.gamma = Some(v);
    }
    if let Some(v) = a.n_per_class {
        cfg.gaussian.n_per_class = v;
    }
    if let Some(v) = a.test_per_class {
        match kind {
            ExperimentKind::Image => cfg.image.test_per_class = Some(v),
            _ => cfg.gaussian_test_per_class = v,
        }
    }
    if let Some(v) = a.data {
        cfg.image.path = Some(v);
    }
    if a.synthetic {
        cfg.image.synthetic.get_or_insert_with(SyntheticImageSpec::default);
    }
    if let Some(v) = &a.classes {
        cfg.image.class_subset = Some(list("classes", v)?);
    }
    if let Some(v) = a.downscale {
        cfg.image.downscale = v;
    }
    if let Some(v) = a.train_per_class {
        cfg.image.train_per_class = Some(v);
    }
    if let Some(v) = a.epochs {
        cfg.mlp.epochs = v;
    }
    if let Some(v) = &a.hidden {
        cfg.mlp.hidden = list("hidden", v)?;
    }
    if let Some(v) = a.learning_rate {
        cfg.mlp.learning_rate = v;
    }
    if let Some(v) = a.replicates {
        cfg.probe.replicates = v;
    }
    if let Some(v) = a.eval_per_class {
        cfg.probe.eval_per_class = v;
    }
    if (a.epsilon.is_some() || a.pgd_steps.is_some() || a.pgd_step_size.is_some() || a.random_start.is_some())
        && !cfg.adversarial
    {
        return Err(Failure::Usage("attack settings need --adv".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (kind, args) = match cli.command {
        Command::Gaussian(a) => (ExperimentKind::Gaussian, a),
        Command::Image(a) => (ExperimentKind::Image, a),
        Command::Bvd(a) => (ExperimentKind::Bvd, a),
        Command::Dedup(a) => return dedup(a),
    };
    let cfg = build_config(kind, args)?;
    let out = run_and_write(&cfg).map_err(Failure::Runtime)?;
    println!("{} rows -> {} (config {})", out.rows, out.csv.display(), out.sidecar.display());
    Ok(())
}

fn dedup(a: DedupArgs) -> Result<(), Failure> {
    let ds = LabeledDataset::read_csv(&a.input, Origin::Synthetic).map_err(Failure::Runtime)?;
    let unique = dedup_exact(&ds);
    unique.write_csv(&a.output).map_err(Failure::Runtime)?;
    println!("{} -> {} rows", ds.len(), unique.len());
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("duplab: usage error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("duplab: {e}");
            1
        }
    }
}
