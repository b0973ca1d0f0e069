//! Experiment runner behind the `tracelab` binary.
//!
//! Every experiment writes `<experiment>.csv`, `<experiment>.svg` and
//! `manifest.json` into the output directory. The manifest holds the full
//! configuration, so `tracelab replay manifest.json` regenerates identical CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tracelab::TraceError;

pub mod experiments;
pub mod output;

use output::{render_svg, write_file, PlotSpec, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tracelab", version, about = "Randomized trace estimation experiments")]
pub struct Cli {
    /// Global seed; every experiment derives its streams from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(flatten)]
    Run(Experiment),
    /// Re-run the configuration stored in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    /// KL relative error against matvec budget for Hutchinson, BOLT and Hutch++.
    Convergence(experiments::ConvergenceParams),
    /// Median error of BOLT and Hutch++ on tr(diag(d)^2), d ~ Unif[1,2].
    FlatSpectrum(experiments::FlatSpectrumParams),
    /// Subblock trace recovery on a Gram operator against the sampling ratio.
    TraceRecovery(experiments::TraceRecoveryParams),
    /// Chebyshev localization residual against the buffer radius.
    Localization(experiments::LocalizationParams),
    /// Full-rank probability of Wishart subblocks and the min-eigenvalue law.
    Wishart(experiments::WishartParams),
    /// Peeled HODLR builds with Frobenius error, eigenvalue span and proxy KL.
    Hodlr(experiments::HodlrParams),
    /// Closed-form against empirical BOLT variance.
    VarianceCheck(experiments::VarianceCheckParams),
    /// W2 estimates against the dense value.
    W2Demo(experiments::DemoParams),
    /// KL estimates against the dense value.
    KlDemo(experiments::DemoParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Convergence(_) => "convergence",
            Experiment::FlatSpectrum(_) => "flat-spectrum",
            Experiment::TraceRecovery(_) => "trace-recovery",
            Experiment::Localization(_) => "localization",
            Experiment::Wishart(_) => "wishart",
            Experiment::Hodlr(_) => "hodlr",
            Experiment::VarianceCheck(_) => "variance-check",
            Experiment::W2Demo(_) => "w2-demo",
            Experiment::KlDemo(_) => "kl-demo",
        }
    }

    fn validate(&self) -> Vec<String> {
        match self {
            Experiment::Convergence(p) => p.validate(),
            Experiment::FlatSpectrum(p) => p.validate(),
            Experiment::TraceRecovery(p) => p.validate(),
            Experiment::Localization(p) => p.validate(),
            Experiment::Wishart(p) => p.validate(),
            Experiment::Hodlr(p) => p.validate(),
            Experiment::VarianceCheck(p) => p.validate(),
            Experiment::W2Demo(p) | Experiment::KlDemo(p) => p.validate(),
        }
    }

    fn execute(&self, seed: u64) -> Result<experiments::Outcome, CliError> {
        match self {
            Experiment::Convergence(p) => experiments::convergence(p, seed),
            Experiment::FlatSpectrum(p) => experiments::flat_spectrum(p, seed),
            Experiment::TraceRecovery(p) => experiments::trace_recovery(p, seed),
            Experiment::Localization(p) => experiments::localization(p, seed),
            Experiment::Wishart(p) => experiments::wishart(p, seed),
            Experiment::Hodlr(p) => experiments::hodlr(p, seed),
            Experiment::VarianceCheck(p) => experiments::variance_check(p, seed),
            Experiment::W2Demo(p) => experiments::w2_demo(p, seed),
            Experiment::KlDemo(p) => experiments::kl_demo(p, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub matvecs: u64,
    pub entries: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(flatten)]
    pub experiment: Experiment,
    pub seed: u64,
    pub counters: Counters,
    pub versions: Versions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub tracelab: String,
    #[serde(rename = "tracelab-cli")]
    pub cli: String,
}

impl Versions {
    fn current() -> Self {
        Self {
            tracelab: tracelab::VERSION.to_string(),
            cli: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub manifest: PathBuf,
    pub counters: Counters,
}

/// Validates, runs one experiment and writes its artifacts into `out`.
pub fn run(experiment: &Experiment, seed: u64, out: &Path) -> Result<RunReport, CliError> {
    let problems = experiment.validate();
    if !problems.is_empty() {
        return Err(CliError::Config(format!("invalid parameters: {}", problems.join("; "))));
    }
    fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let name = experiment.name();
    log::info!("running {name} with seed {seed}");
    let outcome = experiment.execute(seed)?;

    let csv = out.join(format!("{name}.csv"));
    let svg = out.join(format!("{name}.svg"));
    write_file(&csv, &outcome.table.to_csv()?)?;
    write_file(&svg, &render_svg(&outcome.table, &outcome.plot))?;
    for (file, table) in &outcome.extra {
        write_file(&out.join(file), &table.to_csv()?)?;
    }
    let manifest = Manifest {
        experiment: experiment.clone(),
        seed,
        counters: outcome.counters,
        versions: Versions::current(),
    };
    let manifest_path = out.join("manifest.json");
    write_file(&manifest_path, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(RunReport {
        csv,
        svg,
        manifest: manifest_path,
        counters: outcome.counters,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad manifest {}: {e}", path.display())))
}

/// Entry point shared by the binary and the tests.
pub fn execute(cli: Cli) -> Result<RunReport, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Run(exp) => run(&exp, cli.seed, &cli.out),
        Command::Replay { manifest } => {
            let m = read_manifest(&manifest)?;
            run(&m.experiment, m.seed, &cli.out)
        }
    }
}

/// Wraps a finished table with its plot description.
pub(crate) fn finish(table: Table, plot: PlotSpec, counters: Counters) -> experiments::Outcome {
    experiments::Outcome {
        table,
        plot,
        counters,
        extra: Vec::new(),
    }
}

pub(crate) fn check(problems: &mut Vec<String>, ok: bool, field: &str, reason: &str) {
    if !ok {
        problems.push(format!("{field}: {reason}"));
    }
}
