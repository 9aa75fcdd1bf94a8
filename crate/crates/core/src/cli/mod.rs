//! Experiment runner behind the `pvcell` binary.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 verification failure,
//! 3 anomaly threshold exceeded.

mod config;
mod simulate;
mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{parse_list, ExperimentConfig, ModelChoice, PRESETS};
pub use simulate::{
    build_report, cmd_analyze, cmd_simulate, read_records, replicate_key, run_simulation,
    simulate_replicate, write_records, AnomalyReport, ExponentFits, FitReport, GroupReport,
    ModelReport, SummaryReport, ANOMALY_THRESHOLD, MIN_TAIL_REPLICATES, RECORDS_HEADER,
};
pub use verify::{
    check_duality_replicate, cmd_constants, cmd_coupling_demo, cmd_verify_duality,
    constants_table, run_coupling, run_duality, summarize_duality, CouplingReport, DefectCheck,
    DualityReplicate, DualityReport, COUPLING_SETTINGS, DEFECT_PASS_FRACTION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_ANOMALY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "pvcell", version, about = "Conditioned zero-cell simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate cells and write records.csv and summary.json
    Simulate(RunArgs),
    /// Check the vertex-count and defect-measure dualities on simulated cells
    VerifyDuality(RunArgs),
    /// Draw coupled point processes and check their inclusions
    CouplingDemo(CouplingArgs),
    /// Print the limiting constants
    Constants,
    /// Re-summarize an existing records.csv into analysis.json
    Analyze {
        /// Records file; defaults to <out>/records.csv
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset: voronoi-sweep, crofton-sweep, duality
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    /// Comma-separated inradii
    #[arg(long = "r")]
    r: Option<String>,
    /// voronoi, crofton or both
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: machine parallelism)
    #[arg(long)]
    workers: Option<usize>,
    /// Omit the timestamp from summary.json
    #[arg(long)]
    no_timestamp: bool,
    /// Comma-separated escape exponents in [0, 2/3)
    #[arg(long)]
    alphas: Option<String>,
    /// Comma-separated tail levels
    #[arg(long)]
    etas: Option<String>,
    /// Defect-measure samples per replicate (0 = automatic)
    #[arg(long)]
    mc_samples: Option<usize>,
}

#[derive(Debug, Args)]
struct CouplingArgs {
    /// Intensity level; with --eps, replaces the default settings
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Draws per setting
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self, default_preset: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let mut c = match self.preset.as_deref().or(default_preset) {
            Some(p) => ExperimentConfig::preset(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        let usage = CliError::Usage;
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(n) = self.replicates {
            c.replicates = n;
        }
        if let Some(r) = &self.r {
            c.r_values = parse_list(r).map_err(usage)?;
        }
        if let Some(m) = &self.model {
            c.model = m.parse().map_err(usage)?;
        }
        if let Some(o) = self.out {
            c.output_dir = o;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if self.no_timestamp {
            c.no_timestamp = true;
        }
        if let Some(a) = &self.alphas {
            c.alphas = parse_list(a).map_err(usage)?;
        }
        if let Some(e) = &self.etas {
            c.etas = parse_list(e).map_err(usage)?;
        }
        if let Some(n) = self.mc_samples {
            c.mc_defect_samples = n;
        }
        c.validate()?;
        Ok(c)
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args.into_config(None)?),
        Command::VerifyDuality(args) => cmd_verify_duality(&args.into_config(Some("duality"))?),
        Command::CouplingDemo(a) => {
            let settings = match (a.t, a.eps) {
                (Some(t), Some(eps)) => vec![(t, eps)],
                (None, None) => COUPLING_SETTINGS.to_vec(),
                _ => return Err(CliError::Usage("--t and --eps go together".into())),
            };
            cmd_coupling_demo(&settings, a.n, a.seed, a.workers, a.out.as_deref())
        }
        Command::Constants => cmd_constants(),
        Command::Analyze { input, run } => {
            let config = run.into_config(None)?;
            let input = input.unwrap_or_else(|| config.output_dir.join("records.csv"));
            cmd_analyze(&input, &config)
        }
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
