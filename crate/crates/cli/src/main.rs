//! `factsched`: schedule FACTS devices over a horizon by minimizing line losses.
//!
//! Exit codes: 0 success, 1 error, 2 infeasible, 3 limit reached before the
//! gap closed, 4 schedule violates the model.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ModelConfig, RunConfig, SolverConfig};
use factsched::netmodel::{TcscMode, TcscSign};

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_LIMIT: u8 = 3;
pub const EXIT_VIOLATIONS: u8 = 4;

/// Single-line error with a module tag: `error[module]: message`.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn new(module: &'static str, message: impl Into<String>) -> Self {
        CliError { module, message: message.into(), code: EXIT_ERROR }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new("config", message)
    }

    /// Prefixes the message with the file it came from.
    pub fn located(path: &Path, err: impl Into<factsched::Error>) -> Self {
        let err: factsched::Error = err.into();
        CliError::new(err.module(), format!("{}: {err}", path.display()))
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::new("io", format!("{}: {err}", path.display()))
    }
}

impl<E: Into<factsched::Error>> From<E> for CliError {
    fn from(err: E) -> Self {
        let err: factsched::Error = err.into();
        CliError::new(err.module(), err.to_string())
    }
}

#[derive(Parser)]
#[command(name = "factsched", version, about = "Multi-period FACTS device scheduling (MISOCP)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scheduling problem and write schedule, reports and diagnostics.
    Solve(RunArgs),
    /// Write the assembled program in Conic Benchmark Format without solving.
    ExportCbf {
        #[command(flatten)]
        run: RunArgs,
        /// Target file; defaults to `<output>/program.cbf`.
        #[arg(long)]
        cbf: Option<PathBuf>,
    },
    /// Re-check a schedule: constraints, relaxation exactness, AC power flow.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        schedule: PathBuf,
    },
    /// Rebuild report.csv and report.json from a schedule.
    Report {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        schedule: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Variation,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Consistent,
    Flipped,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// MATPOWER case file.
    #[arg(long)]
    case: Option<PathBuf>,
    /// Device configuration (TOML).
    #[arg(long)]
    devices: Option<PathBuf>,
    /// Demand multiplier profile (CSV).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Maximum actions per period.
    #[arg(long)]
    budget: Option<i64>,
    /// Relative optimality gap.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    feas_tol: Option<f64>,
    #[arg(long)]
    int_tol: Option<f64>,
    #[arg(long, value_enum)]
    tcsc_mode: Option<ModeArg>,
    /// Sign of the TCSC term in the branch flow.
    #[arg(long, value_enum)]
    tcsc_sign: Option<SignArg>,
    /// Box Re W_ij in the TCSC envelopes by the squared voltage limits.
    #[arg(long)]
    literal_envelope: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            case: self.case.clone(),
            devices: self.devices.clone(),
            profile: self.profile.clone(),
            output: self.output.clone(),
            horizon: self.horizon,
            budget: self.budget,
            solver: SolverConfig {
                gap: self.gap,
                node_limit: self.node_limit,
                time_limit: self.time_limit,
                workers: self.workers,
                feas_tol: self.feas_tol,
                int_tol: self.int_tol,
            },
            model: ModelConfig {
                tcsc_mode: self.tcsc_mode.map(|m| match m {
                    ModeArg::Variation => TcscMode::Variation,
                    ModeArg::Literal => TcscMode::Literal,
                }),
                tcsc_sign: self.tcsc_sign.map(|s| match s {
                    SignArg::Consistent => TcscSign::Consistent,
                    SignArg::Flipped => TcscSign::Flipped,
                }),
                literal_envelope: self.literal_envelope.then_some(true),
            },
        };
        let cfg = file.overlay(flags);
        for p in [&cfg.case, &cfg.devices, &cfg.profile].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::config(format!("{} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Solve(args) => commands::solve(&args.resolve()?),
        Command::ExportCbf { run, cbf } => commands::export_cbf(&run.resolve()?, cbf.as_deref()),
        Command::Validate { run, schedule } => commands::validate(&run.resolve()?, &schedule),
        Command::Report { run, schedule } => commands::report(&run.resolve()?, &schedule),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FACTSCHED_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version output
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[cli]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(EXIT_ERROR);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let message = e.message.replace('\n', " ");
            eprintln!("error[{}]: {message}", e.module);
            ExitCode::from(e.code)
        }
    }
}
