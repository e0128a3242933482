//! `picard-nls`: convergence sweeps, turbulence spectra and tree tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes, each with its exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
    Assert(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
            CliError::Assert(_) => 3,
        }
    }
}

impl From<picard_nls::Error> for CliError {
    fn from(e: picard_nls::Error) -> Self {
        match e {
            picard_nls::Error::Config(_) | picard_nls::Error::Unsupported(_) | picard_nls::Error::Memory { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "picard-nls", version, about = "Nested Picard integrators for weakly nonlinear Schrödinger equations")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Case {
    Quintic1d,
    Cubic2d,
}

impl Case {
    fn name(self) -> &'static str {
        match self {
            Case::Quintic1d => "quintic1d",
            Case::Cubic2d => "cubic2d",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Corrected,
    AsPrinted,
}

#[derive(Args, Debug)]
pub struct Common {
    /// TOML file with the run configuration; the built-in preset otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; a `.meta.toml` sidecar is written next to it.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Exit with status 3 when a configured check fails.
    #[arg(long = "assert")]
    assert: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Error of each channel against the Gaussian references as τ shrinks.
    ConvergenceTau {
        #[arg(long, value_enum, default_value = "quintic1d")]
        case: Case,
        /// Comma-separated, strictly decreasing time steps.
        #[arg(long, value_parser = config::parse_list)]
        taus: Option<std::vec::Vec<f64>>,
        /// Comma-separated channel names such as `U1,gradU1`.
        #[arg(long, value_delimiter = ',')]
        channels: Option<Vec<String>>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        final_time: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Error against a fine Strang reference as ε shrinks.
    ConvergenceEps {
        #[arg(long, value_enum, default_value = "quintic1d")]
        case: Case,
        /// Comma-separated, strictly decreasing couplings.
        #[arg(long, value_parser = config::parse_list)]
        epsilons: Option<std::vec::Vec<f64>>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        reference_tau: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        final_time: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Radial wave-action spectra of random-phase data.
    Turbulence {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Scale,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        final_time: Option<f64>,
        #[arg(long)]
        record_every: Option<usize>,
        #[arg(long)]
        memory_limit_mb: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Tree sets, coefficients and the weight identity.
    ValidateTrees {
        #[arg(long, default_value_t = 3)]
        p: usize,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, default_value_t = 3)]
        beta_max: usize,
    },
    /// Relative gap between the generic and explicit cubic 2D Taylor engines.
    CrossValidateNts {
        #[arg(long, default_value_t = 0.01)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 64)]
        modes: usize,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        scale: f64,
        #[arg(long, value_enum, default_value = "corrected")]
        variant: Variant,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Writes the Gaussian reference fields as binary dumps.
    OracleDump {
        #[arg(long, value_enum, default_value = "quintic1d")]
        case: Case,
        #[arg(long, default_value_t = 1.0)]
        final_time: f64,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        tau0: Option<f64>,
        /// Directory receiving one `.fld` file per channel component.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PICARD_NLS_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("PICARD_NLS_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Run(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::ConvergenceTau { case, taus, channels, modes, final_time, common } => {
            commands::convergence_tau(case, taus, channels, modes, final_time, &common)
        }
        Command::ConvergenceEps { case, epsilons, tau, reference_tau, modes, final_time, common } => {
            commands::convergence_eps(case, epsilons, tau, reference_tau, modes, final_time, &common)
        }
        Command::Turbulence { preset, seed, modes, final_time, record_every, memory_limit_mb, common } => {
            commands::turbulence(preset, seed, modes, final_time, record_every, memory_limit_mb, &common)
        }
        Command::ValidateTrees { p, n_max, beta_max } => commands::validate_trees(p, n_max, beta_max),
        Command::CrossValidateNts { tau, steps, modes, scale, variant, tolerance, common } => {
            commands::cross_validate_nts(tau, steps, modes, scale, variant, tolerance, &common)
        }
        Command::OracleDump { case, final_time, modes, scale, tau0, out_dir } => {
            commands::oracle_dump(case, final_time, modes, scale, tau0, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("configuration error: {m}"),
                CliError::Run(m) => eprintln!("error: {m}"),
                CliError::Assert(m) => eprintln!("check failed: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}
