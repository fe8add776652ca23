mod artifacts;
mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "glassbox", version, about = "Designed networks with known relevance, and attribution benchmarks on them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that reads a run config.
#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `gamma`.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Overrides `dataset.count`.
    #[arg(long)]
    pub count: Option<usize>,
    /// Overrides `dataset.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset for the configured environment.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build, verify and save the environment's network.
    BuildNet {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Samples drawn for verification.
        #[arg(long, default_value_t = 100)]
        verify_samples: usize,
    },
    /// Compute attribution maps for every (method, sample) cell.
    Attribute {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated method labels; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Score stored maps and write the report and plots.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render tables and plots from a saved report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<glassbox::Error> for CliError {
    fn from(e: glassbox::Error) -> Self {
        use glassbox::Error::*;
        match e {
            Config(_) | Load { .. } | UnknownTap { .. } | Json(_) => CliError::usage(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("LAB_THREADS: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::GenData { cfg, out } => commands::gen_data(&cfg, &out),
        Command::BuildNet { cfg, out, verify_samples } => commands::build_net(&cfg, &out, verify_samples),
        Command::Attribute { cfg, net, data, out, methods } => commands::attribute(&cfg, &net, &data, &out, &methods),
        Command::Evaluate { cfg, net, data, maps, out } => commands::evaluate(&cfg, &net, &data, &maps, &out),
        Command::Report { report, out } => commands::report(&report, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
