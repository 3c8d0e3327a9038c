use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod artifacts;
mod commands;
mod config;

use config::WorkbenchConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<ates_core::Error> for CliError {
    fn from(e: ates_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else if matches!(e, ates_core::Error::InvalidParameter(_)) {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "ates", version, about = "ATES workbench: simulate, identify, validate and control")]
struct Cli {
    /// JSON configuration; defaults are used when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set identification.method=LS`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for every random stream.
    #[arg(long, env = "ATES_SEED", global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for window evaluation and seed sweeps.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the resolved configuration as JSON.
    Config,
    /// Simulate the plant and write the training and validation sets.
    Simulate,
    /// Identify an ARX predictor from the training set.
    Identify {
        /// LS or CORLS; overrides `identification.method`.
        #[arg(long)]
        method: Option<String>,
    },
    /// Evaluate the predictor on the validation set.
    Validate {
        #[arg(value_enum)]
        mode: Mode,
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the closed loop against the plant.
    Mpc {
        #[arg(long)]
        method: Option<String>,
    },
    /// Simulate, identify and validate over consecutive seeds.
    Sweep {
        /// Number of seeds, starting at the configured one.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Re-verify the hashes recorded in the output directory.
    Report,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Single,
    Multi,
}

fn resolve(cli: &Cli, method: Option<&String>) -> Result<WorkbenchConfig, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output_dir={}", serde_json::Value::String(out.display().to_string())));
    }
    if let Some(m) = method {
        overrides.push(format!("identification.method={}", serde_json::Value::String(m.clone())));
    }
    WorkbenchConfig::load(cli.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = cli.jobs.max(1);
    match &cli.command {
        Command::Config => {
            let cfg = resolve(&cli, None)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
            Ok(())
        }
        Command::Simulate => commands::simulate(&resolve(&cli, None)?),
        Command::Identify { method } => commands::identify(&resolve(&cli, method.as_ref())?),
        Command::Validate { mode, method } => commands::validate(&resolve(&cli, method.as_ref())?, *mode, jobs),
        Command::Mpc { method } => commands::mpc(&resolve(&cli, method.as_ref())?),
        Command::Sweep { seeds } => commands::sweep(&resolve(&cli, None)?, *seeds, jobs),
        Command::Report => commands::report(&resolve(&cli, None)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
