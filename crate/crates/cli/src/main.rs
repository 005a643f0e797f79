use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod calc;
mod config;
mod output;
mod scale;
mod smpc;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(#[from] probscale::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "probscale",
    version,
    about = "Probabilistic scaling of simple approximating sets and sampling-based SMPC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Os,
    Ps,
    Bench,
}

#[derive(Subcommand)]
enum Command {
    /// Print sample sizes for the scaling and learning bounds.
    Calc {
        #[arg(long = "eps", allow_negative_numbers = true)]
        epsilon: f64,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        /// Uncertain dimension for the learning bound.
        #[arg(long)]
        nxi: Option<usize>,
        /// Constraint rows `p` for the learning bound.
        #[arg(long, default_value_t = 1)]
        rows: usize,
    },
    /// Design, scale and validate a simple approximating set.
    Scale {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop SMPC with offline-sampled (os) or scaled (ps) constraints.
    Smpc {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Bench)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calc {
            epsilon,
            delta,
            nxi,
            rows,
        } => calc::run(epsilon, delta, nxi, rows),
        Command::Scale { config, out } => scale::run(&config, out.as_deref()),
        Command::Smpc { config, mode, out } => smpc::run(&config, mode, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
