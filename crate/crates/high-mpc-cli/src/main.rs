//! Command-line driver for the swing-gate experiments.
//!
//! Five subcommands cover the full pipeline:
//!
//! 1. `search` — find the best traversal time for the fixed scenario and
//!    write the resulting policy and planned trajectory.
//! 2. `collect` — fly many randomized episodes with the per-step search
//!    in the loop, producing a labelled observation dataset.
//! 3. `train` — fit the traversal-time network to such a dataset.
//! 4. `run` — fly closed-loop episodes with a chosen controller.
//! 5. `compare` — score the learned controller against plain tracking
//!    from matched starts.
//!
//! Everything an experiment does is pinned by its config file and seed;
//! rerunning a command reproduces its artifacts byte for byte. Exit
//! codes: 0 on success, 1 for bad arguments, config, or input artifacts,
//! 2 for failures while running or writing.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;

/// What went wrong, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// The request itself is unusable: arguments, config file, or a
    /// missing/invalid input artifact. Exit code 1.
    Validation(String),
    /// The experiment started but failed: solver breakdown, training
    /// blow-up, output I/O. Exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(
    name = "high-mpc",
    version,
    about = "Quadrotor swing-gate experiments: traversal-time search, dataset collection, network training, and closed-loop evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Each overrides exactly one scalar
/// field of the config file; the file remains the primary record.
#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (0 = all cores); overrides
    /// `workers` from the config. Any value gives identical results.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the optimal traversal time in the fixed scenario.
    Search {
        #[command(flatten)]
        common: CommonArgs,
        /// Iteration budget; overrides `search.max_iters`. 0 writes the
        /// initial policy unchanged.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Collect a labelled dataset by flying randomized episodes.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
        /// Append to an existing dataset instead of replacing it. Use a
        /// fresh --seed, or the new rows duplicate the old ones.
        #[arg(long)]
        append: bool,
    },
    /// Train the traversal-time network on a collected dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset CSV written by `collect`.
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
    },
    /// Fly closed-loop episodes with the configured controller.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model file; required for the high_mpc controller and
        /// rejected for the others.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
    },
    /// Fly matched episodes with the learned and standard controllers.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained model file for the learned controller.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                // Usage mistakes are validation failures, not runtime ones.
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search { common, iters } => commands::search::run(&prepare(&common)?, iters),
        Command::Collect { common, append } => commands::collect::run(&prepare(&common)?, append),
        Command::Train { common, dataset } => commands::train::run(&prepare(&common)?, &dataset),
        Command::Run { common, model } => commands::run::run(&prepare(&common)?, model.as_deref()),
        Command::Compare { common, model } => commands::compare::run(&prepare(&common)?, &model),
    }
}

/// Load the config, apply the scalar flag overrides, and size the worker
/// pool. Sizing must happen before any parallel section runs; results do
/// not depend on it.
fn prepare(common: &CommonArgs) -> Result<Context, CliError> {
    let loaded = config::load_config(&common.config)?;
    let mut config = loaded.config;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global()
            .map_err(|e| CliError::runtime(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(Context { config, config_sha256: loaded.sha256 })
}
