use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::CliError;

/// Student-teacher learning laboratory.
#[derive(Debug, Parser)]
#[command(name = "stlearn", version, about)]
struct Cli {
    /// Worker threads for parallel sweeps (defaults to all cores).
    #[arg(long, env = "STLEARN_WORKERS", global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file overlaid on the defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Config override `key=value`; nested keys use dots. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset and its ground truth.
    Synth(Common),
    /// Train a deep linear network with the base or student-teacher loss.
    TrainLinear(Common),
    /// Train a shallow ReLU student with oracle early stopping.
    TrainRelu(Common),
    /// Decomposed student-teacher LASSO with support diagnostics.
    Lasso(Common),
    /// Closed-form minimizers and optimal test error.
    Oracle(Common),
    /// Run a named experiment.
    Exp {
        /// early-stopping, regime-grid, difficulty-table, decomposition,
        /// lasso-divergence or theorem-oracles.
        id: String,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("STLEARN_WORKERS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Synth(c) => commands::synth(&c.into()),
        Command::TrainLinear(c) => commands::train_linear(&c.into()),
        Command::TrainRelu(c) => commands::train_relu(&c.into()),
        Command::Lasso(c) => commands::lasso(&c.into()),
        Command::Oracle(c) => commands::oracle(&c.into()),
        Command::Exp { id, common } => commands::exp(&id, &common.into()),
    }
}

impl From<Common> for commands::Invocation {
    fn from(c: Common) -> Self {
        Self {
            config: c.config,
            out: c.out,
            seed: c.seed,
            overrides: c.set,
            print_config: c.print_config,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
