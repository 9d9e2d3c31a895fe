//! The `ecut` command line: configuration loading, subcommands and exit
//! statuses.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::checkpoint_file_name;
pub use config::{
    apply_override, ArchBlock, DatasetBlock, ExperimentBlock, ExperimentConfig, NoiseBlock, SeedSet,
};

/// Exit status for unknown subcommands and malformed flags.
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "ecut",
    version,
    about = "Noisy-label sample selection with Early Cutting"
)]
struct Cli {
    /// TOML configuration file; defaults apply to anything it leaves out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration value by dotted path, e.g. `cut.gamma=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset, inject label noise and store it.
    Gen,
    /// Train once, writing the dynamics log and per-epoch checkpoints.
    Train,
    /// One selection round over an existing log plus checkpoints or metrics.
    Select,
    /// Iterative selection followed by a final training run.
    Pipeline,
    /// Selection quality, learning histogram and distance-ratio reports.
    Report,
    /// Test accuracy after training with each learning-order group.
    ExpOrderHarm,
    /// How quickly a clean-pretrained model fits each learning-order group.
    ExpPretrainedSpeed,
}

/// Parse `args` (including the program name), run the command and return
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = ExperimentConfig::load(
        cli.config.as_deref(),
        &cli.overrides,
        cli.seed,
        cli.out.as_deref(),
    )
    .and_then(|cfg| match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Select => commands::select(&cfg),
        Command::Pipeline => commands::pipeline(&cfg),
        Command::Report => commands::report(&cfg),
        Command::ExpOrderHarm => commands::order_harm(&cfg),
        Command::ExpPretrainedSpeed => commands::pretrained_speed(&cfg),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ecut: error: {e}");
            e.exit_code()
        }
    }
}
