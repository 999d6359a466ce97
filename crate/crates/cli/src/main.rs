use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ectd::commands::{self, CommonArgs};

#[derive(Parser)]
#[command(name = "ectd", version, about = "Commute-time distance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (default: $ECTD_OUT/<command> or ectd_out/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; replaces the config's seed list with seed, seed + 1, ...
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact first-passage, commute and pseudo-inverse tables, RMSE curves and heatmaps.
    Exact(Common),
    /// Learned embeddings across the q grid.
    Train(Common),
    /// Goal-curriculum runs across distance sources and seeds.
    Curriculum(Common),
    /// Exact-oracle identity suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Perturb one pseudo-inverse entry per chain before checking.
        #[arg(long)]
        inject_fault: bool,
    },
}

impl From<Common> for CommonArgs {
    fn from(c: Common) -> Self {
        CommonArgs { out: c.out, config: c.config, seed: c.seed }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Exact(c) => commands::exact(&c.into()),
        Command::Train(c) => commands::train(&c.into()),
        Command::Curriculum(c) => commands::curriculum(&c.into()),
        Command::Verify { common, inject_fault } => commands::verify(&common.into(), inject_fault),
    };
    match result {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ectd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
