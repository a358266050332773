use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phi4_cli::{commands, CliError, Config};

#[derive(Parser)]
#[command(name = "phi4", version, about = "Lattice quartic Langevin dynamics: simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single chain and write samples, snapshots and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the latest snapshot in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Deterministic and statistical bound checks.
    Verify {
        #[arg(long, value_parser = ["maxprinciple", "apriori", "apriori-local", "convergence", "initrate"])]
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition function, tail, density and plateau estimates.
    Stats {
        #[arg(long, value_parser = ["partition", "tail", "density", "plateau"])]
        suite: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve the tree ensemble and tabulate its seminorms.
    Trees {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inspect binary field snapshots.
    Snapshot {
        #[command(subcommand)]
        action: SnapshotAction,
    },
}

#[derive(Subcommand)]
enum SnapshotAction {
    /// Print the field as CSV.
    Dump { file: PathBuf },
    /// Print header information as JSON.
    Info { file: PathBuf },
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, out, resume } => commands::run(&Config::load(&config)?, &out, resume),
        Command::Verify { suite, config, out } => commands::verify(&Config::load(&config)?, &suite, &out),
        Command::Stats { suite, config, out } => commands::stats(&Config::load(&config)?, &suite, &out),
        Command::Trees { config, out } => commands::trees(&Config::load(&config)?, &out),
        Command::Snapshot { action } => {
            let text = match action {
                SnapshotAction::Dump { file } => commands::snapshot_dump(&file)?,
                SnapshotAction::Info { file } => commands::snapshot_info(&file)? + "\n",
            };
            print!("{text}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("phi4: acceptance check failed (see the JSON report)");
            ExitCode::from(1)
        }
        Err(CliError::Core(e @ phi4_core::Phi4Error::BlowUp { .. })) => {
            eprintln!("phi4: blow-up: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("phi4: {e}");
            ExitCode::from(2)
        }
    }
}
