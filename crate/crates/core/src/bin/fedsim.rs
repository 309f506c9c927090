use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedsim::report;

/// Federated learning poisoning simulator.
///
/// Set FEDSIM_THREADS to cap the number of training threads.
#[derive(Parser)]
#[command(name = "fedsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, summary.csv and config.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run paired no-attack / attacked experiments along one axis and write impact.csv.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect finished runs into a server x attack impact table (table.csv).
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Directory for table.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, out } => report::cmd_run(&config, &out).map(|a| println!("A = {a}")),
        Command::Sweep { spec, out } => report::cmd_sweep(&spec, &out).map(|rows| {
            for r in rows {
                match r.impact() {
                    Some(i) => println!("{} = {}: I = {i}", r.axis.name(), r.value),
                    None => println!("{} = {}: incomplete", r.axis.name(), r.value),
                }
            }
        }),
        Command::Report { dirs, out } => report::cmd_report(&dirs, &out).map(|t| print!("{}", t.render())),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
