use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rfid_recovery::count::CountMethod;
use rfid_recovery::harness::{load_config, with_workers, Run};
use rfid_recovery::Result;

/// Simulate, train and evaluate a machine-learning receiver that recovers
/// colliding RFID tags in framed slotted ALOHA.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Trainable {
    Fnn,
    Cnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Evaluable {
    Gmm,
    Fnn,
    Cnn,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training and test slots for every tag count.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a tag-count classifier.
    TrainCount {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Trainable,
    },
    /// Tag-count accuracy per class on the test slots.
    EvalCount {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Evaluable,
    },
    /// Train the channel estimator for one tag count, or all four.
    TrainChan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        r: Option<u8>,
    },
    /// Channel estimation error of least squares and the trained networks.
    EvalChan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Expected throughput curves and optimal frame sizes.
    Theory {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo throughput of the configured pipeline over the SNR list.
    Throughput {
        #[arg(long)]
        config: PathBuf,
    },
    /// Accuracy grid and throughput summary of a run directory.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn config(&self) -> &PathBuf {
        match self {
            Command::GenData { config }
            | Command::TrainCount { config, .. }
            | Command::EvalCount { config, .. }
            | Command::TrainChan { config, .. }
            | Command::EvalChan { config }
            | Command::Theory { config }
            | Command::Throughput { config }
            | Command::Report { config } => config,
        }
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let cfg = load_config(cli.command.config())?;
    let workers = cfg.experiment.workers;
    let mut run = Run::open(cfg)?;
    with_workers(workers, move || match cli.command {
        Command::GenData { .. } => run.gen_data(),
        Command::TrainCount { method, .. } => run.train_count(match method {
            Trainable::Fnn => CountMethod::Fnn,
            Trainable::Cnn => CountMethod::Cnn,
        }),
        Command::EvalCount { method, .. } => run.eval_count(match method {
            Evaluable::Gmm => CountMethod::Gmm,
            Evaluable::Fnn => CountMethod::Fnn,
            Evaluable::Cnn => CountMethod::Cnn,
        }),
        Command::TrainChan { r, .. } => run.train_chan(r.map(usize::from)),
        Command::EvalChan { .. } => run.eval_chan(),
        Command::Theory { .. } => run.theory(),
        Command::Throughput { .. } => run.throughput(),
        Command::Report { .. } => run.report(),
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let is_report = matches!(cli.command, Command::Report { .. });
    match run(cli) {
        Ok(outputs) => {
            for path in &outputs {
                println!("{}", path.display());
                if is_report {
                    if let Ok(text) = std::fs::read_to_string(path) {
                        print!("{text}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
