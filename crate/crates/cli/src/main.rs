//! Command-line front end: dataset generation, training, explanation,
//! benchmarking and curve evaluation.

mod bench;
mod curves;
mod dataset;
mod explain;
mod output;
mod train;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "maskx", version, about = "Mask explanations for image classifiers")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "MASKX_THREADS", default_value_t = 0, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labelled dataset.
    Dataset(dataset::DatasetArgs),
    /// Train the toy classifier on a dataset directory.
    Train(train::TrainArgs),
    /// Explain one image and report its metrics.
    Explain(explain::ExplainArgs),
    /// Explain many images with several methods and summarize the metrics.
    Bench(bench::BenchArgs),
    /// Insertion and deletion curves for one explanation.
    Curves(curves::CurvesArgs),
}

/// How a command finished when nothing failed outright.
pub enum Outcome {
    Clean,
    /// Outputs were written but some metrics are undefined.
    Degenerate(Vec<String>),
}

impl Outcome {
    pub fn from_degenerate(reasons: Vec<String>) -> Self {
        if reasons.is_empty() {
            Outcome::Clean
        } else {
            Outcome::Degenerate(reasons)
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.threads > 0 {
        maskx::parallel::init_global_threads(cli.threads);
    }
    let threads = maskx::parallel::current_threads();
    match &cli.command {
        Command::Dataset(a) => dataset::run(a, threads).map(|_| Outcome::Clean),
        Command::Train(a) => train::run(a, threads).map(|_| Outcome::Clean),
        Command::Explain(a) => explain::run(a, threads),
        Command::Bench(a) => bench::run(a, threads),
        Command::Curves(a) => curves::run(a, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Degenerate(reasons)) => {
            for r in reasons {
                eprintln!("degenerate: {r}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
