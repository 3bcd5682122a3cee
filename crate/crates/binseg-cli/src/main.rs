//! `binseg` command line: synthesize scenes, segment clouds, evaluate
//! results, and run seeded benchmark suites.

mod bench;
mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Environment variable holding the default pipeline config path for
/// `segment` and `ablate` when `--config` is not given.
pub const CONFIG_ENV: &str = "BINSEG_CONFIG";

#[derive(Parser)]
#[command(name = "binseg", version, about = "3D point-cloud instance segmentation by density binarization")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth and write a cloud file.
    Synth(commands::SynthArgs),
    /// Run the segmentation pipeline on a cloud file.
    Segment(commands::SegmentArgs),
    /// Evaluate a results file against its cloud's ground truth.
    Eval(commands::EvalArgs),
    /// Seeded multi-scene comparison of clustering modes plus parameter sweeps.
    Bench(bench::BenchArgs),
    /// Run the pipeline with one stage toggled off and compare.
    Ablate(commands::AblateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore the error if a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Segment(args) => commands::segment(args),
        Command::Eval(args) => commands::eval(args),
        Command::Bench(args) => bench::bench(args),
        Command::Ablate(args) => commands::ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Machine-readable error on stderr.
            eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
            ExitCode::FAILURE
        }
    }
}
