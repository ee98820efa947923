mod augment;
mod evaluate;
mod fuse;
mod manifest;
mod tta;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Box fusion, augmentation and COCO evaluation for object detectors.
#[derive(Debug, Parser)]
#[command(name = "boxforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge detections from several models with NMS or weighted box fusion.
    Fuse(fuse::FuseArgs),
    /// Write an augmented copy of a COCO dataset.
    Augment(augment::AugmentArgs),
    /// Map test-time augmented predictions back and fuse them.
    TtaMerge(tta::TtaArgs),
    /// COCO box AP of one results file.
    Evaluate(evaluate::EvalArgs),
    /// Side-by-side AP table for several methods.
    Compare(evaluate::CompareArgs),
}

/// Bad flags or flag combinations not caught by the argument parser.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || e.downcast_ref::<boxforge_core::Error>().is_some_and(|e| e.is_config())
    });
    if usage {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("BOXFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("BOXFORGE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Fuse(args) => fuse::run(args),
        Command::Augment(args) => augment::run(args),
        Command::TtaMerge(args) => tta::run(args),
        Command::Evaluate(args) => evaluate::run_evaluate(args),
        Command::Compare(args) => evaluate::run_compare(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
