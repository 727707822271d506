//! `chanvec` command-line pipelines.
//!
//! Every command reads files, writes files atomically and leaves a run
//! manifest next to its output. Exit codes: 0 success, 1 other failure,
//! 2 usage, 3 malformed input, 4 empty result.

mod cmd;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::cmd::{
    classify::ClassifyArgs, corpus::BuildCorpusArgs, cv::CvArgs, discover::DiscoverArgs, report::ReportArgs,
    synth::SynthGenArgs, train::TrainArgs,
};

#[derive(Parser)]
#[command(name = "chanvec", version, about = "Channel embeddings, KNN classification and channel discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-community world and seed labels
    SynthGen(SynthGenArgs),
    /// Filter and shuffle subscription records into a training corpus
    BuildCorpus(BuildCorpusArgs),
    /// Train channel embeddings on a corpus
    Train(TrainArgs),
    /// Score channels against a labeled set
    Classify(ClassifyArgs),
    /// Cross-validate the KNN classifier on a labeled set
    Cv(CvArgs),
    /// Run iterative discovery against a synthetic world
    Discover(DiscoverArgs),
    /// Per-tag size and head/tail view report
    Report(ReportArgs),
}

/// Bad flag combinations found after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<chanvec::Error>() {
            if e.is_input_format() {
                return 3;
            }
            if e.is_empty_result() {
                return 4;
            }
        }
        if cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return 3;
        }
    }
    1
}

/// Worker cap from `CHANVEC_THREADS`, if set.
pub fn thread_cap() -> anyhow::Result<Option<usize>> {
    match std::env::var("CHANVEC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Usage(format!("CHANVEC_THREADS must be a positive integer, got {v:?}")).into()),
        },
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = thread_cap()? {
        chanvec::util::configure_threads(n);
    }
    match cli.command {
        Command::SynthGen(a) => cmd::synth::run(a),
        Command::BuildCorpus(a) => cmd::corpus::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Classify(a) => cmd::classify::run(a),
        Command::Cv(a) => cmd::cv::run(a),
        Command::Discover(a) => cmd::discover::run(a),
        Command::Report(a) => cmd::report::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
