use std::path::PathBuf;

use anyhow::Result;
use chanvec::corpus::CorpusParams;
use chanvec::embed::{train_embeddings_with_report, write_text};
use chanvec::Corpus;
use clap::Args;
use serde::Serialize;

use super::TrainFlags;
use crate::manifest::{beside, Run};

#[derive(Args, Serialize, Debug)]
pub struct TrainArgs {
    /// Corpus text file, one sentence per line
    #[arg(long)]
    corpus: PathBuf,
    /// Output embeddings (word2vec text format)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value_t = 5)]
    min_count: usize,
}

pub fn run(a: TrainArgs) -> Result<()> {
    let mut run = Run::start("train", &a, Some(a.train.seed))?;
    run.input(&a.corpus)?;
    let corpus = Corpus::read_text(&a.corpus, CorpusParams::default())?;
    let config = a.train.config(a.train.dims, a.min_count)?;
    let (set, report) = train_embeddings_with_report(&corpus, &config)?;
    let mut buf = Vec::new();
    write_text(&set, &mut buf)?;
    run.write(&a.out, &buf)?;
    eprintln!(
        "trained {} channels x {} dims; final loss {:.4}",
        set.len(),
        set.dims(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    run.results(serde_json::json!({
        "vocab_size": report.vocab_size,
        "workers": report.workers,
        "epoch_losses": report.epoch_losses,
    }))?;
    run.finish(&beside(&a.out))
}
