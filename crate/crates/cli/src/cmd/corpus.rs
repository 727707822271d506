use std::path::PathBuf;

use anyhow::Result;
use chanvec::corpus::{build_corpus, read_records, shuffle_sentences};
use clap::Args;
use serde::Serialize;

use crate::manifest::{beside, Run};

#[derive(Args, Serialize, Debug)]
pub struct BuildCorpusArgs {
    /// Subscriptions file, one JSON record per line
    #[arg(long)]
    subs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_channel_freq: usize,
    #[arg(long, default_value_t = 3)]
    min_sentence_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Keep each sentence's channel order
    #[arg(long)]
    no_shuffle: bool,
}

pub fn run(a: BuildCorpusArgs) -> Result<()> {
    let mut run = Run::start("build-corpus", &a, Some(a.seed))?;
    run.input(&a.subs)?;
    let records = read_records(&a.subs)?;
    let mut corpus = build_corpus(&records, a.min_channel_freq, a.min_sentence_len)?;
    if !a.no_shuffle {
        corpus = shuffle_sentences(&corpus, a.seed);
    }
    let mut buf = Vec::new();
    corpus.write_text(&mut buf)?;
    run.write(&a.out, &buf)?;
    let stats = serde_json::json!({
        "records": records.len(),
        "sentences": corpus.sentences.len(),
        "channels": corpus.channel_counts.len(),
        "tokens": corpus.n_tokens(),
    });
    eprintln!("corpus: {stats}");
    run.results(stats)?;
    run.finish(&beside(&a.out))
}
