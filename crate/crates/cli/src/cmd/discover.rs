use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use chanvec::discovery::{
    final_prediction, load_checkpoint, resume_discovery, round_log_jsonl, save_checkpoint, DiscoveryConfig,
    DiscoveryState, STATE_FILE,
};
use chanvec::synth::{import_world, EmulatedSource};
use clap::Args;
use serde::Serialize;

use super::{load_labels, TrainFlags};
use crate::manifest::{csv_bytes, json_bytes, Run};
use crate::Usage;

#[derive(Args, Serialize, Debug)]
pub struct DiscoverArgs {
    /// World directory written by `synth-gen`
    #[arg(long)]
    world: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    tag: Option<String>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    tau: usize,
    #[arg(long, default_value_t = 4)]
    max_rounds: usize,
    #[arg(long, default_value_t = chanvec::knn::DEFAULT_K)]
    k: usize,
    /// Final-prediction threshold
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// Recall floor for each round's cross-validated threshold
    #[arg(long, default_value_t = 0.9)]
    round_min_recall: f64,
    /// Use --threshold in every round instead of a cross-validated one
    #[arg(long)]
    fixed_round_threshold: bool,
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,
    #[arg(long, default_value_t = 5)]
    min_embed_subs: usize,
    #[arg(long, default_value_t = 20)]
    min_final_subs: usize,
    #[arg(long, default_value_t = 3_000_000)]
    heuristic_negative_subs: u64,
    #[arg(long, default_value_t = 16)]
    small_dims: usize,
    #[command(flatten)]
    train: TrainFlags,
    /// Continue from the checkpoint in --out if there is one
    #[arg(long)]
    resume: bool,
}

#[derive(Serialize)]
struct TagRow<'a> {
    channel_id: &'a str,
    tag: &'a str,
}

pub fn run(a: DiscoverArgs) -> Result<()> {
    let mut run = Run::start("discover", &a, Some(a.train.seed))?;
    run.input(&a.world)?;
    run.input(&a.labels)?;
    let (tag, labeled) = load_labels(&a.labels, a.tag.as_deref())?;
    let config = DiscoveryConfig {
        k: a.k,
        knn_threshold: a.threshold,
        tau: a.tau,
        max_rounds: a.max_rounds,
        min_commenter_subs_embed: a.min_embed_subs,
        min_commenter_subs_final: a.min_final_subs,
        heuristic_negative_min_subs: a.heuristic_negative_subs,
        round_min_recall: (!a.fixed_round_threshold).then_some(a.round_min_recall),
        cv_folds: a.cv_folds,
        embedding_main: a.train.config(a.train.dims, a.min_embed_subs)?,
        embedding_small: a.train.config(a.small_dims, a.min_embed_subs)?,
        ..Default::default()
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;

    let (world_config, truth) = import_world(&a.world)?;
    let source = EmulatedSource::new(world_config, Arc::new(truth))?;

    let checkpoint = a.out.join("checkpoint");
    let mut state = if a.resume && checkpoint.join(STATE_FILE).exists() {
        let s = load_checkpoint(&checkpoint)?;
        if s.labeled().positives() != labeled.positives() {
            return Err(Usage("checkpoint was started from different labels".into()).into());
        }
        eprintln!("resuming after round {}", s.iteration());
        s
    } else {
        let (pos, neg) = (labeled.positives().len(), labeled.negatives().len());
        if pos < a.k || neg < a.k {
            return Err(Usage(format!("need at least k={} positives and negatives, got {pos} and {neg}", a.k)).into());
        }
        DiscoveryState::new(labeled)?
    };
    resume_discovery(&mut state, &source, &config, |s| {
        let log = s.round_log().last().expect("a round was logged");
        eprintln!(
            "round {}: {} new candidates, {} new heuristic negatives, {} channels total",
            log.round, log.new_candidates, log.new_heuristic_negatives, log.cumulative_channels
        );
        save_checkpoint(s, &checkpoint)
    })
    .context("discovery")?;
    save_checkpoint(&state, &checkpoint)?;
    for f in [chanvec::discovery::RECORDS_FILE, STATE_FILE] {
        run.wrote(&checkpoint.join(f))?;
    }
    run.write(&a.out.join("rounds.jsonl"), &round_log_jsonl(&state)?)?;

    let prediction = final_prediction(&state, &config)?;
    let header =
        ["channel_id", "round", "score", "score_main", "score_small", "commenter_subs", "accepted"];
    run.write(&a.out.join("candidates.csv"), &csv_bytes(&header, &prediction.candidates)?)?;
    let discovered = prediction.discovered();
    let rows = discovered.iter().map(|c| TagRow { channel_id: c, tag: &tag });
    run.write(&a.out.join("discovered.csv"), &csv_bytes(&["channel_id", "tag"], rows)?)?;
    let summary = serde_json::json!({
        "tag": tag,
        "rounds": state.iteration(),
        "candidates": state.candidates().len(),
        "discovered": discovered.len(),
        "unsupported": prediction.unsupported,
        "labeled_after": state.labeled().len(),
    });
    run.write(&a.out.join("summary.json"), &json_bytes(&summary)?)?;
    eprintln!("discovered {} channels after {} rounds", discovered.len(), state.iteration());
    run.results(summary)?;
    run.finish(&a.out.join("manifest.json"))
}
