use std::path::PathBuf;

use anyhow::Result;
use chanvec::knn::{dataset_to_rows, label_rows_to_csv};
use chanvec::synth::{export_world, generate_world, planted_labels, EcosystemConfig, PowerLaw};
use clap::Args;
use serde::Serialize;

use crate::manifest::{csv_bytes, Run};

#[derive(Args, Serialize, Debug)]
pub struct SynthGenArgs {
    /// Output directory for the world files
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    communities: usize,
    #[arg(long, default_value_t = 300)]
    channels_per_community: usize,
    #[arg(long, default_value_t = 20_000)]
    commenters: usize,
    #[arg(long, default_value_t = 210.0)]
    mean_subs: f64,
    #[arg(long, default_value_t = 0.9)]
    affinity: f64,
    #[arg(long, default_value_t = 0.30)]
    public_rate: f64,
    #[arg(long, default_value_t = 30)]
    sample_cap: usize,
    #[arg(long, default_value_t = 10)]
    full_per_channel: usize,
    #[arg(long, default_value_t = 1.5)]
    subs_exponent: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Communities whose channels are positive in labels.csv
    #[arg(long, value_delimiter = ',', default_value = "0")]
    positive_communities: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    labeled_positives: usize,
    #[arg(long, default_value_t = 50)]
    labeled_negatives: usize,
    #[arg(long, default_value = "planted")]
    tag: String,
}

pub fn run(a: SynthGenArgs) -> Result<()> {
    let mut run = Run::start("synth-gen", &a, Some(a.seed))?;
    let defaults = EcosystemConfig::default();
    let config = EcosystemConfig {
        n_communities: a.communities,
        channels_per_community: a.channels_per_community,
        n_commenters: a.commenters,
        mean_subs_per_commenter: a.mean_subs,
        in_community_affinity: a.affinity,
        public_profile_rate: a.public_rate,
        sample_subs_cap: a.sample_cap,
        full_subs_commenters_per_channel: a.full_per_channel,
        subscriber_counts: PowerLaw { exponent: a.subs_exponent, ..defaults.subscriber_counts },
        seed: a.seed,
        ..defaults
    };
    let truth = generate_world(&config)?;
    let manifest = export_world(&config, &truth, &a.out)?;
    let (labeled, held_out) =
        planted_labels(&truth, &a.positive_communities, a.labeled_positives, a.labeled_negatives, a.seed)?;
    run.write(&a.out.join("labels.csv"), &label_rows_to_csv(&dataset_to_rows(&labeled, &a.tag))?)?;
    run.write(&a.out.join("held_out.csv"), &csv_bytes(&["channel_id"], held_out.iter().map(|c| (c,)))?)?;
    for f in [chanvec::synth::CHANNELS_FILE, chanvec::synth::SUBSCRIPTIONS_FILE, chanvec::synth::MANIFEST_FILE] {
        run.wrote(&a.out.join(f))?;
    }
    eprintln!(
        "world: {} channels, {} commenters; labeled {} (+{} held out)",
        manifest.n_channels,
        manifest.n_commenters,
        labeled.len(),
        held_out.len()
    );
    run.results(&manifest)?;
    run.finish(&a.out.join("manifest.json"))
}
