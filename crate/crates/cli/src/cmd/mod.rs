pub mod classify;
pub mod corpus;
pub mod cv;
pub mod discover;
pub mod report;
pub mod synth;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};
use chanvec::knn::{dataset_for_tag, read_label_rows, tags};
use chanvec::LabeledDataset;

use crate::Usage;

/// The dataset for `tag`, or for the only tag in the file when none is given.
pub fn load_labels(path: &Path, tag: Option<&str>) -> Result<(String, LabeledDataset)> {
    let rows = read_label_rows(path)?;
    let tag = match tag {
        Some(t) => t.to_string(),
        None => match tags(&rows).as_slice() {
            [only] => only.clone(),
            [] => return Err(chanvec::Error::EmptyInput("labels file has no rows").into()),
            many => return Err(Usage(format!("labels file has tags {many:?}; pick one with --tag")).into()),
        },
    };
    let ds = dataset_for_tag(&rows, &tag).with_context(|| format!("tag {tag:?} in {}", path.display()))?;
    Ok((tag, ds))
}

/// Non-empty lines of a file, trimmed.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

/// Embedding training flags shared by `train` and `discover`.
#[derive(clap::Args, serde::Serialize, Clone, Debug)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 200)]
    pub dims: usize,
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub negative: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Single-threaded, bit-reproducible training
    #[arg(long)]
    pub deterministic: bool,
}

impl TrainFlags {
    pub fn config(&self, dims: usize, min_count: usize) -> Result<chanvec::EmbeddingConfig> {
        Ok(chanvec::EmbeddingConfig {
            dims,
            window: self.window,
            negative_samples: self.negative,
            epochs: self.epochs,
            initial_lr: self.lr,
            min_count,
            seed: self.seed,
            deterministic: self.deterministic,
            workers: crate::thread_cap()?,
        })
    }
}
