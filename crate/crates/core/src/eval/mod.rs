//! Classification metrics, cross-validation, reviewer agreement and the
//! arithmetic used to turn per-stage precision/recall into group-size
//! estimates.

mod agreement;
mod cv;
mod views;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agreement::{model_agreement, read_annotations, reviewer_agreement, Annotations};
pub use cv::{assign_folds, cross_validate, CvOutcome, CvScore, Folds};
pub use views::{aggregate_views, head_share, ChannelViews, Origin, TagViews, ViewsReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Undefined ratios (zero denominators) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub base_rate: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub roc_auc: Option<f64>,
    pub counts: Counts,
}

/// Confusion counts with `score >= threshold` predicted positive.
pub fn confusion_metrics(predictions: &[(f64, bool)], threshold: f64) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let mut c = Counts::default();
    for &(s, y) in predictions {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(MetricsReport {
        threshold,
        base_rate: (c.tp + c.fn_) as f64 / c.total() as f64,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        roc_auc: roc_auc(predictions).ok(),
        counts: c,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half (Mann-Whitney U with mid-ranks).
pub fn roc_auc(predictions: &[(f64, bool)]) -> Result<f64> {
    let pos = predictions.iter().filter(|p| p.1).count();
    let neg = predictions.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC-AUC needs both positive and negative examples".into()));
    }
    if predictions.iter().any(|p| p.0.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    let mut sorted: Vec<(f64, bool)> = predictions.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * sorted[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Recall of a two-stage pipeline: a channel must survive both stages.
pub fn combined_recall(recall_stage1: f64, recall_stage2: f64) -> f64 {
    recall_stage1 * recall_stage2
}

/// Correction factor for tag group sizes: combined precision over combined recall.
pub fn tag_multiplier(
    pol_precision: f64,
    pol_recall: f64,
    tag_precision: f64,
    tag_recall: f64,
) -> Result<f64> {
    if pol_recall <= 0.0 || tag_recall <= 0.0 {
        return Err(Error::Degenerate("multiplier undefined for zero recall".into()));
    }
    Ok((pol_precision * tag_precision) / (pol_recall * tag_recall))
}

/// Per-tag classifier summary, one row of the tag report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub tag: String,
    pub n_channels: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub multiplier: Option<f64>,
    pub reviewer_agreement: Option<f64>,
    pub model_agreement: Option<f64>,
}
