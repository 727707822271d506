use std::path::PathBuf;

use anyhow::Result;
use chanvec::embed::read_text;
use chanvec::eval::{confusion_metrics, cross_validate, Folds, MetricsReport};
use chanvec::knn::select_threshold;
use clap::Args;
use serde::Serialize;

use super::load_labels;
use crate::manifest::{beside, csv_bytes, json_bytes, Run};

#[derive(Args, Serialize, Debug)]
pub struct CvArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    tag: Option<String>,
    /// Metrics JSON
    #[arg(long)]
    out: PathBuf,
    /// Optional per-channel scores CSV
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = chanvec::knn::DEFAULT_K)]
    k: usize,
    /// Fold count, or `hold-one-out`
    #[arg(long, default_value = "hold-one-out")]
    #[serde(serialize_with = "folds_str")]
    folds: Folds,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fixed decision threshold; otherwise one is selected at --min-recall
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    min_recall: f64,
}

fn folds_str<S: serde::Serializer>(f: &Folds, s: S) -> Result<S::Ok, S::Error> {
    match f {
        Folds::HoldOneOut => s.serialize_str("hold-one-out"),
        Folds::K(n) => s.serialize_str(&n.to_string()),
    }
}

#[derive(Serialize)]
struct CvReport {
    tag: String,
    k: usize,
    folds: String,
    scored: usize,
    unsupported: Vec<String>,
    threshold_selected: bool,
    #[serde(flatten)]
    metrics: MetricsReport,
}

pub fn run(a: CvArgs) -> Result<()> {
    let mut run = Run::start("cv", &a, Some(a.seed))?;
    run.input(&a.embeddings)?;
    run.input(&a.labels)?;
    let (tag, labeled) = load_labels(&a.labels, a.tag.as_deref())?;
    let set = read_text(&a.embeddings)?;
    let outcome = cross_validate(&set, &labeled, a.k, a.folds, a.seed)?;
    let pairs = outcome.pairs();
    let threshold = match a.threshold {
        Some(t) => t,
        None => select_threshold(&pairs, a.min_recall)?,
    };
    let report = CvReport {
        tag,
        k: a.k,
        folds: match a.folds {
            Folds::HoldOneOut => "hold-one-out".into(),
            Folds::K(n) => n.to_string(),
        },
        scored: outcome.scores.len(),
        unsupported: outcome.unsupported.clone(),
        threshold_selected: a.threshold.is_none(),
        metrics: confusion_metrics(&pairs, threshold)?,
    };
    run.write(&a.out, &json_bytes(&report)?)?;
    if let Some(p) = &a.scores {
        let rows = outcome.scores.iter().map(|s| (&s.channel_id, s.score, u8::from(s.label)));
        run.write(p, &csv_bytes(&["channel_id", "score", "label"], rows)?)?;
    }
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    eprintln!(
        "{} channels: precision {} recall {} auc {} at threshold {threshold}",
        report.scored,
        show(report.metrics.precision),
        show(report.metrics.recall),
        show(report.metrics.roc_auc)
    );
    run.finish(&beside(&a.out))
}
