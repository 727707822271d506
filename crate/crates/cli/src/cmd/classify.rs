use std::path::PathBuf;

use anyhow::Result;
use chanvec::embed::read_text;
use chanvec::knn::{classify, ensemble_score, Class, KnnIndex};
use chanvec::{EmbeddingSet, LabelKind, Prediction};
use clap::{Args, ValueEnum};
use serde::Serialize;

use super::{load_labels, read_lines};
use crate::manifest::{beside, csv_bytes, Run};
use crate::Usage;

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Binary,
    Multiclass,
    Regression,
}

#[derive(Args, Serialize, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Labels CSV (`channel_id,label_kind,label,tag`)
    #[arg(long)]
    labels: PathBuf,
    /// Tag to use when the labels file has several
    #[arg(long)]
    tag: Option<String>,
    /// Output predictions CSV
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = chanvec::knn::DEFAULT_K)]
    k: usize,
    /// Binary decision threshold on the positive fraction
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = Mode::Binary)]
    mode: Mode,
    /// Second embedding file; binary scores are averaged over both
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Channels to score, one per line (default: every unlabeled embedded channel)
    #[arg(long)]
    channels: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row<'a> {
    channel_id: &'a str,
    score: f64,
    predicted_label: String,
}

pub fn run(a: ClassifyArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Usage(format!("--threshold must be in [0, 1], got {}", a.threshold)).into());
    }
    if a.ensemble.is_some() && a.mode != Mode::Binary {
        return Err(Usage("--ensemble only applies to --mode binary".into()).into());
    }
    let mut run = Run::start("classify", &a, None)?;
    for p in [Some(&a.embeddings), Some(&a.labels), a.ensemble.as_ref(), a.channels.as_ref()].into_iter().flatten() {
        run.input(p)?;
    }
    let (tag, labeled) = load_labels(&a.labels, a.tag.as_deref())?;
    let expected = match a.mode {
        Mode::Binary => LabelKind::Binary,
        Mode::Multiclass => LabelKind::Categorical,
        Mode::Regression => LabelKind::Numeric,
    };
    if labeled.kind() != expected {
        return Err(chanvec::Error::LabelKind { expected: expected.as_str(), got: labeled.kind().as_str() }.into());
    }
    let main = read_text(&a.embeddings)?;
    let second: Option<EmbeddingSet> = a.ensemble.as_deref().map(read_text).transpose()?;
    let queries: Vec<String> = match &a.channels {
        Some(p) => read_lines(p)?,
        None => main.ids().iter().filter(|id| !labeled.contains(id)).cloned().collect(),
    };

    let index = KnnIndex::new(&main, &labeled)?;
    let second_index = second.as_ref().map(|s| KnnIndex::new(s, &labeled)).transpose()?;
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for q in &queries {
        let p: chanvec::Result<Prediction> = match a.mode {
            Mode::Binary => index.score(q, a.k),
            Mode::Multiclass => index.multiclass(q, a.k),
            Mode::Regression => index.regression(q, a.k),
        };
        let p = match p {
            Ok(p) => p,
            Err(chanvec::Error::UnknownChannel(_) | chanvec::Error::UnsupportedChannel(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let (score, label) = match (&second_index, a.mode) {
            (Some(si), _) => match si.score(q, a.k) {
                Ok(p2) => {
                    let s = ensemble_score(&[p, p2])?;
                    (s, binary(s, a.threshold))
                }
                Err(chanvec::Error::UnknownChannel(_) | chanvec::Error::UnsupportedChannel(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            },
            (None, Mode::Binary) => (p.score, binary(p.score, a.threshold)),
            (None, _) => (p.score, p.predicted_label.to_string()),
        };
        rows.push(Row { channel_id: q, score, predicted_label: label });
    }
    if rows.is_empty() {
        return Err(chanvec::Error::EmptyInput("no channel could be scored").into());
    }
    run.write(&a.out, &csv_bytes(&["channel_id", "score", "predicted_label"], &rows)?)?;
    eprintln!("tag {tag}: scored {} channels, skipped {skipped} without embeddings", rows.len());
    run.results(serde_json::json!({ "tag": tag, "scored": rows.len(), "skipped": skipped }))?;
    run.finish(&beside(&a.out))
}

fn binary(score: f64, threshold: f64) -> String {
    match classify(score, threshold) {
        Class::Positive => "1".into(),
        Class::Negative => "0".into(),
    }
}
