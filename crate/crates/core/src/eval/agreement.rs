use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::util;

/// One tag's judgments keyed by `(reviewer, channel_id)`.
pub type Annotations = BTreeMap<(String, String), bool>;

fn by_channel(annotations: &Annotations) -> BTreeMap<&str, Vec<bool>> {
    let mut out: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for ((_, channel), &v) in annotations {
        out.entry(channel.as_str()).or_default().push(v);
    }
    out
}

/// Fraction of unordered reviewer pairs that agree, pooled over channels.
/// Channels judged by fewer than two reviewers contribute no pairs; `None`
/// when there are no pairs at all.
pub fn reviewer_agreement(annotations: &Annotations) -> Option<f64> {
    let (mut agree, mut pairs) = (0u64, 0u64);
    for votes in by_channel(annotations).values() {
        let yes = votes.iter().filter(|&&v| v).count() as u64;
        let no = votes.len() as u64 - yes;
        agree += yes * yes.saturating_sub(1) / 2 + no * no.saturating_sub(1) / 2;
        let n = votes.len() as u64;
        pairs += n * n.saturating_sub(1) / 2;
    }
    (pairs > 0).then(|| agree as f64 / pairs as f64)
}

/// Fraction of (model, reviewer) pairs that agree over channels the model predicted.
pub fn model_agreement(predictions: &BTreeMap<String, bool>, annotations: &Annotations) -> Option<f64> {
    let (mut agree, mut pairs) = (0u64, 0u64);
    for (channel, votes) in by_channel(annotations) {
        if let Some(&p) = predictions.get(channel) {
            pairs += votes.len() as u64;
            agree += votes.iter().filter(|&&v| v == p).count() as u64;
        }
    }
    (pairs > 0).then(|| agree as f64 / pairs as f64)
}

#[derive(Deserialize)]
struct AnnotationRow {
    reviewer: String,
    channel_id: String,
    tag: String,
    value: String,
}

/// Read a `reviewer,channel_id,tag,value` CSV into per-tag annotation maps.
pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, Annotations>> {
    let text = util::read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out: BTreeMap<String, Annotations> = BTreeMap::new();
    for (i, row) in reader.deserialize::<AnnotationRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::format(path, line, e.to_string()))?;
        let value = match row.value.trim() {
            "1" => true,
            "0" => false,
            v => return Err(Error::format(path, line, format!("value must be 0 or 1, got {v:?}"))),
        };
        out.entry(row.tag).or_default().insert((row.reviewer, row.channel_id), value);
    }
    Ok(out)
}
