use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chanvec::eval::{
    aggregate_views, combined_recall, model_agreement, read_annotations, reviewer_agreement, tag_multiplier,
    ChannelViews, Origin, TagStats,
};
use chanvec::knn::{read_label_rows, Label};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::manifest::{csv_bytes, json_bytes, Run};

#[derive(Args, Serialize, Debug)]
pub struct ReportArgs {
    /// Labels CSV; positive binary rows are the labeled members of each tag
    #[arg(long)]
    labels: PathBuf,
    /// Channel attributes CSV with `channel_id,subscriber_count,views_12mo` (extra columns ignored)
    #[arg(long)]
    channels: PathBuf,
    /// Discovered channels CSV with `channel_id,tag`; may be repeated
    #[arg(long)]
    predictions: Vec<PathBuf>,
    /// Classifier quality CSV with `tag,pol_precision,pol_recall,tag_precision,tag_recall`
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Reviewer judgments CSV with `reviewer,channel_id,tag,value`
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, default_value_t = 500_000)]
    head_subs: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
struct ChannelRow {
    channel_id: String,
    subscriber_count: u64,
    views_12mo: Option<u64>,
}

#[derive(Deserialize)]
struct PredictionRow {
    channel_id: String,
    tag: String,
}

#[derive(Deserialize, Serialize, Clone, Copy)]
struct StageStats {
    pol_precision: f64,
    pol_recall: f64,
    tag_precision: f64,
    tag_recall: f64,
}

#[derive(Deserialize)]
struct StatsRow {
    tag: String,
    #[serde(flatten)]
    stats: StageStats,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| chanvec::Error::Format { path: path.into(), line: i + 2, msg: e.to_string() }.into()))
        .collect()
}

#[derive(Serialize)]
struct HeadTailRow<'a> {
    tag: &'a str,
    segment: &'static str,
    channels: usize,
    views: f64,
    share: f64,
}

pub fn run(a: ReportArgs) -> Result<()> {
    let mut run = Run::start("report", &a, None)?;
    for p in [&a.labels, &a.channels].into_iter().chain(&a.predictions).chain(&a.stats).chain(&a.annotations) {
        run.input(p)?;
    }

    let mut members: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut origin: BTreeMap<String, Origin> = BTreeMap::new();
    for r in read_label_rows(&a.labels)? {
        if Label::parse(r.label_kind, &r.label)? == Label::Binary(true) {
            members.entry(r.tag).or_default().insert(r.channel_id.clone());
            origin.insert(r.channel_id, Origin::Labeled);
        }
    }
    for p in &a.predictions {
        for r in read_csv::<PredictionRow>(p)? {
            members.entry(r.tag).or_default().insert(r.channel_id.clone());
            origin.entry(r.channel_id).or_insert(Origin::Discovered);
        }
    }
    if members.is_empty() {
        return Err(chanvec::Error::EmptyInput("no tagged channels").into());
    }
    let channels: Vec<ChannelViews> = read_csv::<ChannelRow>(&a.channels)?
        .into_iter()
        .filter_map(|c| {
            let o = *origin.get(&c.channel_id)?;
            Some(ChannelViews {
                channel_id: c.channel_id,
                subscriber_count: c.subscriber_count,
                views_12mo: c.views_12mo,
                origin: o,
            })
        })
        .collect();

    let stage: BTreeMap<String, StageStats> = match &a.stats {
        Some(p) => read_csv::<StatsRow>(p)?.into_iter().map(|r| (r.tag, r.stats)).collect(),
        None => BTreeMap::new(),
    };
    let mut multipliers = BTreeMap::new();
    for (tag, s) in &stage {
        multipliers.insert(tag.clone(), tag_multiplier(s.pol_precision, s.pol_recall, s.tag_precision, s.tag_recall)?);
    }
    let annotations = match &a.annotations {
        Some(p) => read_annotations(p)?,
        None => BTreeMap::new(),
    };

    let tags: Vec<TagStats> = members
        .iter()
        .map(|(tag, set)| {
            let s = stage.get(tag);
            let ann = annotations.get(tag);
            let predicted: BTreeMap<String, bool> = ann
                .map(|ann| ann.keys().map(|(_, c)| (c.clone(), set.contains(c))).collect())
                .unwrap_or_default();
            TagStats {
                tag: tag.clone(),
                n_channels: set.len(),
                precision: s.map(|s| s.pol_precision * s.tag_precision),
                recall: s.map(|s| combined_recall(s.pol_recall, s.tag_recall)),
                multiplier: multipliers.get(tag).copied(),
                reviewer_agreement: ann.and_then(reviewer_agreement),
                model_agreement: ann.and_then(|ann| model_agreement(&predicted, ann)),
            }
        })
        .collect();
    let views = aggregate_views(&channels, &members, &multipliers, a.head_subs);
    if !views.skipped.is_empty() {
        eprintln!("warning: {} tagged channels have no view count and were skipped", views.skipped.len());
    }

    let header = ["tag", "n_channels", "precision", "recall", "multiplier", "reviewer_agreement", "model_agreement"];
    run.write(&a.out.join("tags.csv"), &csv_bytes(&header, &tags)?)?;
    let plot = views.tags.iter().flat_map(|t| {
        [
            HeadTailRow { tag: &t.tag, segment: "head", channels: t.head_channels, views: t.head_views, share: t.head_share },
            HeadTailRow {
                tag: &t.tag,
                segment: "tail",
                channels: t.tail_channels,
                views: t.tail_views,
                share: if t.total_views > 0.0 { 1.0 - t.head_share } else { 0.0 },
            },
        ]
    });
    run.write(&a.out.join("head_tail.csv"), &csv_bytes(&["tag", "segment", "channels", "views", "share"], plot)?)?;
    run.write(&a.out.join("report.json"), &json_bytes(&serde_json::json!({ "tags": tags, "views": views }))?)?;
    for t in &views.tags {
        eprintln!("{}: head share {:.0}% of {:.0} views", t.tag, t.head_share * 100.0, t.total_views);
    }
    run.finish(&a.out.join("manifest.json"))
}
