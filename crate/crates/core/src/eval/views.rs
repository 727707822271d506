use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Labeled,
    Discovered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelViews {
    pub channel_id: String,
    pub subscriber_count: u64,
    pub views_12mo: Option<u64>,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagViews {
    pub tag: String,
    pub multiplier: f64,
    pub head_channels: usize,
    pub tail_channels: usize,
    /// Unadjusted sums over the tag's channels.
    pub head_views_raw: u64,
    pub tail_views_raw: u64,
    /// Labeled views plus `multiplier` times discovered views.
    pub head_views: f64,
    pub tail_views: f64,
    pub total_views: f64,
    pub head_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewsReport {
    pub head_min_subs: u64,
    pub tags: Vec<TagViews>,
    /// Tagged channels skipped because their view count is missing or unknown.
    pub skipped: Vec<String>,
}

/// `head / (head + tail)`, or 0 when both are zero.
pub fn head_share(head: f64, tail: f64) -> f64 {
    if head + tail > 0.0 {
        head / (head + tail)
    } else {
        0.0
    }
}

/// Per-tag head/tail view totals. Channels with `subscriber_count >=
/// head_min_subs` are head channels. Tags without a multiplier use 1.
pub fn aggregate_views(
    channels: &[ChannelViews],
    tag_channels: &BTreeMap<String, BTreeSet<String>>,
    multipliers: &BTreeMap<String, f64>,
    head_min_subs: u64,
) -> ViewsReport {
    let by_id: BTreeMap<&str, &ChannelViews> = channels.iter().map(|c| (c.channel_id.as_str(), c)).collect();
    let mut skipped = BTreeSet::new();
    let mut tags = Vec::with_capacity(tag_channels.len());
    for (tag, members) in tag_channels {
        let multiplier = multipliers.get(tag).copied().unwrap_or(1.0);
        let mut t = TagViews {
            tag: tag.clone(),
            multiplier,
            head_channels: 0,
            tail_channels: 0,
            head_views_raw: 0,
            tail_views_raw: 0,
            head_views: 0.0,
            tail_views: 0.0,
            total_views: 0.0,
            head_share: 0.0,
        };
        for id in members {
            let Some((c, views)) = by_id.get(id.as_str()).and_then(|c| Some((*c, c.views_12mo?))) else {
                skipped.insert(id.clone());
                continue;
            };
            let weight = match c.origin {
                Origin::Labeled => 1.0,
                Origin::Discovered => multiplier,
            };
            let adjusted = weight * views as f64;
            if c.subscriber_count >= head_min_subs {
                t.head_channels += 1;
                t.head_views_raw += views;
                t.head_views += adjusted;
            } else {
                t.tail_channels += 1;
                t.tail_views_raw += views;
                t.tail_views += adjusted;
            }
        }
        t.total_views = t.head_views + t.tail_views;
        t.head_share = head_share(t.head_views, t.tail_views);
        tags.push(t);
    }
    ViewsReport { head_min_subs, tags, skipped: skipped.into_iter().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ch(id: &str, subs: u64, views: Option<u64>, origin: Origin) -> ChannelViews {
        ChannelViews { channel_id: id.into(), subscriber_count: subs, views_12mo: views, origin }
    }

    #[test]
    fn published_head_shares() {
        let share = head_share(930_442_686.0, 4_429_836_465.0);
        assert_eq!((share * 100.0).round(), 17.0);
        let share = head_share(17_218_750_066.0, 2_480_298_183.0);
        assert_eq!((share * 100.0).round(), 87.0);
    }

    #[test]
    fn labeled_only_totals_are_raw_sums() {
        let channels = vec![
            ch("a", 600_000, Some(100), Origin::Labeled),
            ch("b", 500_000, Some(50), Origin::Labeled),
            ch("c", 499_999, Some(7), Origin::Labeled),
        ];
        let tags = BTreeMap::from([("T".to_string(), BTreeSet::from(["a".into(), "b".into(), "c".into()]))]);
        let r = aggregate_views(&channels, &tags, &BTreeMap::new(), 500_000);
        let t = &r.tags[0];
        assert_eq!((t.head_channels, t.tail_channels), (2, 1));
        assert_eq!((t.head_views_raw, t.tail_views_raw), (150, 7));
        assert_eq!(t.total_views, 157.0);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn multiplier_scales_discovered_only() {
        let channels = vec![
            ch("l", 10, Some(100), Origin::Labeled),
            ch("d", 10, Some(100), Origin::Discovered),
            ch("m", 10, None, Origin::Discovered),
        ];
        let tags = BTreeMap::from([("T".to_string(), BTreeSet::from(["l".into(), "d".into(), "m".into(), "x".into()]))]);
        let mult = BTreeMap::from([("T".to_string(), 1.5)]);
        let r = aggregate_views(&channels, &tags, &mult, 0);
        assert_eq!(r.tags[0].total_views, 250.0);
        assert_eq!(r.tags[0].head_views_raw, 200);
        assert_eq!(r.skipped, vec!["m".to_string(), "x".to_string()]);
    }

    proptest! {
        #[test]
        fn head_plus_tail_is_total(
            rows in prop::collection::vec((0u64..2_000_000, 0u64..1_000_000_000, any::<bool>()), 1..40),
            cut in 0u64..2_000_000,
        ) {
            let channels: Vec<ChannelViews> = rows.iter().enumerate().map(|(i, &(s, v, d))| {
                ch(&format!("c{i}"), s, Some(v), if d { Origin::Discovered } else { Origin::Labeled })
            }).collect();
            let tags = BTreeMap::from([("T".to_string(), channels.iter().map(|c| c.channel_id.clone()).collect())]);
            let r = aggregate_views(&channels, &tags, &BTreeMap::new(), cut);
            let raw: u64 = rows.iter().map(|r| r.1).sum();
            prop_assert_eq!(r.tags[0].head_views_raw + r.tags[0].tail_views_raw, raw);
            prop_assert_eq!(r.tags[0].head_channels + r.tags[0].tail_channels, rows.len());
        }
    }
}
