//! Synthetic subscription worlds with planted communities.
//!
//! Every commenter belongs to one home community and subscribes mostly
//! inside it. [`EmulatedSource`] answers subscription queries the way a
//! comment-sampling crawler sees the world: only commenters on sampled
//! videos, only public profiles, and full subscription lists for just a
//! handful of them per channel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_records, records_to_jsonl, CommenterRecord};
use crate::discovery::{ChannelMeta, SubscriptionSource};
use crate::error::{Error, Result};
use crate::knn::LabeledDataset;
use crate::util::{self, derived_rng};

/// Truncated power law on `[min, max]` with density proportional to `x^-exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub min: u64,
    pub max: u64,
}

impl PowerLaw {
    fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent.is_finite()) || self.min == 0 || self.max < self.min {
            return Err(Error::InvalidConfig(format!("bad power law {self:?}")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let (lo, hi) = (self.min as f64, self.max as f64);
        let u: f64 = rng.random();
        let x = if (self.exponent - 1.0).abs() < 1e-12 {
            lo * (hi / lo).powf(u)
        } else {
            let e = 1.0 - self.exponent;
            (lo.powf(e) + u * (hi.powf(e) - lo.powf(e))).powf(1.0 / e)
        };
        (x.round() as u64).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcosystemConfig {
    pub n_communities: usize,
    pub channels_per_community: usize,
    pub n_commenters: usize,
    pub mean_subs_per_commenter: f64,
    pub in_community_affinity: f64,
    pub public_profile_rate: f64,
    pub sample_subs_cap: usize,
    pub full_subs_commenters_per_channel: usize,
    pub comments_per_video: usize,
    pub videos_sampled: usize,
    /// Comments per video per subscriber, before the `comments_per_video` cap.
    pub comments_per_subscriber: f64,
    pub subscriber_counts: PowerLaw,
    pub seed: u64,
}

impl Default for EcosystemConfig {
    fn default() -> Self {
        EcosystemConfig {
            n_communities: 10,
            channels_per_community: 300,
            n_commenters: 20_000,
            mean_subs_per_commenter: 210.0,
            in_community_affinity: 0.9,
            public_profile_rate: 0.30,
            sample_subs_cap: 30,
            full_subs_commenters_per_channel: 10,
            comments_per_video: 100,
            videos_sampled: 10,
            comments_per_subscriber: 1e-3,
            subscriber_counts: PowerLaw { exponent: 1.5, min: 10_000, max: 10_000_000 },
            seed: 1,
        }
    }
}

impl EcosystemConfig {
    pub fn n_channels(&self) -> usize {
        self.n_communities * self.channels_per_community
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_communities == 0
            || self.channels_per_community == 0
            || self.n_commenters == 0
            || self.sample_subs_cap == 0
            || self.comments_per_video == 0
            || self.videos_sampled == 0
        {
            return bad("community, channel, commenter and sampling counts must be positive".into());
        }
        for (name, r) in [
            ("in_community_affinity", self.in_community_affinity),
            ("public_profile_rate", self.public_profile_rate),
            ("comments_per_subscriber", self.comments_per_subscriber),
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {r}"));
            }
        }
        self.subscriber_counts.validate()?;
        let mean = self.mean_subs_per_commenter;
        if !(mean > 0.0 && mean.is_finite()) {
            return bad(format!("mean_subs_per_commenter must be positive, got {mean}"));
        }
        if mean > self.n_channels() as f64 {
            return bad(format!("mean of {mean} subscriptions exceeds the {} channels", self.n_channels()));
        }
        let home = mean * self.in_community_affinity;
        if home > self.channels_per_community as f64 {
            return bad(format!(
                "expected {home:.1} home subscriptions but communities have {} channels",
                self.channels_per_community
            ));
        }
        let away = mean - home;
        let others = self.n_channels() - self.channels_per_community;
        if away > others as f64 || (others == 0 && self.in_community_affinity < 1.0) {
            return bad(format!("expected {away:.1} out-of-community subscriptions but only {others} other channels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthChannel {
    pub channel_id: String,
    pub community: usize,
    pub subscriber_count: u64,
    pub views_12mo: u64,
    pub title: String,
}

/// The complete world: channel attributes and every commenter's full subscription set.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Sorted by ID.
    channels: Vec<SynthChannel>,
    commenters: Vec<String>,
    /// Per commenter, indices into `channels` in subscription-list order.
    subscriptions: Vec<Vec<u32>>,
}

impl GroundTruth {
    fn new(mut channels: Vec<SynthChannel>, subscriptions: Vec<(String, Vec<String>)>) -> Result<Self> {
        channels.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
        if channels.windows(2).any(|w| w[0].channel_id == w[1].channel_id) {
            return Err(Error::InvalidRecord("duplicate channel in world".into()));
        }
        let lookup: BTreeMap<&str, u32> =
            channels.iter().enumerate().map(|(i, c)| (c.channel_id.as_str(), i as u32)).collect();
        let mut commenters = Vec::with_capacity(subscriptions.len());
        let mut subs = Vec::with_capacity(subscriptions.len());
        for (id, list) in subscriptions {
            let idx = list
                .iter()
                .map(|c| lookup.get(c.as_str()).copied().ok_or_else(|| Error::UnknownChannel(c.clone())))
                .collect::<Result<Vec<u32>>>()?;
            commenters.push(id);
            subs.push(idx);
        }
        Ok(GroundTruth { channels, commenters, subscriptions: subs })
    }

    pub fn channels(&self) -> &[SynthChannel] {
        &self.channels
    }

    pub fn channel(&self, id: &str) -> Option<&SynthChannel> {
        self.index_of(id).map(|i| &self.channels[i])
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.channels.binary_search_by(|c| c.channel_id.as_str().cmp(id)).ok()
    }

    pub fn community_of(&self, id: &str) -> Option<usize> {
        self.channel(id).map(|c| c.community)
    }

    pub fn community_members(&self, community: usize) -> BTreeSet<String> {
        self.channels.iter().filter(|c| c.community == community).map(|c| c.channel_id.clone()).collect()
    }

    pub fn n_commenters(&self) -> usize {
        self.commenters.len()
    }

    pub fn commenters(&self) -> &[String] {
        &self.commenters
    }

    /// Full subscription set of the `i`th commenter.
    pub fn subscriptions_of(&self, i: usize) -> Vec<&str> {
        self.subscriptions[i].iter().map(|&c| self.channels[c as usize].channel_id.as_str()).collect()
    }

    /// Every commenter's full subscription list.
    pub fn full_records(&self) -> Vec<CommenterRecord> {
        (0..self.commenters.len())
            .filter(|&i| !self.subscriptions[i].is_empty())
            .map(|i| CommenterRecord {
                commenter_id: self.commenters[i].clone(),
                channel_ids: self.subscriptions_of(i).into_iter().map(str::to_owned).collect(),
                full: true,
            })
            .collect()
    }
}

/// Draw a world. Same config, same world.
pub fn generate_world(config: &EcosystemConfig) -> Result<GroundTruth> {
    config.validate()?;
    let n_channels = config.n_channels();
    let cpc = config.channels_per_community;

    let mut rng = derived_rng(config.seed, "channels");
    let mut community: Vec<usize> = (0..n_channels).map(|i| i / cpc).collect();
    community.shuffle(&mut rng);
    let views_factor = LogNormal::new(30f64.ln(), 1.0).expect("valid log-normal");
    let channels: Vec<SynthChannel> = (0..n_channels)
        .map(|i| {
            let subscriber_count = config.subscriber_counts.sample(&mut rng);
            let views = (subscriber_count as f64 * views_factor.sample(&mut rng)).round() as u64;
            SynthChannel {
                channel_id: format!("ch{i:05}"),
                community: community[i],
                subscriber_count,
                views_12mo: views,
                title: format!("Channel {i}"),
            }
        })
        .collect();

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); config.n_communities];
    for (i, &c) in community.iter().enumerate() {
        members[c].push(i as u32);
    }
    let outside: Vec<Vec<u32>> = (0..config.n_communities)
        .map(|c| (0..n_channels as u32).filter(|&i| community[i as usize] != c).collect())
        .collect();

    let mut rng = derived_rng(config.seed, "commenters");
    let count = Poisson::new(config.mean_subs_per_commenter)
        .map_err(|e| Error::InvalidConfig(format!("subscription count distribution: {e}")))?;
    let mut subscriptions = Vec::with_capacity(config.n_commenters);
    for u in 0..config.n_commenters {
        let home = rng.random_range(0..config.n_communities);
        let n = (count.sample(&mut rng) as usize).clamp(1, n_channels);
        let home_draw = Binomial::new(n as u64, config.in_community_affinity)
            .expect("affinity validated")
            .sample(&mut rng) as usize;
        // Overflow is dropped rather than moved, so clamping never changes the affinity.
        let home_n = home_draw.min(cpc);
        let away_n = (n - home_draw).min(outside[home].len());
        let mut picked: Vec<String> = Vec::with_capacity(home_n + away_n);
        for i in index::sample(&mut rng, cpc, home_n) {
            picked.push(channels[members[home][i] as usize].channel_id.clone());
        }
        for i in index::sample(&mut rng, outside[home].len(), away_n) {
            picked.push(channels[outside[home][i] as usize].channel_id.clone());
        }
        // Subscription lists carry no community ordering.
        picked.shuffle(&mut rng);
        subscriptions.push((format!("u{u:06}"), picked));
    }
    GroundTruth::new(channels, subscriptions)
}

/// Generate a world and a source that samples it.
pub fn generate_ecosystem(config: &EcosystemConfig) -> Result<(Arc<GroundTruth>, EmulatedSource)> {
    let truth = Arc::new(generate_world(config)?);
    let source = EmulatedSource::new(config.clone(), Arc::clone(&truth))?;
    Ok((truth, source))
}

/// Answers subscription queries by sampling commenters from a [`GroundTruth`].
///
/// Responses depend only on the world, the config and the queried channel,
/// so repeating a query returns the same records.
#[derive(Debug, Clone)]
pub struct EmulatedSource {
    config: EcosystemConfig,
    truth: Arc<GroundTruth>,
    /// Per channel, sorted commenter indices.
    subscribers: Vec<Vec<u32>>,
    public: Vec<bool>,
}

impl EmulatedSource {
    pub fn new(config: EcosystemConfig, truth: Arc<GroundTruth>) -> Result<Self> {
        config.validate()?;
        let mut subscribers = vec![Vec::new(); truth.channels.len()];
        for (u, subs) in truth.subscriptions.iter().enumerate() {
            for &c in subs {
                subscribers[c as usize].push(u as u32);
            }
        }
        let public = truth
            .commenters
            .iter()
            .map(|id| derived_rng(config.seed, &format!("public/{id}")).random_bool(config.public_profile_rate))
            .collect();
        Ok(EmulatedSource { config, truth, subscribers, public })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn config(&self) -> &EcosystemConfig {
        &self.config
    }

    /// Public commenters seen on one channel's videos, flagged when their full list is fetched.
    fn sample_channel(&self, channel: usize) -> Vec<(u32, bool)> {
        let subs = &self.subscribers[channel];
        if subs.is_empty() {
            return Vec::new();
        }
        let c = &self.truth.channels[channel];
        let mut rng = derived_rng(self.config.seed, &format!("query/{}", c.channel_id));
        let per_video = ((c.subscriber_count as f64 * self.config.comments_per_subscriber).ceil() as usize)
            .clamp(1, self.config.comments_per_video);
        let mut seen = BTreeSet::new();
        for _ in 0..per_video * self.config.videos_sampled {
            seen.insert(subs[rng.random_range(0..subs.len())]);
        }
        let public: Vec<u32> = seen.into_iter().filter(|&u| self.public[u as usize]).collect();
        let n_full = self.config.full_subs_commenters_per_channel.min(public.len());
        let mut full = vec![false; public.len()];
        for i in index::sample(&mut rng, public.len(), n_full) {
            full[i] = true;
        }
        public.into_iter().zip(full).collect()
    }

    fn record(&self, commenter: u32, full: bool) -> CommenterRecord {
        let all = &self.truth.subscriptions[commenter as usize];
        let id = &self.truth.commenters[commenter as usize];
        let cap = self.config.sample_subs_cap;
        let chosen: Vec<u32> = if full || all.len() <= cap {
            all.clone()
        } else {
            // A profile always shows the same sample.
            let mut rng = derived_rng(self.config.seed, &format!("sample/{id}"));
            let mut pick = index::sample(&mut rng, all.len(), cap).into_vec();
            pick.sort_unstable();
            pick.into_iter().map(|i| all[i]).collect()
        };
        CommenterRecord {
            commenter_id: id.clone(),
            channel_ids: chosen.iter().map(|&c| self.truth.channels[c as usize].channel_id.clone()).collect(),
            full,
        }
    }
}

impl SubscriptionSource for EmulatedSource {
    fn query_commenter_subs(&self, channels: &BTreeSet<String>) -> Result<Vec<CommenterRecord>> {
        let idx: Vec<usize> = channels.iter().filter_map(|c| self.truth.index_of(c)).collect();
        let per_channel: Vec<Vec<(u32, bool)>> = idx.par_iter().map(|&c| self.sample_channel(c)).collect();
        let mut merged: BTreeMap<u32, bool> = BTreeMap::new();
        for (u, full) in per_channel.into_iter().flatten() {
            *merged.entry(u).or_insert(false) |= full;
        }
        Ok(merged.into_iter().map(|(u, full)| self.record(u, full)).collect())
    }

    fn channel_metadata(&self, channels: &BTreeSet<String>) -> Result<BTreeMap<String, ChannelMeta>> {
        Ok(channels
            .iter()
            .filter_map(|id| self.truth.channel(id))
            .map(|c| {
                (c.channel_id.clone(), ChannelMeta { subscriber_count: c.subscriber_count, title: c.title.clone() })
            })
            .collect())
    }
}

/// Labels for a planted world: channels of `positive_communities` are
/// positive. Draws `n_pos` positives and `n_neg` negatives to label; the
/// remaining positives are returned as the held-out set.
pub fn planted_labels(
    truth: &GroundTruth,
    positive_communities: &[usize],
    n_pos: usize,
    n_neg: usize,
    seed: u64,
) -> Result<(LabeledDataset, BTreeSet<String>)> {
    let wanted: BTreeSet<usize> = positive_communities.iter().copied().collect();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for c in &truth.channels {
        if wanted.contains(&c.community) { &mut pos } else { &mut neg }.push(c.channel_id.clone());
    }
    if n_pos > pos.len() || n_neg > neg.len() {
        return Err(Error::InvalidConfig(format!(
            "asked for {n_pos}/{n_neg} labels but the world has {}/{} positive/negative channels",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = derived_rng(seed, "labels");
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let labeled = LabeledDataset::binary(
        pos[..n_pos].iter().map(|c| (c.clone(), true)).chain(neg[..n_neg].iter().map(|c| (c.clone(), false))),
    )?;
    Ok((labeled, pos.split_off(n_pos).into_iter().collect()))
}

pub const CHANNELS_FILE: &str = "channels.csv";
pub const SUBSCRIPTIONS_FILE: &str = "subscriptions.jsonl";
pub const MANIFEST_FILE: &str = "world.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldManifest {
    pub config: EcosystemConfig,
    pub n_channels: usize,
    pub n_commenters: usize,
    pub subscriptions_sha256: String,
}

/// Write `channels.csv`, `subscriptions.jsonl` and the `world.json` manifest into `dir`.
pub fn export_world(config: &EcosystemConfig, truth: &GroundTruth, dir: &Path) -> Result<WorldManifest> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &truth.channels {
        w.serialize(c)?;
    }
    let channels_csv = w.into_inner().map_err(|e| Error::io(dir.join(CHANNELS_FILE), e.into_error()))?;
    let subs = records_to_jsonl(&truth.full_records())?;
    let manifest = WorldManifest {
        config: config.clone(),
        n_channels: truth.channels.len(),
        n_commenters: truth.commenters.len(),
        subscriptions_sha256: util::sha256_hex(&subs),
    };
    util::write_atomic(&dir.join(CHANNELS_FILE), &channels_csv)?;
    util::write_atomic(&dir.join(SUBSCRIPTIONS_FILE), &subs)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    util::write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

/// Read a world written by [`export_world`].
pub fn import_world(dir: &Path) -> Result<(EcosystemConfig, GroundTruth)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: WorldManifest = serde_json::from_str(&util::read_to_string(&manifest_path)?)
        .map_err(|e| Error::format(&manifest_path, e.line(), e.to_string()))?;
    let channels_path = dir.join(CHANNELS_FILE);
    let text = util::read_to_string(&channels_path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let channels = reader
        .deserialize::<SynthChannel>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::format(&channels_path, i + 2, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let records = read_records(&dir.join(SUBSCRIPTIONS_FILE))?;
    let truth = GroundTruth::new(channels, records.into_iter().map(|r| (r.commenter_id, r.channel_ids)).collect())?;
    Ok((manifest.config, truth))
}
