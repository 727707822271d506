//! Iterative candidate discovery over a subscription source, and the final
//! prediction over the candidates it finds.
//!
//! Round `i` queries the channels first found in round `i`, retrains
//! embeddings on everything fetched so far and scores every embedded channel
//! not yet in the candidate set against the labeled set. Channels scoring
//! above the round threshold become round `i + 1`. The loop stops when a
//! round finds `tau` or fewer channels, or after `max_rounds` rounds.

mod checkpoint;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{build_corpus, channel_sub_counts, shuffle_sentences, CommenterRecord, Corpus};
use crate::embed::{train_embeddings, EmbeddingConfig, EmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, Folds};
use crate::knn::{ensemble_score, select_threshold, KnnIndex, Label, LabelKind, LabeledDataset};

pub use checkpoint::{load_checkpoint, save_checkpoint, RECORDS_FILE, STATE_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub subscriber_count: u64,
    pub title: String,
}

/// Where commenter subscriptions come from.
///
/// Implementations must be idempotent for a fixed world and only return
/// commenters seen on the queried channels. Failures should use
/// [`Error::Source`] so callers can retry.
pub trait SubscriptionSource: Sync {
    fn query_commenter_subs(&self, channels: &BTreeSet<String>) -> Result<Vec<CommenterRecord>>;

    /// Metadata for the known channels among `channels`; unknown ones are omitted.
    fn channel_metadata(&self, channels: &BTreeSet<String>) -> Result<BTreeMap<String, ChannelMeta>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub k: usize,
    pub knn_threshold: f64,
    pub tau: usize,
    pub max_rounds: usize,
    pub min_commenter_subs_embed: usize,
    pub min_commenter_subs_final: usize,
    pub min_sentence_len: usize,
    pub heuristic_negative_min_subs: u64,
    /// Recall floor for the per-round cross-validated threshold. `None` uses `knn_threshold` every round.
    pub round_min_recall: Option<f64>,
    pub cv_folds: usize,
    pub embedding_main: EmbeddingConfig,
    pub embedding_small: EmbeddingConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            k: crate::knn::DEFAULT_K,
            knn_threshold: 0.8,
            tau: 50,
            max_rounds: 4,
            min_commenter_subs_embed: 5,
            min_commenter_subs_final: 20,
            min_sentence_len: 3,
            heuristic_negative_min_subs: 3_000_000,
            round_min_recall: Some(0.9),
            cv_folds: 5,
            embedding_main: EmbeddingConfig::default(),
            embedding_small: EmbeddingConfig::small(),
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.knn_threshold) {
            return bad("knn_threshold must be in [0, 1]");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1");
        }
        if self.min_commenter_subs_embed == 0 || self.min_sentence_len == 0 {
            return bad("corpus minimums must be at least 1");
        }
        if self.round_min_recall.is_some_and(|r| !(r > 0.0 && r <= 1.0)) {
            return bad("round_min_recall must be in (0, 1]");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        self.embedding_main.validate()?;
        self.embedding_small.validate()
    }

    fn corpus(&self, records: &[CommenterRecord]) -> Result<Corpus> {
        build_corpus(records, self.min_commenter_subs_embed, self.min_sentence_len)
    }

    fn train(&self, corpus: &Corpus, base: &EmbeddingConfig) -> Result<EmbeddingSet> {
        let cfg = EmbeddingConfig { min_count: self.min_commenter_subs_embed, ..base.clone() };
        train_embeddings(&shuffle_sentences(corpus, cfg.seed), &cfg)
    }
}

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub queried_channels: usize,
    pub records: usize,
    pub embedded_channels: usize,
    pub threshold: f64,
    pub new_candidates: usize,
    pub new_heuristic_negatives: usize,
    pub cumulative_channels: usize,
}

/// Everything discovery has learned so far.
///
/// `rounds[0]` holds the labeled channels; `rounds[i]` the channels first
/// found by iteration `i`. The candidate set is their union, and
/// `provenance` maps each candidate to its 1-based round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryState {
    labeled: LabeledDataset,
    rounds: Vec<BTreeSet<String>>,
    candidates: BTreeSet<String>,
    provenance: BTreeMap<String, usize>,
    iteration: usize,
    finished: bool,
    metadata: BTreeMap<String, ChannelMeta>,
    round_log: Vec<RoundLog>,
    /// Accumulated commenter records, stored separately in checkpoints.
    #[serde(skip)]
    records: BTreeMap<String, CommenterRecord>,
}

impl DiscoveryState {
    pub fn new(labeled: LabeledDataset) -> Result<Self> {
        if labeled.kind() != LabelKind::Binary {
            return Err(Error::LabelKind { expected: "binary", got: labeled.kind().as_str() });
        }
        let first = labeled.channels();
        Ok(DiscoveryState {
            provenance: first.iter().map(|c| (c.clone(), 1)).collect(),
            candidates: first.clone(),
            rounds: vec![first],
            labeled,
            iteration: 0,
            finished: false,
            metadata: BTreeMap::new(),
            round_log: Vec::new(),
            records: BTreeMap::new(),
        })
    }

    pub fn labeled(&self) -> &LabeledDataset {
        &self.labeled
    }

    pub fn rounds(&self) -> &[BTreeSet<String>] {
        &self.rounds
    }

    pub fn candidates(&self) -> &BTreeSet<String> {
        &self.candidates
    }

    pub fn provenance(&self) -> &BTreeMap<String, usize> {
        &self.provenance
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// True once a round found `tau` or fewer channels.
    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn metadata(&self) -> &BTreeMap<String, ChannelMeta> {
        &self.metadata
    }

    pub fn round_log(&self) -> &[RoundLog] {
        &self.round_log
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    /// Accumulated records in commenter order.
    pub fn records(&self) -> Vec<CommenterRecord> {
        self.records.values().cloned().collect()
    }

    /// Check the structural invariants; used after loading a checkpoint.
    pub fn validate(&self) -> Result<()> {
        let broken = |m: &str| Err(Error::Degenerate(format!("inconsistent discovery state: {m}")));
        if self.rounds.len() != self.iteration + 1 {
            return broken("round count does not match iteration");
        }
        if !self.labeled.channels().is_subset(&self.rounds[0]) {
            return broken("labeled channels missing from the first round");
        }
        let mut seen = BTreeSet::new();
        for (i, round) in self.rounds.iter().enumerate() {
            for c in round {
                if !seen.insert(c) {
                    return broken("channel found in two rounds");
                }
                if self.provenance.get(c) != Some(&(i + 1)) {
                    return broken("provenance disagrees with rounds");
                }
            }
        }
        if seen.len() != self.candidates.len() || self.provenance.len() != self.candidates.len() {
            return broken("candidate set is not the union of rounds");
        }
        Ok(())
    }
}

/// Full records replace samples; otherwise the newer record wins.
fn merge_records(into: &mut BTreeMap<String, CommenterRecord>, new: Vec<CommenterRecord>) -> Result<()> {
    for r in new {
        r.validate()?;
        match into.get(&r.commenter_id) {
            Some(old) if old.full && !r.full => {}
            _ => {
                into.insert(r.commenter_id.clone(), r);
            }
        }
    }
    Ok(())
}

/// Channels at or above `min_subs` subscribers that are not known positives.
pub fn heuristic_negatives(
    metadata: &BTreeMap<String, ChannelMeta>,
    positives: &BTreeSet<String>,
    min_subs: u64,
) -> BTreeSet<String> {
    metadata
        .iter()
        .filter(|(id, m)| m.subscriber_count >= min_subs && !positives.contains(*id))
        .map(|(id, _)| id.clone())
        .collect()
}

fn round_threshold(set: &EmbeddingSet, labeled: &LabeledDataset, config: &DiscoveryConfig) -> Result<f64> {
    match config.round_min_recall {
        None => Ok(config.knn_threshold),
        Some(floor) => {
            let cv = cross_validate(set, labeled, config.k, Folds::K(config.cv_folds), config.embedding_main.seed)?;
            select_threshold(&cv.pairs(), floor)
        }
    }
}

/// Run one discovery round. On error the state is left untouched.
///
/// Returns the channels found this round.
pub fn run_iteration(
    state: &mut DiscoveryState,
    source: &dyn SubscriptionSource,
    config: &DiscoveryConfig,
) -> Result<BTreeSet<String>> {
    config.validate()?;
    if state.iteration >= config.max_rounds {
        return Err(Error::InvalidConfig(format!("already ran {} rounds", state.iteration)));
    }
    let query = &state.rounds[state.iteration];
    let fetched = source.query_commenter_subs(query)?;
    let meta = source.channel_metadata(query)?;

    let mut records = state.records.clone();
    merge_records(&mut records, fetched)?;
    let all: Vec<CommenterRecord> = records.values().cloned().collect();
    let embeddings = match config.corpus(&all) {
        Ok(corpus) => config.train(&corpus, &config.embedding_main)?,
        Err(Error::EmptyCorpus) => {
            return Err(Error::Degenerate("no channel has enough commenter subscriptions to embed".into()))
        }
        Err(e) => return Err(e),
    };
    let threshold = round_threshold(&embeddings, &state.labeled, config)?;
    let index = KnnIndex::new(&embeddings, &state.labeled)?;
    let mut found = BTreeSet::new();
    for id in embeddings.ids() {
        if state.candidates.contains(id) || !embeddings.is_supported(id) {
            continue;
        }
        if index.score(id, config.k)?.score >= threshold {
            found.insert(id.clone());
        }
    }

    let queried = query.len();
    state.records = records;
    state.metadata.extend(meta);
    state.iteration += 1;
    for c in &found {
        state.provenance.insert(c.clone(), state.iteration + 1);
    }
    state.candidates.extend(found.iter().cloned());
    state.rounds.push(found.clone());
    state.round_log.push(RoundLog {
        round: state.iteration,
        queried_channels: queried,
        records: state.records.len(),
        embedded_channels: embeddings.len(),
        threshold,
        new_candidates: found.len(),
        new_heuristic_negatives: 0,
        cumulative_channels: state.candidates.len(),
    });
    Ok(found)
}

/// Label queried channels with at least `heuristic_negative_min_subs`
/// subscribers as negatives, unless they are labeled already.
pub fn add_heuristic_negatives(state: &mut DiscoveryState, config: &DiscoveryConfig) -> Result<BTreeSet<String>> {
    let fresh: BTreeSet<String> =
        heuristic_negatives(&state.metadata, &state.labeled.positives(), config.heuristic_negative_min_subs)
            .into_iter()
            .filter(|c| !state.labeled.contains(c))
            .collect();
    for c in &fresh {
        state.labeled.insert(c.clone(), Label::Binary(false))?;
    }
    if let Some(log) = state.round_log.last_mut() {
        log.new_heuristic_negatives += fresh.len();
    }
    Ok(fresh)
}

/// Run discovery from a labeled set until it stops.
pub fn run_discovery(
    labeled: LabeledDataset,
    source: &dyn SubscriptionSource,
    config: &DiscoveryConfig,
) -> Result<DiscoveryState> {
    config.validate()?;
    let pos = labeled.positives().len();
    let neg = labeled.negatives().len();
    if pos < config.k || neg < config.k {
        return Err(Error::InvalidConfig(format!(
            "need at least k={} positive and negative channels, got {pos} and {neg}",
            config.k
        )));
    }
    let mut state = DiscoveryState::new(labeled)?;
    resume_discovery(&mut state, source, config, |_| Ok(()))?;
    Ok(state)
}

/// Continue discovery from `state`, calling `after_round` once each round is committed.
pub fn resume_discovery(
    state: &mut DiscoveryState,
    source: &dyn SubscriptionSource,
    config: &DiscoveryConfig,
    mut after_round: impl FnMut(&DiscoveryState) -> Result<()>,
) -> Result<()> {
    while !state.finished && state.iteration < config.max_rounds {
        let found = run_iteration(state, source, config)?;
        add_heuristic_negatives(state, config)?;
        if found.len() <= config.tau {
            state.finished = true;
        }
        after_round(state)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub channel_id: String,
    pub round: usize,
    pub score: f64,
    pub score_main: f64,
    pub score_small: f64,
    pub commenter_subs: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPrediction {
    pub candidates: Vec<ScoredCandidate>,
    /// Candidates without an embedding in the final corpus.
    pub unsupported: Vec<String>,
}

impl FinalPrediction {
    pub fn discovered(&self) -> BTreeSet<String> {
        self.candidates.iter().filter(|c| c.accepted).map(|c| c.channel_id.clone()).collect()
    }
}

/// Final filter on an ensembled candidate.
pub fn accept_candidate(score: f64, commenter_subs: usize, config: &DiscoveryConfig) -> bool {
    score >= config.knn_threshold && commenter_subs >= config.min_commenter_subs_final
}

/// Score every channel found after the first round with the averaged
/// main- and small-dimension classifiers trained on all records, and keep
/// those that clear the threshold and the commenter-subscription minimum.
/// Channels labeled negative (including heuristic negatives) are skipped.
pub fn final_prediction(state: &DiscoveryState, config: &DiscoveryConfig) -> Result<FinalPrediction> {
    config.validate()?;
    let records = state.records();
    let corpus = config.corpus(&records)?;
    let main = config.train(&corpus, &config.embedding_main)?;
    let small = config.train(&corpus, &config.embedding_small)?;
    let counts = channel_sub_counts(&records);
    let negatives = state.labeled.negatives();
    let main_index = KnnIndex::new(&main, &state.labeled)?;
    let small_index = KnnIndex::new(&small, &state.labeled)?;

    let mut out = FinalPrediction { candidates: Vec::new(), unsupported: Vec::new() };
    for id in state.candidates.difference(&state.rounds[0]) {
        if negatives.contains(id) {
            continue;
        }
        if !main.is_supported(id) || !small.is_supported(id) {
            out.unsupported.push(id.clone());
            continue;
        }
        let pm = main_index.score(id, config.k)?;
        let ps = small_index.score(id, config.k)?;
        let score = ensemble_score(&[pm.clone(), ps.clone()])?;
        let commenter_subs = counts.get(id).copied().unwrap_or(0);
        out.candidates.push(ScoredCandidate {
            channel_id: id.clone(),
            round: state.provenance[id],
            score,
            score_main: pm.score,
            score_small: ps.score,
            commenter_subs,
            accepted: accept_candidate(score, commenter_subs, config),
        });
    }
    Ok(out)
}

/// The round log as JSON lines.
pub fn round_log_jsonl(state: &DiscoveryState) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in &state.round_log {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}
