//! Subscription sentences: one per commenter, filtered and shuffled for training.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Channels a single commenter is subscribed to.
///
/// `full` records come from a complete subscription query; the others are
/// capped samples. Both are treated the same way during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommenterRecord {
    pub commenter_id: String,
    pub channel_ids: Vec<String>,
    #[serde(default)]
    pub full: bool,
}

impl CommenterRecord {
    pub fn new(
        commenter_id: impl Into<String>,
        channel_ids: Vec<String>,
        full: bool,
    ) -> Result<Self> {
        let record = CommenterRecord { commenter_id: commenter_id.into(), channel_ids, full };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.commenter_id.is_empty() {
            return Err(Error::InvalidRecord("empty commenter_id".into()));
        }
        if self.channel_ids.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "commenter `{}` has no channels",
                self.commenter_id
            )));
        }
        let mut seen = HashSet::with_capacity(self.channel_ids.len());
        for c in &self.channel_ids {
            if c.is_empty() || c.chars().any(char::is_whitespace) {
                return Err(Error::InvalidRecord(format!(
                    "commenter `{}` has malformed channel id {c:?}",
                    self.commenter_id
                )));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidRecord(format!(
                    "commenter `{}` lists channel `{c}` twice",
                    self.commenter_id
                )));
            }
        }
        Ok(())
    }
}

/// Filter parameters a corpus was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub min_channel_freq: usize,
    pub min_sentence_len: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams { min_channel_freq: 5, min_sentence_len: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    /// Number of sentences containing each channel.
    pub channel_counts: BTreeMap<String, usize>,
    pub params: CorpusParams,
}

impl Corpus {
    /// Wrap already-filtered sentences (e.g. read back from disk), recomputing counts.
    pub fn from_sentences(sentences: Vec<Vec<String>>, params: CorpusParams) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let channel_counts = count_sentences(&sentences);
        Ok(Corpus { sentences, channel_counts, params })
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Turn the sentences back into records with synthetic commenter IDs.
    pub fn to_records(&self) -> Vec<CommenterRecord> {
        self.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| CommenterRecord {
                commenter_id: format!("s{i}"),
                channel_ids: s.clone(),
                full: false,
            })
            .collect()
    }

    /// One sentence per line, channel IDs separated by single spaces.
    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        for s in &self.sentences {
            writeln!(w, "{}", s.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text(path: &Path, params: CorpusParams) -> Result<Self> {
        let text = util::read_to_string(path)?;
        let mut sentences = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let s: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if s.is_empty() {
                continue;
            }
            let mut seen = HashSet::new();
            if let Some(dup) = s.iter().find(|c| !seen.insert(c.as_str())) {
                return Err(Error::format(path, i + 1, format!("channel `{dup}` repeated")));
            }
            sentences.push(s);
        }
        Corpus::from_sentences(sentences, params)
    }
}

fn count_sentences(sentences: &[Vec<String>]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in sentences {
        for c in s {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Drop earlier records of a repeated commenter, keeping the last one in its position.
fn dedup_last_wins(records: &[CommenterRecord]) -> Vec<&CommenterRecord> {
    let mut seen = HashSet::with_capacity(records.len());
    let mut kept: Vec<&CommenterRecord> =
        records.iter().rev().filter(|r| seen.insert(r.commenter_id.as_str())).collect();
    kept.reverse();
    kept
}

/// Build the training corpus.
///
/// Channels seen in fewer than `min_channel_freq` sentences are removed and
/// sentences shorter than `min_sentence_len` are dropped. The two filters
/// feed each other, so they are repeated until nothing changes.
pub fn build_corpus(
    records: &[CommenterRecord],
    min_channel_freq: usize,
    min_sentence_len: usize,
) -> Result<Corpus> {
    if min_channel_freq < 1 || min_sentence_len < 1 {
        return Err(Error::InvalidConfig(
            "min_channel_freq and min_sentence_len must be at least 1".into(),
        ));
    }
    for r in records {
        r.validate()?;
    }
    let mut sentences: Vec<Vec<String>> =
        dedup_last_wins(records).into_iter().map(|r| r.channel_ids.clone()).collect();

    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in &sentences {
        for c in s {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
    }
    loop {
        let mut changed = false;
        for s in sentences.iter_mut() {
            let before = s.len();
            s.retain(|c| counts[c] >= min_channel_freq);
            changed |= s.len() != before;
        }
        let before = sentences.len();
        sentences.retain(|s| s.len() >= min_sentence_len);
        changed |= sentences.len() != before;
        if !changed {
            break;
        }
        counts.clear();
        for s in &sentences {
            for c in s {
                *counts.entry(c.clone()).or_insert(0) += 1;
            }
        }
    }

    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let channel_counts = count_sentences(&sentences);
    Ok(Corpus {
        sentences,
        channel_counts,
        params: CorpusParams { min_channel_freq, min_sentence_len },
    })
}

/// Independently permute the channels of every sentence. Same seed, same output.
pub fn shuffle_sentences(corpus: &Corpus, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for s in out.sentences.iter_mut() {
        s.shuffle(&mut rng);
    }
    out
}

/// Number of distinct commenters subscribed to each channel, before any filtering.
///
/// Repeated commenter records are resolved last-wins, as in [`build_corpus`].
pub fn channel_sub_counts(records: &[CommenterRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in dedup_last_wins(records) {
        let distinct: BTreeSet<&String> = r.channel_ids.iter().collect();
        for c in distinct {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Read a subscriptions file: one JSON record per line.
pub fn read_records(path: &Path) -> Result<Vec<CommenterRecord>> {
    let text = util::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: CommenterRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        r.validate().map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

pub fn records_to_jsonl(records: &[CommenterRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn write_records(path: &Path, records: &[CommenterRecord]) -> Result<()> {
    util::write_atomic(path, &records_to_jsonl(records)?)
}
