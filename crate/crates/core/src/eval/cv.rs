use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::{KnnIndex, Label, LabelKind, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Folds {
    HoldOneOut,
    K(usize),
}

impl std::str::FromStr for Folds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hold-one-out" | "loo" => Ok(Folds::HoldOneOut),
            n => n
                .parse()
                .map(Folds::K)
                .map_err(|_| format!("expected a fold count or `hold-one-out`, got {n:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub channel_id: String,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub scores: Vec<CvScore>,
    /// Labeled channels without a usable embedding; not scored.
    pub unsupported: Vec<String>,
}

impl CvOutcome {
    pub fn pairs(&self) -> Vec<(f64, bool)> {
        self.scores.iter().map(|s| (s.score, s.label)).collect()
    }
}

/// Split channels into `folds` groups after a seeded shuffle. Channels are
/// sorted first so the split depends only on the set, not on input order.
pub fn assign_folds(channels: &[String], folds: usize, seed: u64) -> Vec<Vec<String>> {
    let mut ids = channels.to_vec();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds.max(1)];
    for (i, id) in ids.into_iter().enumerate() {
        out[i % folds.max(1)].push(id);
    }
    out
}

/// Score every labeled channel with its fold's labels withheld from the neighbour pool.
pub fn cross_validate(
    set: &EmbeddingSet,
    labeled: &LabeledDataset,
    k: usize,
    folds: Folds,
    seed: u64,
) -> Result<CvOutcome> {
    if labeled.kind() != LabelKind::Binary {
        return Err(Error::LabelKind { expected: "binary", got: labeled.kind().as_str() });
    }
    if let Folds::K(n) = folds {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 folds, got {n}")));
        }
    }
    let (supported, unsupported): (Vec<String>, Vec<String>) =
        labeled.iter().map(|(id, _)| id.clone()).partition(|id| set.is_supported(id));
    if supported.is_empty() {
        return Err(Error::NoLabeledEmbeddings);
    }
    let truth = |id: &str| matches!(labeled.get(id), Some(Label::Binary(true)));

    let mut scores = Vec::with_capacity(supported.len());
    match folds {
        Folds::K(n) if n < supported.len() => {
            for fold in assign_folds(&supported, n, seed) {
                let held: BTreeSet<String> = fold.iter().cloned().collect();
                let train = labeled.without(&held);
                let index = KnnIndex::new(set, &train)?;
                for id in fold {
                    let p = index.score(&id, k)?;
                    scores.push(CvScore { label: truth(&id), channel_id: id, score: p.score });
                }
            }
            scores.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
        }
        // One channel per fold: the index already excludes the query from its own pool.
        _ => {
            let index = KnnIndex::new(set, labeled)?;
            for id in supported {
                let p = index.score(&id, k)?;
                scores.push(CvScore { label: truth(&id), channel_id: id, score: p.score });
            }
        }
    }
    Ok(CvOutcome { scores, unsupported })
}
