//! Cosine-KNN classification over channel embeddings.
//!
//! A channel's binary score is the fraction of its `k` nearest labeled
//! channels that are positive. The same neighbour search also backs
//! majority-vote multi-class prediction and similarity-weighted regression.
//! A labeled channel never counts as its own neighbour, which is what makes
//! hold-one-out evaluation meaningful.

mod labels;
mod threshold;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::{top_k, EmbeddingSet};
use crate::error::{Error, Result};

pub use labels::{
    dataset_for_tag, dataset_to_rows, label_rows_to_csv, read_label_rows, tags, Label, LabelKind,
    LabelRow, LabeledDataset,
};
pub use threshold::{select_threshold, threshold_metrics};

/// Neighbour count used for discovery and binary classification.
pub const DEFAULT_K: usize = 10;
/// Neighbour count used for the small per-tag datasets.
pub const TAG_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub channel_id: String,
    pub similarity: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub channel_id: String,
    /// Positive fraction for binary labels, weighted mean for numeric ones,
    /// vote share of the winner for categorical ones.
    pub score: f64,
    pub predicted_label: Label,
    /// Sorted by descending similarity.
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Positive,
    Negative,
}

/// Positive iff `score >= threshold`.
pub fn classify(score: f64, threshold: f64) -> Class {
    debug_assert!((0.0..=1.0).contains(&threshold), "threshold {threshold} outside [0, 1]");
    if score >= threshold {
        Class::Positive
    } else {
        Class::Negative
    }
}

/// Labeled channels that have usable embeddings, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct KnnIndex<'a> {
    set: &'a EmbeddingSet,
    kind: LabelKind,
    rows: Vec<usize>,
    labels: BTreeMap<usize, &'a Label>,
}

impl<'a> KnnIndex<'a> {
    pub fn new(set: &'a EmbeddingSet, labeled: &'a LabeledDataset) -> Result<Self> {
        let labels: BTreeMap<usize, &Label> = labeled
            .iter()
            .filter_map(|(id, l)| set.row(id).filter(|&r| set.unit_row(r).is_some()).map(|r| (r, l)))
            .collect();
        if labels.is_empty() {
            return Err(Error::NoLabeledEmbeddings);
        }
        let rows = labels.keys().copied().collect();
        Ok(KnnIndex { set, kind: labeled.kind(), rows, labels })
    }

    /// Number of labeled channels usable as neighbours.
    pub fn pool_size(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbors(&self, query: &str, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let scored = match self.set.scan(query, &self.rows) {
            Err(Error::UnknownChannel(c)) => return Err(Error::UnsupportedChannel(c)),
            other => other?,
        };
        Ok(top_k(scored, k)
            .into_iter()
            .map(|(r, s)| Neighbor {
                channel_id: self.set.ids()[r].clone(),
                similarity: s,
                label: self.labels[&r].clone(),
            })
            .collect())
    }

    fn expect_kind(&self, kind: LabelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::LabelKind { expected: kind.as_str(), got: self.kind.as_str() });
        }
        Ok(())
    }

    fn no_neighbors(query: &str) -> Error {
        Error::Degenerate(format!("`{query}` has no labeled neighbours besides itself"))
    }

    /// Fraction of the `k` nearest labeled channels that are positive.
    pub fn score(&self, query: &str, k: usize) -> Result<Prediction> {
        self.expect_kind(LabelKind::Binary)?;
        let neighbors = self.neighbors(query, k)?;
        if neighbors.is_empty() {
            return Err(Self::no_neighbors(query));
        }
        let positives = neighbors.iter().filter(|n| n.label == Label::Binary(true)).count();
        let score = positives as f64 / neighbors.len() as f64;
        Ok(Prediction {
            channel_id: query.to_string(),
            score,
            predicted_label: Label::Binary(score >= 0.5),
            neighbors,
        })
    }

    /// Most common label among the `k` nearest; ties go to the larger summed
    /// similarity, then to the lexicographically smaller label.
    pub fn multiclass(&self, query: &str, k: usize) -> Result<Prediction> {
        self.expect_kind(LabelKind::Categorical)?;
        let neighbors = self.neighbors(query, k)?;
        let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
        for n in &neighbors {
            if let Label::Categorical(c) = &n.label {
                let e = tally.entry(c.as_str()).or_default();
                e.0 += 1;
                e.1 += n.similarity;
            }
        }
        // BTreeMap iterates labels in ascending order, so `max_by` with a strict
        // comparison that prefers the earlier label on full ties needs the reverse.
        let (label, (votes, _)) = tally
            .iter()
            .max_by(|a, b| {
                (a.1 .0)
                    .cmp(&b.1 .0)
                    .then(a.1 .1.total_cmp(&b.1 .1))
                    .then(b.0.cmp(a.0))
            })
            .ok_or_else(|| Self::no_neighbors(query))?;
        Ok(Prediction {
            channel_id: query.to_string(),
            score: *votes as f64 / neighbors.len() as f64,
            predicted_label: Label::Categorical(label.to_string()),
            neighbors,
        })
    }

    /// Similarity-weighted mean of numeric labels (negative similarities count
    /// as zero weight), rounded half away from zero into {-1, 0, 1}.
    /// Falls back to the plain mean when every weight is zero.
    pub fn regression(&self, query: &str, k: usize) -> Result<Prediction> {
        self.expect_kind(LabelKind::Numeric)?;
        let neighbors = self.neighbors(query, k)?;
        if neighbors.is_empty() {
            return Err(Self::no_neighbors(query));
        }
        let values: Vec<(f64, f64)> = neighbors
            .iter()
            .map(|n| (n.similarity.max(0.0), n.label.as_f64().expect("numeric label")))
            .collect();
        let total_w: f64 = values.iter().map(|(w, _)| w).sum();
        let score = if total_w > 0.0 {
            values.iter().map(|(w, y)| w * y).sum::<f64>() / total_w
        } else {
            values.iter().map(|(_, y)| y).sum::<f64>() / values.len() as f64
        };
        Ok(Prediction {
            channel_id: query.to_string(),
            score,
            predicted_label: Label::Numeric(score.round().clamp(-1.0, 1.0)),
            neighbors,
        })
    }
}

pub fn knn_score(set: &EmbeddingSet, labeled: &LabeledDataset, query: &str, k: usize) -> Result<Prediction> {
    KnnIndex::new(set, labeled)?.score(query, k)
}

pub fn knn_multiclass(
    set: &EmbeddingSet,
    labeled: &LabeledDataset,
    query: &str,
    k: usize,
) -> Result<Prediction> {
    KnnIndex::new(set, labeled)?.multiclass(query, k)
}

pub fn knn_regression(
    set: &EmbeddingSet,
    labeled: &LabeledDataset,
    query: &str,
    k: usize,
) -> Result<Prediction> {
    KnnIndex::new(set, labeled)?.regression(query, k)
}

/// Mean of several binary scores for the same channel (one per embedding set).
pub fn ensemble_score(predictions: &[Prediction]) -> Result<f64> {
    let first = predictions.first().ok_or(Error::EmptyInput("ensemble predictions"))?;
    if let Some(p) = predictions.iter().find(|p| p.channel_id != first.channel_id) {
        return Err(Error::InvalidConfig(format!(
            "ensemble mixes channels `{}` and `{}`",
            first.channel_id, p.channel_id
        )));
    }
    if predictions.iter().any(|p| !matches!(p.predicted_label, Label::Binary(_))) {
        return Err(Error::LabelKind { expected: "binary", got: "non-binary" });
    }
    Ok(predictions.iter().map(|p| p.score).sum::<f64>() / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Channels on a circle: q at angle 0 and the rest at increasing angles,
    /// so neighbour order equals insertion order.
    fn fan(labels: &[Label]) -> (EmbeddingSet, LabeledDataset) {
        let mut entries = vec![("q".to_string(), vec![1.0f32, 0.0])];
        let mut map = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            let a = 0.05 * (i + 1) as f32;
            let id = format!("n{i:02}");
            entries.push((id.clone(), vec![a.cos(), a.sin()]));
            map.insert(id, l.clone());
        }
        let kind = labels[0].kind();
        (EmbeddingSet::new(2, entries).unwrap(), LabeledDataset::new(kind, map).unwrap())
    }

    fn bin(v: &[u8]) -> Vec<Label> {
        v.iter().map(|&x| Label::Binary(x == 1)).collect()
    }

    #[test]
    fn binary_score_is_mean_of_labels() {
        let (set, ds) = fan(&bin(&[1, 1, 0, 1, 0, 0, 0]));
        let p = knn_score(&set, &ds, "q", 5).unwrap();
        assert!((p.score - 0.6).abs() < 1e-15);
        assert_eq!(p.neighbors.len(), 5);
        assert!(p.neighbors.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        let (set, ds) = fan(&bin(&[1, 1, 1, 1, 1]));
        assert_eq!(knn_score(&set, &ds, "q", 5).unwrap().score, 1.0);
    }

    #[test]
    fn classify_is_inclusive() {
        assert_eq!(classify(0.8, 0.8), Class::Positive);
        assert_eq!(classify(0.5, 0.5), Class::Positive);
        assert_eq!(classify(0.79, 0.8), Class::Negative);
    }

    #[test]
    fn query_never_its_own_neighbor() {
        let (set, mut ds) = fan(&bin(&[0, 0, 0]));
        ds.insert("q".into(), Label::Binary(true)).unwrap();
        let p = knn_score(&set, &ds, "q", 10).unwrap();
        assert_eq!(p.score, 0.0);
        assert!(p.neighbors.iter().all(|n| n.channel_id != "q"));
    }

    #[test]
    fn errors() {
        let (set, ds) = fan(&bin(&[1, 0]));
        assert!(matches!(knn_score(&set, &ds, "zzz", 3), Err(Error::UnsupportedChannel(_))));
        let other = LabeledDataset::binary([("nowhere", true)]).unwrap();
        assert!(matches!(knn_score(&set, &other, "q", 3), Err(Error::NoLabeledEmbeddings)));
        assert!(matches!(knn_regression(&set, &ds, "q", 3), Err(Error::LabelKind { .. })));
    }

    #[test]
    fn multiclass_mode_and_tie_breaks() {
        let cat = |s: &str| Label::Categorical(s.to_string());
        let mut labels: Vec<Label> = Vec::new();
        labels.extend(std::iter::repeat_n(cat("left"), 6));
        labels.extend(std::iter::repeat_n(cat("right"), 4));
        let (set, ds) = fan(&labels);
        assert_eq!(knn_multiclass(&set, &ds, "q", 10).unwrap().predicted_label, cat("left"));

        // 5 vs 5 where "right" holds the closer half: higher summed similarity wins.
        let mut labels: Vec<Label> = std::iter::repeat_n(cat("right"), 5).collect();
        labels.extend(std::iter::repeat_n(cat("left"), 5));
        let (set, ds) = fan(&labels);
        assert_eq!(knn_multiclass(&set, &ds, "q", 10).unwrap().predicted_label, cat("right"));

        // Exact tie on votes and similarity: lexicographically smaller label.
        let set = EmbeddingSet::new(
            2,
            [
                ("q".to_string(), vec![1.0, 0.0]),
                ("a".to_string(), vec![0.0, 1.0]),
                ("b".to_string(), vec![0.0, -1.0]),
            ],
        )
        .unwrap();
        let ds = LabeledDataset::new(
            LabelKind::Categorical,
            BTreeMap::from([("a".to_string(), cat("zeta")), ("b".to_string(), cat("alpha"))]),
        )
        .unwrap();
        assert_eq!(knn_multiclass(&set, &ds, "q", 2).unwrap().predicted_label, cat("alpha"));
    }

    #[test]
    fn regression_examples() {
        let num = |x: f64| Label::Numeric(x);
        let (set, ds) = fan(&vec![num(1.0); 10]);
        let p = knn_regression(&set, &ds, "q", 10).unwrap();
        assert!((p.score - 1.0).abs() < 1e-12);
        assert_eq!(p.predicted_label, num(1.0));

        // Two neighbours at the same similarity with opposite labels.
        let set = EmbeddingSet::new(
            2,
            [
                ("q".to_string(), vec![1.0, 0.0]),
                ("a".to_string(), vec![1.0, 1.0]),
                ("b".to_string(), vec![1.0, -1.0]),
            ],
        )
        .unwrap();
        let ds = LabeledDataset::new(
            LabelKind::Numeric,
            BTreeMap::from([("a".to_string(), num(-1.0)), ("b".to_string(), num(1.0))]),
        )
        .unwrap();
        let p = knn_regression(&set, &ds, "q", 2).unwrap();
        assert!(p.score.abs() < 1e-12);
        assert_eq!(p.predicted_label, num(0.0));
    }

    #[test]
    fn regression_weighted_by_similarity() {
        // Unit vectors whose cosines with q are exactly 0.9, 0.8 and 0.4.
        let at = |c: f32| vec![c, (1.0 - c * c).sqrt()];
        let set = EmbeddingSet::new(
            2,
            [
                ("q".to_string(), vec![1.0, 0.0]),
                ("a".to_string(), at(0.9)),
                ("b".to_string(), at(0.8)),
                ("c".to_string(), at(0.4)),
            ],
        )
        .unwrap();
        let ds = LabeledDataset::new(
            LabelKind::Numeric,
            BTreeMap::from([
                ("a".to_string(), Label::Numeric(1.0)),
                ("b".to_string(), Label::Numeric(1.0)),
                ("c".to_string(), Label::Numeric(0.0)),
            ]),
        )
        .unwrap();
        let p = knn_regression(&set, &ds, "q", 3).unwrap();
        assert!((p.score - 1.7 / 2.1).abs() < 1e-6, "{}", p.score);
        assert_eq!(p.predicted_label, Label::Numeric(1.0));
    }

    #[test]
    fn regression_falls_back_to_plain_mean() {
        let set = EmbeddingSet::new(
            2,
            [
                ("q".to_string(), vec![1.0, 0.0]),
                ("a".to_string(), vec![-1.0, 0.1]),
                ("b".to_string(), vec![-1.0, -0.2]),
            ],
        )
        .unwrap();
        let ds = LabeledDataset::new(
            LabelKind::Numeric,
            BTreeMap::from([("a".to_string(), Label::Numeric(1.0)), ("b".to_string(), Label::Numeric(0.0))]),
        )
        .unwrap();
        let p = knn_regression(&set, &ds, "q", 2).unwrap();
        assert!((p.score - 0.5).abs() < 1e-12);
        assert_eq!(p.predicted_label, Label::Numeric(1.0));
    }

    fn pred(id: &str, score: f64) -> Prediction {
        Prediction { channel_id: id.into(), score, predicted_label: Label::Binary(score >= 0.5), neighbors: vec![] }
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_score(&[pred("a", 0.8)]).unwrap(), 0.8);
        assert!((ensemble_score(&[pred("a", 1.0), pred("a", 0.6)]).unwrap() - 0.8).abs() < 1e-15);
        assert!(ensemble_score(&[]).is_err());
        assert!(ensemble_score(&[pred("a", 1.0), pred("b", 0.6)]).is_err());
    }

    fn random_world(seed: u64, n: usize) -> (EmbeddingSet, LabeledDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = EmbeddingSet::new(
            6,
            (0..n).map(|i| (format!("c{i:03}"), (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect())),
        )
        .unwrap();
        let ds = LabeledDataset::binary((0..n).filter(|i| i % 3 != 0).map(|i| (format!("c{i:03}"), rng.random_bool(0.4))))
            .unwrap();
        (set, ds)
    }

    proptest! {
        #[test]
        fn ensemble_pair_is_midpoint(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let m = ensemble_score(&[pred("x", a), pred("x", b)]).unwrap();
            prop_assert!((m - (a + b) / 2.0).abs() <= 1e-15);
            prop_assert_eq!(ensemble_score(&[pred("x", a), pred("x", a)]).unwrap(), a);
        }

        #[test]
        fn binary_scores_bounded_and_self_excluded(seed in 0u64..500) {
            let (set, ds) = random_world(seed, 40);
            let index = KnnIndex::new(&set, &ds).unwrap();
            for id in set.ids() {
                let p = index.score(id, 5).unwrap();
                prop_assert!((0.0..=1.0).contains(&p.score));
                prop_assert!(p.neighbors.iter().all(|n| &n.channel_id != id));
                prop_assert!(p.neighbors.len() <= 5);
            }
        }

        #[test]
        fn label_order_does_not_matter(seed in 0u64..200) {
            let (set, ds) = random_world(seed, 30);
            let mut rows: Vec<(String, Label)> = ds.iter().map(|(a, b)| (a.clone(), b.clone())).collect();
            rows.reverse();
            let shuffled = LabeledDataset::new(LabelKind::Binary, rows.into_iter().collect()).unwrap();
            for id in set.ids() {
                prop_assert_eq!(knn_score(&set, &ds, id, 4).unwrap(), knn_score(&set, &shuffled, id, 4).unwrap());
            }
        }
    }
}
