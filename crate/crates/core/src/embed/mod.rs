//! Channel vectors: training, cosine similarity and exhaustive nearest-neighbour search.

mod text;
mod train;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use text::{format_sig6, read_text, write_text};
pub use train::{
    cbow_loss_and_grad, negative_sampling_grad, train_embeddings, train_embeddings_with_report,
    CbowGrad, TrainReport,
};

/// Vectors with a norm below this are treated as directionless.
pub const MIN_NORM: f64 = 1e-12;

/// Upper bound on the two weight matrices; larger requests fail before allocating.
pub const MAX_MATRIX_BYTES: u64 = 16 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dims: usize,
    /// Maximum context half-width; the effective width is drawn per position.
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_count: usize,
    pub seed: u64,
    /// Single-threaded training with bitwise-reproducible output.
    pub deterministic: bool,
    /// Worker threads for non-deterministic training; `None` uses all cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dims: 200,
            window: 8,
            negative_samples: 5,
            epochs: 15,
            initial_lr: 0.025,
            min_count: 5,
            seed: 1,
            deterministic: false,
            workers: None,
        }
    }
}

impl EmbeddingConfig {
    /// The low-dimensional companion model used in the final ensemble.
    pub fn small() -> Self {
        EmbeddingConfig { dims: 16, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dims == 0 {
            return bad("dims must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negative_samples == 0 {
            return bad("negative_samples must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}

/// Trained channel vectors, indexed by channel ID in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dims: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    // Unit vectors in f64; rows for zero-norm vectors are left at zero and flagged.
    unit: Vec<f64>,
    has_unit: Vec<bool>,
}

impl EmbeddingSet {
    pub fn new<I>(dims: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f32>)>,
    {
        if dims == 0 {
            return Err(Error::InvalidConfig("dims must be at least 1".into()));
        }
        let mut entries: Vec<(String, Vec<f32>)> = entries.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("channel `{}` appears twice", w[0].0)));
        }
        let n = entries.len();
        let mut ids = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n * dims);
        let mut unit = vec![0.0f64; n * dims];
        let mut has_unit = vec![false; n];
        for (row, (id, v)) in entries.into_iter().enumerate() {
            if v.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!("channel `{id}` has a non-finite vector")));
            }
            let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            if norm >= MIN_NORM {
                for (u, &x) in unit[row * dims..(row + 1) * dims].iter_mut().zip(&v) {
                    *u = x as f64 / norm;
                }
                has_unit[row] = true;
            }
            vectors.extend_from_slice(&v);
            ids.push(id);
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(EmbeddingSet { dims, ids, index, vectors, unit, has_unit })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Channel IDs in ascending order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub(crate) fn row(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.row(id).map(|r| &self.vectors[r * self.dims..(r + 1) * self.dims])
    }

    /// The normalized vector, absent for zero-norm channels.
    pub fn unit(&self, id: &str) -> Option<&[f64]> {
        self.row(id).and_then(|r| self.unit_row(r))
    }

    pub(crate) fn unit_row(&self, row: usize) -> Option<&[f64]> {
        self.has_unit[row].then(|| &self.unit[row * self.dims..(row + 1) * self.dims])
    }

    /// True when the channel has a usable (non-zero) vector.
    pub fn is_supported(&self, id: &str) -> bool {
        self.row(id).is_some_and(|r| self.has_unit[r])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(r, id)| (id.as_str(), &self.vectors[r * self.dims..(r + 1) * self.dims]))
    }

    /// Same channels, every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        EmbeddingSet::new(
            self.dims,
            self.iter().map(|(id, v)| (id.to_string(), v.iter().map(|x| x * factor).collect())),
        )
    }

    /// Cosine similarity between two stored channels.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let ua = self.query_unit(a)?;
        let ub = self.query_unit(b)?;
        Ok(dot(ua, ub).clamp(-1.0, 1.0))
    }

    pub(crate) fn query_unit(&self, id: &str) -> Result<&[f64]> {
        let row = self.row(id).ok_or_else(|| Error::UnknownChannel(id.to_string()))?;
        self.unit_row(row).ok_or_else(|| Error::UnsupportedChannel(id.to_string()))
    }

    /// Similarity of `query` to every supported row in `rows`, skipping the query itself.
    pub(crate) fn scan(&self, query: &str, rows: &[usize]) -> Result<Vec<(usize, f64)>> {
        let q_row = self.row(query).ok_or_else(|| Error::UnknownChannel(query.to_string()))?;
        let q = self.unit_row(q_row).ok_or_else(|| Error::UnsupportedChannel(query.to_string()))?;
        Ok(rows
            .iter()
            .filter(|&&r| r != q_row)
            .filter_map(|&r| self.unit_row(r).map(|u| (r, dot(q, u).clamp(-1.0, 1.0))))
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Keep the `k` best rows by descending similarity; ties go to the smaller row,
/// which is the lexicographically smaller channel ID.
pub(crate) fn top_k(mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    let cmp = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if scored.len() > k {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored
}

/// `dot(a, b) / (|a| |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// The `k` most similar channels to `query`, optionally restricted to `candidates`.
///
/// The query never appears in its own result. Candidates that are unknown or
/// have zero-norm vectors are skipped. Fewer than `k` available channels
/// yields a shorter list.
pub fn nearest(
    set: &EmbeddingSet,
    query: &str,
    k: usize,
    candidates: Option<&BTreeSet<String>>,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let rows: Vec<usize> = match candidates {
        Some(c) => c.iter().filter_map(|id| set.row(id)).collect(),
        None => (0..set.len()).collect(),
    };
    let scored = set.scan(query, &rows)?;
    Ok(top_k(scored, k).into_iter().map(|(r, s)| (set.ids[r].clone(), s)).collect())
}
