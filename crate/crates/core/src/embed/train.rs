//! Continuous-bag-of-words with negative sampling.
//!
//! For every position in a sentence the mean of the surrounding input
//! vectors (`h`) predicts the centre channel against `n` channels drawn from
//! the unigram distribution raised to 3/4:
//!
//! ```text
//! loss = -ln σ(u_center · h) - Σ_neg ln σ(-u_neg · h)
//! ```
//!
//! Input vectors are the published embeddings; output vectors are discarded.
//! Multi-threaded training updates the shared matrices without locks, the
//! way the reference word2vec tool does. Deterministic mode runs the same
//! code on a single thread.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{EmbeddingConfig, EmbeddingSet, MAX_MATRIX_BYTES};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::util::derived_rng;

/// Final learning rate as a fraction of the initial one.
const MIN_LR_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean negative-sampling loss per training example, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub vocab_size: usize,
    pub workers: usize,
}

/// `-ln σ(x)`, stable for large |x|.
fn neg_log_sigmoid<T: Float>(x: T) -> T {
    if x > T::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Loss and gradients for one hidden vector against a positive target
/// (`targets[0]`) and negatives (`targets[1..]`).
///
/// `d_hidden` is overwritten with dL/dh and `d_targets[j]` with dL/du_j.
pub fn negative_sampling_grad<T: Float>(
    hidden: &[T],
    targets: &[Vec<T>],
    d_hidden: &mut [T],
    d_targets: &mut [Vec<T>],
) -> T {
    d_hidden.iter_mut().for_each(|x| *x = T::zero());
    let mut loss = T::zero();
    for (j, (u, du)) in targets.iter().zip(d_targets.iter_mut()).enumerate() {
        let f = u.iter().zip(hidden).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        let (label, signed) = if j == 0 { (T::one(), f) } else { (T::zero(), -f) };
        loss = loss + neg_log_sigmoid(signed);
        let g = sigmoid(f) - label;
        for ((dh, &uk), (duk, &hk)) in d_hidden.iter_mut().zip(u).zip(du.iter_mut().zip(hidden)) {
            *dh = *dh + g * uk;
            *duk = g * hk;
        }
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbowGrad<T> {
    pub loss: T,
    /// Gradient with respect to each context input vector.
    pub d_context: Vec<Vec<T>>,
    /// Gradient with respect to each target output vector.
    pub d_targets: Vec<Vec<T>>,
}

/// Full CBOW negative-sampling loss for one example, with gradients for every parameter involved.
pub fn cbow_loss_and_grad<T: Float>(context: &[Vec<T>], targets: &[Vec<T>]) -> CbowGrad<T> {
    let dims = context.first().map_or(0, Vec::len);
    let m = T::from(context.len()).unwrap();
    let mut hidden = vec![T::zero(); dims];
    for v in context {
        for (h, &x) in hidden.iter_mut().zip(v) {
            *h = *h + x / m;
        }
    }
    let mut d_hidden = vec![T::zero(); dims];
    let mut d_targets = vec![vec![T::zero(); dims]; targets.len()];
    let loss = negative_sampling_grad(&hidden, targets, &mut d_hidden, &mut d_targets);
    let d_context = context.iter().map(|_| d_hidden.iter().map(|&g| g / m).collect()).collect();
    CbowGrad { loss, d_context, d_targets }
}

/// Row-major f32 matrix shared between workers; element updates are relaxed atomics.
struct SharedMatrix {
    dims: usize,
    data: Vec<AtomicU32>,
}

impl SharedMatrix {
    fn from_values(dims: usize, values: impl Iterator<Item = f32>) -> Self {
        SharedMatrix { dims, data: values.map(|x| AtomicU32::new(x.to_bits())).collect() }
    }

    fn row(&self, r: usize) -> &[AtomicU32] {
        &self.data[r * self.dims..(r + 1) * self.dims]
    }

    fn load(&self, r: usize, out: &mut [f32]) {
        for (o, a) in out.iter_mut().zip(self.row(r)) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add_scaled(&self, r: usize, scale: f32, delta: &[f32]) {
        for (a, &d) in self.row(r).iter().zip(delta) {
            let cur = f32::from_bits(a.load(Ordering::Relaxed));
            a.store((cur + scale * d).to_bits(), Ordering::Relaxed);
        }
    }

    fn into_rows(self) -> Vec<Vec<f32>> {
        let dims = self.dims;
        let flat: Vec<f32> = self.data.into_iter().map(|a| f32::from_bits(a.into_inner())).collect();
        flat.chunks(dims).map(<[f32]>::to_vec).collect()
    }
}

struct Model<'a> {
    config: &'a EmbeddingConfig,
    input: SharedMatrix,
    output: SharedMatrix,
    negatives: WeightedIndex<f64>,
    total_positions: u64,
    processed: AtomicU64,
}

struct Scratch {
    hidden: Vec<f32>,
    d_hidden: Vec<f32>,
    rows: Vec<Vec<f32>>,
    d_rows: Vec<Vec<f32>>,
    ids: Vec<usize>,
    context: Vec<usize>,
}

impl Model<'_> {
    fn lr(&self) -> f32 {
        let done = self.processed.load(Ordering::Relaxed) as f64 / self.total_positions as f64;
        let lr0 = self.config.initial_lr;
        (lr0 * (1.0 - done.min(1.0) * (1.0 - MIN_LR_FRACTION))) as f32
    }

    /// Train on a slice of sentences; returns (summed loss, examples).
    fn run(&self, sentences: &[Vec<usize>], rng: &mut impl Rng) -> (f64, u64) {
        let dims = self.config.dims;
        let n_targets = self.config.negative_samples + 1;
        let mut s = Scratch {
            hidden: vec![0.0; dims],
            d_hidden: vec![0.0; dims],
            rows: vec![vec![0.0; dims]; n_targets],
            d_rows: vec![vec![0.0; dims]; n_targets],
            ids: Vec::with_capacity(n_targets),
            context: Vec::with_capacity(2 * self.config.window),
        };
        let mut loss_sum = 0.0f64;
        let mut examples = 0u64;
        for sentence in sentences {
            let lr = self.lr();
            for pos in 0..sentence.len() {
                let b = rng.random_range(1..=self.config.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b + 1).min(sentence.len());
                s.context.clear();
                s.context.extend((lo..hi).filter(|&p| p != pos).map(|p| sentence[p]));
                if s.context.is_empty() {
                    continue;
                }
                loss_sum += self.step(sentence[pos], lr, rng, &mut s) as f64;
                examples += 1;
            }
            self.processed.fetch_add(sentence.len() as u64, Ordering::Relaxed);
        }
        (loss_sum, examples)
    }

    fn step(&self, center: usize, lr: f32, rng: &mut impl Rng, s: &mut Scratch) -> f32 {
        let m = s.context.len() as f32;
        s.hidden.iter_mut().for_each(|x| *x = 0.0);
        for &c in &s.context {
            for (h, a) in s.hidden.iter_mut().zip(self.input.row(c)) {
                *h += f32::from_bits(a.load(Ordering::Relaxed));
            }
        }
        s.hidden.iter_mut().for_each(|x| *x /= m);

        s.ids.clear();
        s.ids.push(center);
        for _ in 0..self.config.negative_samples {
            let neg = self.negatives.sample(rng);
            if neg != center {
                s.ids.push(neg);
            }
        }
        let n = s.ids.len();
        for (row, &id) in s.rows.iter_mut().zip(&s.ids) {
            self.output.load(id, row);
        }
        let loss = negative_sampling_grad(&s.hidden, &s.rows[..n], &mut s.d_hidden, &mut s.d_rows[..n]);
        for (&id, d) in s.ids.iter().zip(&s.d_rows) {
            self.output.add_scaled(id, -lr, d);
        }
        for &c in &s.context {
            self.input.add_scaled(c, -lr / m, &s.d_hidden);
        }
        loss
    }
}

/// Train channel vectors on a corpus. See [`train_embeddings_with_report`].
pub fn train_embeddings(corpus: &Corpus, config: &EmbeddingConfig) -> Result<EmbeddingSet> {
    train_embeddings_with_report(corpus, config).map(|(set, _)| set)
}

/// Train channel vectors on a corpus and report the per-epoch loss.
///
/// Every channel with at least `min_count` occurrences gets a vector. The
/// learning rate decays linearly from `initial_lr` to `initial_lr * 1e-4`
/// over all training positions.
pub fn train_embeddings_with_report(
    corpus: &Corpus,
    config: &EmbeddingConfig,
) -> Result<(EmbeddingSet, TrainReport)> {
    config.validate()?;
    let vocab: Vec<(&String, usize)> = corpus
        .channel_counts
        .iter()
        .filter(|(_, &n)| n >= config.min_count)
        .map(|(c, &n)| (c, n))
        .collect();
    if vocab.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let bytes = (vocab.len() as u64)
        .checked_mul(config.dims as u64)
        .and_then(|x| x.checked_mul(2 * std::mem::size_of::<f32>() as u64));
    match bytes {
        Some(b) if b <= MAX_MATRIX_BYTES => {}
        _ => {
            return Err(Error::InvalidConfig(format!(
                "{} channels x {} dims exceeds the {} GiB weight budget",
                vocab.len(),
                config.dims,
                MAX_MATRIX_BYTES >> 30
            )))
        }
    }

    let index: std::collections::HashMap<&str, usize> =
        vocab.iter().enumerate().map(|(i, (c, _))| (c.as_str(), i)).collect();
    let sentences: Vec<Vec<usize>> = corpus
        .sentences
        .iter()
        .map(|s| s.iter().filter_map(|c| index.get(c.as_str()).copied()).collect::<Vec<_>>())
        .filter(|s| s.len() >= 2)
        .collect();
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokens: u64 = sentences.iter().map(|s| s.len() as u64).sum();

    let dims = config.dims;
    let mut init_rng = derived_rng(config.seed, "init");
    let half = 0.5 / dims as f32;
    let input = SharedMatrix::from_values(
        dims,
        (0..vocab.len() * dims).map(|_| init_rng.random_range(-half..half)),
    );
    let output = SharedMatrix::from_values(dims, std::iter::repeat_n(0.0, vocab.len() * dims));
    let negatives = WeightedIndex::new(vocab.iter().map(|(_, n)| (*n as f64).powf(0.75)))
        .map_err(|e| Error::InvalidConfig(format!("negative sampling table: {e}")))?;

    let workers = if config.deterministic {
        1
    } else {
        config
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .clamp(1, sentences.len())
    };
    let model = Model {
        config,
        input,
        output,
        negatives,
        total_positions: tokens * config.epochs as u64,
        processed: AtomicU64::new(0),
    };

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let chunk = sentences.len().div_ceil(workers);
        let results: Vec<(f64, u64)> = if workers == 1 {
            let mut rng = derived_rng(config.seed, &format!("epoch{epoch}/worker0"));
            vec![model.run(&sentences, &mut rng)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = sentences
                    .chunks(chunk)
                    .enumerate()
                    .map(|(w, part)| {
                        let model = &model;
                        scope.spawn(move || {
                            let mut rng = derived_rng(config.seed, &format!("epoch{epoch}/worker{w}"));
                            model.run(part, &mut rng)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
            })
        };
        let (loss, n) = results.iter().fold((0.0, 0u64), |acc, r| (acc.0 + r.0, acc.1 + r.1));
        epoch_losses.push(if n > 0 { loss / n as f64 } else { 0.0 });
    }

    let rows = model.input.into_rows();
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("training diverged to non-finite weights".into()));
    }
    let set = EmbeddingSet::new(dims, vocab.iter().map(|(c, _)| (*c).clone()).zip(rows))?;
    Ok((set, TrainReport { epoch_losses, vocab_size: vocab.len(), workers }))
}
