//! Channel embeddings learned from commenter subscriptions.
//!
//! Each commenter's subscription list is a "sentence" of channel IDs. A CBOW
//! model with negative sampling turns those sentences into channel vectors,
//! and channels are classified by the labels of their nearest labeled
//! neighbours under cosine similarity. On top of that sits an iterative
//! discovery loop that grows a candidate set by querying subscription data
//! for newly found channels, a final two-embedding ensemble prediction, and
//! the evaluation tooling used to estimate community sizes.
//!
//! Modules:
//!
//! - [`corpus`]: sentence building, frequency/length filters, shuffling
//! - [`embed`]: CBOW negative-sampling training, [`EmbeddingSet`], text format
//! - [`knn`]: binary, multi-class and regression KNN, ensembles, threshold selection
//! - [`eval`]: metrics, cross-validation, agreement, multipliers, head/tail views
//! - [`discovery`]: the candidate discovery loop and final prediction
//! - [`synth`]: planted-community worlds and an emulated subscription source

pub mod corpus;
pub mod discovery;
pub mod embed;
mod error;
pub mod eval;
pub mod knn;
pub mod synth;
pub mod util;

pub use corpus::{CommenterRecord, Corpus};
pub use embed::{EmbeddingConfig, EmbeddingSet};
pub use error::{Error, Result};
pub use knn::{Label, LabelKind, LabeledDataset, Prediction};
