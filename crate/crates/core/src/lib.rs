//! Feature selection for wide, few-sample data.
//!
//! A network learns to pick `K` of `d` input features end to end. During
//! training a relaxed one-hot gate matrix (concrete / Gumbel-softmax
//! variables) mixes the inputs; at inference the gates are replaced by `K`
//! distinct feature indices. The two layers whose size would scale with `d`
//! (the selection gates and the final reconstruction layer) are never stored:
//! their weights are emitted per feature by two tiny predictor networks that
//! read a fixed-size histogram embedding of each feature column.
//!
//! The crate is `no_std` (with `alloc`) and contains only computation.
//! File formats, reports, and the command-line tool live in the `fsnet`
//! companion crate.
//!
//! Module map:
//!
//! - [`numerics`]: dense matrices, the seeded generator, and a small
//!   reverse-mode tape.
//! - [`embedding`]: per-feature histogram embeddings.
//! - [`selection`]: concrete gates, temperature schedule, unique argmax.
//! - [`network`]: encoder, classifier, decoder, and reconstruction layers.
//! - [`trainer`]: objective, RMSprop, and the training loop.
//! - [`evaluator`]: accuracy, reconstruction error, redundancy, model size.
//! - [`data`]: datasets, standardization, splits, synthetic generator.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod embedding;
mod error;
pub mod evaluator;
pub mod network;
pub mod numerics;
pub mod selection;
pub mod trainer;

pub use data::{Dataset, SplitSpec, Standardizer, SyntheticData};
pub use embedding::{compute_embeddings, FeatureEmbeddings, FeatureTable};
pub use error::{Error, Result};
pub use evaluator::EvalReport;
pub use network::{Architecture, DenseStack, FsNetModel, ReconPredictor};
pub use numerics::{Matrix, RngState, Tape, Var};
pub use selection::{ConcreteState, GateMatrix, SelectionPredictor};
pub use trainer::{EpochRecord, Mode, TrainConfig, TrainOutcome, TrainReport};
