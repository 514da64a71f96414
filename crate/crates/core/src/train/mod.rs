//! A desk-scale masked language model trained with the NC3 fairness regularizer.
//!
//! The model mean-pools the embeddings of a sentence's visible tokens, passes
//! the result through a two-layer tanh MLP, and scores every vocabulary entry
//! with the (tied) embedding table. Its objective is
//! `L_total = L_mlm + alpha * L_nc3`, where `L_nc3` is the spread of the
//! cosines between each sensitive token's classifier row and its centered
//! class mean. Gradients are derived by hand; there is no autodiff engine.

mod corpus;
mod loss;
mod model;
mod optim;
mod run;
mod running;

use thiserror::Error;

use crate::array_io::ArrayError;
use crate::class_stats::StatsError;
use crate::nc_metrics::MetricError;

pub use corpus::{
    generate_corpus, Batch, Corpus, SensitiveGroup, Skew, SyntheticCorpusSpec, VocabLayout, MASK,
    PAD,
};
pub use loss::{loss_mlm, loss_nc3, Nc3Value};
pub use model::{evaluate_loss, forward, ForwardPass, LossBreakdown, ModelParams, Objective};
pub use optim::Adam;
pub use run::{
    masked_accuracy, run, stereotype_preference, train, EpochLog, RunArtifacts, TrainConfig,
    ALPHA_SWEEP,
};
pub use running::RunningClassMeans;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid corpus spec: {0}")]
    CorpusSpec(String),
    #[error("vocabulary layout overflows: {0}")]
    VocabOverflow(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("token {token} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },
    #[error("batch holds {rows} sentences but {targets} targets")]
    TargetMismatch { rows: usize, targets: usize },
    #[error("target {target} is outside the vocabulary of {vocab_size}")]
    TargetOutOfRange { target: usize, vocab_size: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("regularizer: class {class} has {reason}")]
    Nc3Degenerate { class: usize, reason: &'static str },
    #[error(
        "training diverged at epoch {epoch}, step {step}: L_mlm = {loss_mlm}, L_nc3 = {loss_nc3}"
    )]
    Diverged {
        epoch: usize,
        step: usize,
        loss_mlm: f64,
        loss_nc3: f64,
    },
    #[error("evaluation")]
    Metric(#[from] MetricError),
    #[error("statistics pass")]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
