//! Ephemeral compute workers and the deterministic trainers they run.

mod dataset;
mod trainer;
mod worker;

pub use dataset::{parse_unlabeled_csv, Dataset, Row};
pub use trainer::{
    evaluate, logreg_gradient, logreg_loss, predict, sigmoid, train, Model, Parameters, Trainer, TrainerSpec,
    DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE,
};
pub use worker::{Phase, Worker, WorkerError};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum ComputeError {
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label `{0}` is not in the challenge's label set")]
    UnknownLabel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown trainer `{0}`")]
    UnknownTrainer(String),
    #[error("invalid hyperparameter `{0}`")]
    InvalidHyperparameter(String),
}
