use serde::{Deserialize, Serialize};

use crate::types::{AccountId, BlobId, ChallengeId, Credits, Label, PubKey, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    RawData,
    Algorithm,
    Model,
    /// Held-out annotated data attached to a challenge.
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Learn,
    Predict,
}

/// Marks a learn task run only to measure contributivity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowTag {
    pub round: u64,
    /// `None` for the full-set run of the round.
    pub left_out: Option<BlobId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub requester: AccountId,
    /// Identity the prediction output is sealed to.
    pub requester_key: PubKey,
    pub payment: Credits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub account_id: AccountId,
    pub amount: Credits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    ChallengeDefined {
        challenge_id: ChallengeId,
        description: String,
        label_set: Vec<Label>,
    },
    AccountFunded {
        account_id: AccountId,
        amount: Credits,
    },
    DataRegistered {
        record_id: BlobId,
        owner_id: AccountId,
        kind: RecordKind,
        challenge_id: ChallengeId,
    },
    TaskCreated {
        task_id: TaskId,
        kind: TaskKind,
        data_ids: Vec<BlobId>,
        algorithm_or_model_id: BlobId,
        challenge_id: ChallengeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shadow: Option<ShadowTag>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request: Option<PredictionRequest>,
    },
    WorkerAssigned {
        task_id: TaskId,
        worker_pubkey: PubKey,
    },
    /// The assigned worker died or failed; the task returns to the queue.
    TaskRequeued {
        task_id: TaskId,
        worker_pubkey: PubKey,
    },
    PerformanceRecorded {
        task_id: TaskId,
        /// Absent only for degenerate shadow runs over an empty training set.
        model_id: Option<BlobId>,
        performance: f64,
    },
    PredictionRecorded {
        task_id: TaskId,
        model_id: BlobId,
        sealed_output_id: BlobId,
    },
    PaymentRecorded {
        payer: AccountId,
        splits: Vec<SplitEntry>,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::ChallengeDefined { .. } => "challenge_defined",
            Event::AccountFunded { .. } => "account_funded",
            Event::DataRegistered { .. } => "data_registered",
            Event::TaskCreated { .. } => "task_created",
            Event::WorkerAssigned { .. } => "worker_assigned",
            Event::TaskRequeued { .. } => "task_requeued",
            Event::PerformanceRecorded { .. } => "performance_recorded",
            Event::PredictionRecorded { .. } => "prediction_recorded",
            Event::PaymentRecorded { .. } => "payment_recorded",
        }
    }
}
