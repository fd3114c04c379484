//! The request/response surface each platform role exposes. Workers and
//! clients only ever talk to the platform through these traits, so the same
//! code runs against in-process services, the simulator's traced fabric, or
//! HTTP clients.

use serde::{Deserialize, Serialize};

use crate::cryptobox::{Challenge, CustodyError, KeyShare, ReleaseRequest, SealedBlob};
use crate::ledger::{Block, RecordKind, ShadowTag, TaskKind};
use crate::orchestrator::{BenchmarkRow, ChallengeSpec, OrchestratorError};
use crate::storage::{BlobKind, StorageError, StoredBlob};
use crate::types::{AccountId, BlobId, ChallengeId, Credits, Label, NodeId, PubKey, TaskId};
use crate::valuation::ContributivityVector;

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "service", content = "error")]
pub enum ServiceError {
    #[error("storage: {0}")]
    Storage(StorageError),
    #[error("custodian: {0}")]
    Custody(CustodyError),
    #[error("orchestrator: {0}")]
    Orchestrator(OrchestratorError),
    #[error("unreachable: {0}")]
    Unavailable(String),
}

impl From<StorageError> for ServiceError {
    fn from(e: StorageError) -> Self {
        ServiceError::Storage(e)
    }
}

impl From<CustodyError> for ServiceError {
    fn from(e: CustodyError) -> Self {
        ServiceError::Custody(e)
    }
}

impl From<OrchestratorError> for ServiceError {
    fn from(e: OrchestratorError) -> Self {
        ServiceError::Orchestrator(e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub owner: AccountId,
    pub record_id: BlobId,
    pub kind: RecordKind,
    pub challenge_id: ChallengeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionOrder {
    pub requester: AccountId,
    pub requester_key: PubKey,
    pub input_record_id: BlobId,
    pub challenge_id: ChallengeId,
    pub payment: Credits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Queued,
    Assigned,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: TaskId,
    pub kind: TaskKind,
    pub data_ids: Vec<BlobId>,
    pub algorithm_or_model_id: BlobId,
    pub challenge_id: ChallengeId,
    pub status: TaskStatus,
    pub shadow: bool,
    pub requester: Option<AccountId>,
}

/// Everything a worker needs to know about the task it was handed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub task_id: TaskId,
    pub kind: TaskKind,
    pub challenge_id: ChallengeId,
    pub label_set: Vec<Label>,
    pub data_ids: Vec<BlobId>,
    pub algorithm_or_model_id: BlobId,
    pub validation_ids: Vec<BlobId>,
    pub shadow: Option<ShadowTag>,
    pub requester_key: Option<PubKey>,
}

impl TaskAssignment {
    /// Records the worker must decrypt, in fetch order.
    pub fn records(&self) -> Vec<BlobId> {
        let mut out = vec![self.algorithm_or_model_id];
        out.extend(self.data_ids.iter().copied());
        if self.kind == TaskKind::Learn {
            out.extend(self.validation_ids.iter().copied());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskResult {
    Learn { performance: f64, model_id: Option<BlobId> },
    Predict { sealed_output_id: BlobId },
}

pub trait StorageApi {
    fn put_blob(&mut self, sealed: &SealedBlob, kind: BlobKind) -> Result<BlobId, ServiceError>;
    fn get_blob(&mut self, id: &BlobId) -> Result<StoredBlob, ServiceError>;
    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError>;
}

pub trait CustodyApi {
    /// Node ids in the order shares are split across them.
    fn custodians(&self) -> Vec<NodeId>;
    fn deposit_share(&mut self, node: &NodeId, record_id: &BlobId, share: &KeyShare) -> Result<(), ServiceError>;
    fn issue_challenge(&mut self, node: &NodeId, task_id: &TaskId, record_id: &BlobId) -> Result<Challenge, ServiceError>;
    fn release_share(&mut self, node: &NodeId, request: &ReleaseRequest) -> Result<KeyShare, ServiceError>;
}

pub trait OrchestratorApi {
    fn orchestrator_pubkey(&mut self) -> Result<PubKey, ServiceError>;
    fn challenge(&mut self, id: &ChallengeId) -> Result<ChallengeSpec, ServiceError>;
    fn register_data(&mut self, request: &RegisterRequest) -> Result<Vec<TaskView>, ServiceError>;
    fn request_prediction(&mut self, order: &PredictionOrder) -> Result<TaskView, ServiceError>;
    fn next_task(&mut self, worker: &PubKey) -> Result<TaskAssignment, ServiceError>;
    fn record_result(&mut self, task_id: &TaskId, worker: &PubKey, result: &TaskResult) -> Result<(), ServiceError>;
    fn requeue_task(&mut self, task_id: &TaskId, worker: &PubKey) -> Result<(), ServiceError>;
    fn authorize_key_release(&mut self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> Result<bool, ServiceError>;
    fn benchmark(&mut self, challenge_id: &ChallengeId) -> Result<Vec<BenchmarkRow>, ServiceError>;
    fn contributivity(&mut self, challenge_id: &ChallengeId) -> Result<Option<ContributivityVector>, ServiceError>;
    fn balance(&mut self, account: &AccountId) -> Result<Credits, ServiceError>;
    fn chain(&mut self) -> Result<Vec<Block>, ServiceError>;
}

/// The whole platform as seen from one actor.
pub trait Platform: StorageApi + CustodyApi + OrchestratorApi {}

impl<T: StorageApi + CustodyApi + OrchestratorApi + ?Sized> Platform for T {}
