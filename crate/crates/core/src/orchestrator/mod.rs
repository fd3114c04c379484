//! The ledger-keeping authority: registers records, schedules learn and
//! predict tasks, hands them to workers, records results, settles payments
//! and answers key-release authorization queries.
//!
//! All state is derived from the chain (see [`State`]). Every mutation is a
//! ledger append followed by applying the same event to the live state.

mod state;

pub use state::{LatestVector, Round, State};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::clock::Clock;
use crate::cryptobox::Identity;
use crate::ledger::{append_to_file, Event, Ledger, LedgerError, PredictionRequest, RecordKind, ShadowTag, TaskKind};
use crate::service::{PredictionOrder, RegisterRequest, ServiceError, TaskAssignment, TaskResult, TaskStatus, TaskView};
use crate::storage::BlobStore;
use crate::types::{AccountId, BlobId, ChallengeId, Credits, Label, PubKey, TaskId};
use crate::valuation::{orchestrate_loo_jobs, split_payment, ContributivityVector, ValuationError};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum OrchestratorError {
    #[error("blob {0} is not in storage")]
    UnknownBlob(BlobId),
    #[error("unknown challenge {0}")]
    UnknownChallenge(ChallengeId),
    #[error("record {0} already registered")]
    DuplicateRegistration(BlobId),
    #[error("account {account} has {available} available, needs {needed}")]
    InsufficientBalance {
        account: AccountId,
        available: Credits,
        needed: Credits,
    },
    #[error("no trained model for this challenge")]
    NoModelAvailable,
    #[error("no queued task")]
    NoWork,
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task is assigned to a different worker")]
    WrongWorker,
    #[error("task {0} is not currently assigned")]
    TaskNotAssigned(TaskId),
    #[error("performance {0} outside [0,1]")]
    InvalidPerformance(f64),
    #[error("task {0} was already requeued once")]
    RequeueExhausted(TaskId),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("storage unreachable: {0}")]
    StorageUnavailable(String),
    #[error(transparent)]
    Valuation(ValuationError),
    #[error(transparent)]
    Ledger(LedgerError),
}

impl From<LedgerError> for OrchestratorError {
    fn from(e: LedgerError) -> Self {
        OrchestratorError::Ledger(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub algorithm_id: BlobId,
    pub best_model_id: BlobId,
    pub best_performance: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeSpec {
    pub challenge_id: ChallengeId,
    pub description: String,
    pub label_set: Vec<Label>,
    pub validation_data_ids: Vec<BlobId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub top_k: usize,
    pub fee_rate: f64,
    pub infra_account: AccountId,
    /// Owner recorded for models the platform registers.
    pub platform_account: AccountId,
    /// Start a leave-one-out round whenever a challenge's learn queue
    /// drains and its data or best algorithm changed since the last round.
    pub auto_contributivity: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            top_k: 3,
            fee_rate: 0.1,
            infra_account: AccountId::from("infrastructure"),
            platform_account: AccountId::from("platform"),
            auto_contributivity: true,
        }
    }
}

/// How the orchestrator checks that a record exists before registering it.
pub trait BlobProbe {
    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError>;
}

impl BlobProbe for BlobStore {
    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError> {
        Ok(BlobStore::has_blob(self, id))
    }
}

pub struct Orchestrator {
    ledger: Ledger,
    state: State,
    config: OrchestratorConfig,
    clock: Arc<dyn Clock>,
    chain_path: Option<PathBuf>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("blocks", &self.ledger.len())
            .field("config", &self.config)
            .finish()
    }
}

fn probe(p: &mut dyn BlobProbe, id: &BlobId) -> Result<(), OrchestratorError> {
    match p.has_blob(id) {
        Ok(true) => Ok(()),
        Ok(false) => Err(OrchestratorError::UnknownBlob(*id)),
        Err(e) => Err(OrchestratorError::StorageUnavailable(e.to_string())),
    }
}

impl Orchestrator {
    pub fn new(signer: Identity, config: OrchestratorConfig, clock: Arc<dyn Clock>) -> Self {
        Orchestrator {
            ledger: Ledger::new(signer),
            state: State::default(),
            config,
            clock,
            chain_path: None,
        }
    }

    /// Resumes from (or starts) a chain file; every append is written
    /// through to it.
    pub fn open(path: &Path, signer: Identity, config: OrchestratorConfig, clock: Arc<dyn Clock>) -> Result<Self, OrchestratorError> {
        let ledger = Ledger::load(path, signer)?;
        let state = State::replay(ledger.blocks())?;
        Ok(Orchestrator {
            ledger,
            state,
            config,
            clock,
            chain_path: Some(path.to_path_buf()),
        })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn pubkey(&self) -> PubKey {
        self.ledger.pubkey()
    }

    /// True iff rebuilding state from the chain reproduces the live state.
    pub fn replay_matches(&self) -> bool {
        State::replay(self.ledger.blocks()).is_ok_and(|s| s == self.state)
    }

    fn append(&mut self, event: Event) -> Result<(), OrchestratorError> {
        let block = self.ledger.append_event(event, self.clock.now_ms())?.clone();
        self.state.apply(&block.event)?;
        if let Some(path) = &self.chain_path {
            append_to_file(path, &block)?;
        }
        Ok(())
    }

    fn challenge_ref(&self, id: &ChallengeId) -> Result<&crate::ledger::ChallengeRef, OrchestratorError> {
        self.state
            .index
            .challenges
            .get(id)
            .ok_or_else(|| OrchestratorError::UnknownChallenge(id.clone()))
    }

    pub fn define_challenge(&mut self, id: ChallengeId, description: String, label_set: Vec<Label>) -> Result<(), OrchestratorError> {
        self.append(Event::ChallengeDefined {
            challenge_id: id,
            description,
            label_set,
        })
    }

    pub fn fund_account(&mut self, account: AccountId, amount: Credits) -> Result<(), OrchestratorError> {
        if amount == 0 {
            return Err(OrchestratorError::InvalidRequest("funding must be positive".into()));
        }
        self.append(Event::AccountFunded {
            account_id: account,
            amount,
        })
    }

    pub fn challenge(&self, id: &ChallengeId) -> Result<ChallengeSpec, OrchestratorError> {
        let c = self.challenge_ref(id)?;
        Ok(ChallengeSpec {
            challenge_id: id.clone(),
            description: c.description.clone(),
            label_set: c.label_set.clone(),
            validation_data_ids: c.validation_ids.clone(),
        })
    }

    pub fn register_data(&mut self, req: &RegisterRequest, blobs: &mut dyn BlobProbe) -> Result<Vec<TaskView>, OrchestratorError> {
        if req.kind == RecordKind::Model {
            return Err(OrchestratorError::InvalidRequest("models are registered by the platform".into()));
        }
        let first_validation = self.challenge_ref(&req.challenge_id)?.validation_ids.is_empty();
        if self.state.index.records.contains_key(&req.record_id) {
            return Err(OrchestratorError::DuplicateRegistration(req.record_id));
        }
        probe(blobs, &req.record_id)?;
        self.append(Event::DataRegistered {
            record_id: req.record_id,
            owner_id: req.owner.clone(),
            kind: req.kind,
            challenge_id: req.challenge_id.clone(),
        })?;
        let c = &req.challenge_id;
        match req.kind {
            RecordKind::RawData => self.schedule_on_new_data(c, &req.record_id),
            RecordKind::Algorithm => self.schedule_learn(c, &[req.record_id]),
            RecordKind::Validation if first_validation => {
                let algorithms: Vec<BlobId> = self
                    .state
                    .algorithms
                    .get(c)
                    .map(|a| a.iter().map(|(id, _)| *id).collect())
                    .unwrap_or_default();
                self.schedule_learn(c, &algorithms)
            }
            RecordKind::Validation | RecordKind::Model => Ok(Vec::new()),
        }
    }

    /// Top-K evaluated algorithms by best performance (ascending id among
    /// equals), followed by every algorithm not yet evaluated.
    pub fn select_algorithms(&self, challenge: &ChallengeId) -> Vec<BlobId> {
        let ranked = self.state.ranked(challenge);
        let evaluated: BTreeSet<BlobId> = ranked.iter().map(|r| r.algorithm_id).collect();
        let mut chosen: Vec<BlobId> = ranked.iter().take(self.config.top_k).map(|r| r.algorithm_id).collect();
        let mut cold: Vec<BlobId> = self
            .state
            .algorithms
            .get(challenge)
            .map(|a| a.iter().map(|(id, _)| *id).filter(|id| !evaluated.contains(id)).collect())
            .unwrap_or_default();
        cold.sort();
        chosen.extend(cold);
        chosen
    }

    pub fn schedule_on_new_data(&mut self, challenge: &ChallengeId, _new_data_id: &BlobId) -> Result<Vec<TaskView>, OrchestratorError> {
        self.challenge_ref(challenge)?;
        let algorithms = self.select_algorithms(challenge);
        self.schedule_learn(challenge, &algorithms)
    }

    /// One learn task per algorithm over all eligible data. Nothing is
    /// scheduled before the challenge has data and a validation set.
    fn schedule_learn(&mut self, challenge: &ChallengeId, algorithms: &[BlobId]) -> Result<Vec<TaskView>, OrchestratorError> {
        let data = self.state.eligible_data(challenge);
        if data.is_empty() || self.challenge_ref(challenge)?.validation_ids.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(algorithms.len());
        for algorithm in algorithms {
            out.push(self.create_task(TaskKind::Learn, data.clone(), *algorithm, challenge, None, None)?);
        }
        Ok(out)
    }

    fn create_task(
        &mut self,
        kind: TaskKind,
        data_ids: Vec<BlobId>,
        algorithm_or_model_id: BlobId,
        challenge: &ChallengeId,
        shadow: Option<ShadowTag>,
        request: Option<PredictionRequest>,
    ) -> Result<TaskView, OrchestratorError> {
        let task_id = TaskId::new(format!("task-{:06}", self.state.task_seq + 1));
        self.append(Event::TaskCreated {
            task_id: task_id.clone(),
            kind,
            data_ids,
            algorithm_or_model_id,
            challenge_id: challenge.clone(),
            shadow,
            request,
        })?;
        Ok(self.state.view(&task_id).expect("just created"))
    }

    pub fn request_prediction(&mut self, order: &PredictionOrder, blobs: &mut dyn BlobProbe) -> Result<TaskView, OrchestratorError> {
        self.challenge_ref(&order.challenge_id)?;
        if order.payment == 0 {
            return Err(OrchestratorError::InvalidRequest("payment must be positive".into()));
        }
        let best = self
            .state
            .ranked(&order.challenge_id)
            .first()
            .map(|r| r.best_model_id)
            .ok_or(OrchestratorError::NoModelAvailable)?;
        let available = self.state.available_balance(&order.requester);
        if available < order.payment {
            return Err(OrchestratorError::InsufficientBalance {
                account: order.requester.clone(),
                available,
                needed: order.payment,
            });
        }
        probe(blobs, &order.input_record_id)?;
        self.create_task(
            TaskKind::Predict,
            vec![order.input_record_id],
            best,
            &order.challenge_id,
            None,
            Some(PredictionRequest {
                requester: order.requester.clone(),
                requester_key: order.requester_key,
                payment: order.payment,
            }),
        )
    }

    pub fn next_task(&mut self, worker: &PubKey) -> Result<TaskAssignment, OrchestratorError> {
        let task_id = self.state.next_queued().cloned().ok_or(OrchestratorError::NoWork)?;
        self.append(Event::WorkerAssigned {
            task_id: task_id.clone(),
            worker_pubkey: *worker,
        })?;
        Ok(self.assignment(&task_id).expect("assigned task exists"))
    }

    pub fn assignment(&self, task_id: &TaskId) -> Option<TaskAssignment> {
        let t = self.state.index.tasks.get(task_id)?;
        let c = self.state.index.challenges.get(&t.challenge_id)?;
        Some(TaskAssignment {
            task_id: task_id.clone(),
            kind: t.kind,
            challenge_id: t.challenge_id.clone(),
            label_set: c.label_set.clone(),
            data_ids: t.data_ids.clone(),
            algorithm_or_model_id: t.algorithm_or_model_id,
            validation_ids: if t.kind == TaskKind::Learn {
                c.validation_ids.clone()
            } else {
                Vec::new()
            },
            shadow: t.shadow.clone(),
            requester_key: t.request.as_ref().map(|r| r.requester_key),
        })
    }

    fn assigned_to(&self, task_id: &TaskId, worker: &PubKey) -> Result<&crate::ledger::TaskRef, OrchestratorError> {
        let t = self
            .state
            .index
            .tasks
            .get(task_id)
            .ok_or_else(|| OrchestratorError::UnknownTask(task_id.clone()))?;
        match t.assignee {
            _ if t.done => Err(OrchestratorError::TaskNotAssigned(task_id.clone())),
            None => Err(OrchestratorError::TaskNotAssigned(task_id.clone())),
            Some(a) if &a != worker => Err(OrchestratorError::WrongWorker),
            Some(_) => Ok(t),
        }
    }

    pub fn record_result(
        &mut self,
        task_id: &TaskId,
        worker: &PubKey,
        result: &TaskResult,
        blobs: &mut dyn BlobProbe,
    ) -> Result<(), OrchestratorError> {
        let task = self.assigned_to(task_id, worker)?.clone();
        match (task.kind, result) {
            (TaskKind::Learn, TaskResult::Learn { performance, model_id }) => {
                if !performance.is_finite() || !(0.0..=1.0).contains(performance) {
                    return Err(OrchestratorError::InvalidPerformance(*performance));
                }
                match (task.shadow.is_some(), model_id) {
                    (true, Some(_)) => {
                        return Err(OrchestratorError::InvalidRequest("shadow runs store no model".into()))
                    }
                    (false, None) => {
                        return Err(OrchestratorError::InvalidRequest("learn result lacks a model".into()))
                    }
                    _ => {}
                }
                if let Some(model) = model_id {
                    if self.state.index.records.contains_key(model) {
                        return Err(OrchestratorError::DuplicateRegistration(*model));
                    }
                    probe(blobs, model)?;
                    self.append(Event::DataRegistered {
                        record_id: *model,
                        owner_id: self.config.platform_account.clone(),
                        kind: RecordKind::Model,
                        challenge_id: task.challenge_id.clone(),
                    })?;
                }
                self.append(Event::PerformanceRecorded {
                    task_id: task_id.clone(),
                    model_id: *model_id,
                    performance: *performance,
                })?;
                if self.config.auto_contributivity {
                    self.maybe_start_round(&task.challenge_id)?;
                }
                Ok(())
            }
            (TaskKind::Predict, TaskResult::Predict { sealed_output_id }) => {
                probe(blobs, sealed_output_id)?;
                let request = task.request.clone().expect("predict tasks carry a request");
                let splits = self.settlement(&task.algorithm_or_model_id, &task.challenge_id, request.payment)?;
                self.append(Event::PredictionRecorded {
                    task_id: task_id.clone(),
                    model_id: task.algorithm_or_model_id,
                    sealed_output_id: *sealed_output_id,
                })?;
                self.append(Event::PaymentRecorded {
                    payer: request.requester,
                    splits: splits.entries(),
                })
            }
            _ => Err(OrchestratorError::InvalidRequest("result kind does not match task".into())),
        }
    }

    /// Splits a prediction payment by the latest contributivity vector, or
    /// evenly over the model's training data if none exists yet. The whole
    /// algorithm share goes to the owner of the model's algorithm.
    pub fn settlement(&self, model: &BlobId, challenge: &ChallengeId, payment: Credits) -> Result<crate::valuation::PaymentSplit, OrchestratorError> {
        let producing = self.state.models.get(model).ok_or(OrchestratorError::NoModelAvailable)?;
        let task = &self.state.index.tasks[producing];
        let owner_of_record = |id: &BlobId| self.state.index.records.get(id).map(|r| r.owner.clone());
        let algorithm_owner = owner_of_record(&task.algorithm_or_model_id).ok_or(OrchestratorError::NoModelAvailable)?;
        let vector = match self.state.vectors.get(challenge) {
            Some(v) if !v.vector.entries.is_empty() => v.vector.clone(),
            _ => ContributivityVector::uniform(challenge.clone(), &task.data_ids),
        };
        let owners: BTreeMap<BlobId, AccountId> = vector
            .entries
            .iter()
            .filter_map(|e| owner_of_record(&e.data_id).map(|o| (e.data_id, o)))
            .collect();
        split_payment(
            payment,
            &vector,
            &owners,
            &algorithm_owner,
            self.config.fee_rate,
            &self.config.infra_account,
        )
        .map_err(OrchestratorError::Valuation)
    }

    pub fn requeue_task(&mut self, task_id: &TaskId, worker: &PubKey) -> Result<(), OrchestratorError> {
        let task = self.assigned_to(task_id, worker)?;
        if task.requeues >= 1 {
            return Err(OrchestratorError::RequeueExhausted(task_id.clone()));
        }
        self.append(Event::TaskRequeued {
            task_id: task_id.clone(),
            worker_pubkey: *worker,
        })
    }

    pub fn authorize_key_release(&self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> bool {
        self.state.index.authorizes(task_id, worker, record_id)
    }

    pub fn benchmark(&self, challenge: &ChallengeId) -> Result<Vec<BenchmarkRow>, OrchestratorError> {
        self.challenge_ref(challenge)?;
        Ok(self.state.ranked(challenge))
    }

    pub fn contributivity(&self, challenge: &ChallengeId) -> Result<Option<ContributivityVector>, OrchestratorError> {
        self.challenge_ref(challenge)?;
        Ok(self.state.vectors.get(challenge).map(|v| v.vector.clone()))
    }

    pub fn balance(&self, account: &AccountId) -> Credits {
        self.state.balances.balance(account)
    }

    pub fn tasks(&self) -> Vec<TaskView> {
        self.state.order.iter().filter_map(|t| self.state.view(t)).collect()
    }

    /// Assigned tasks whose single requeue is spent: a second worker
    /// failure leaves them stuck.
    pub fn stuck_tasks(&self) -> Vec<TaskId> {
        self.state
            .order
            .iter()
            .filter(|t| {
                let r = &self.state.index.tasks[*t];
                !r.done && r.requeues >= 1 && r.assignee.is_some()
            })
            .cloned()
            .collect()
    }

    /// Queues a leave-one-out round with the current best algorithm over all
    /// raw data of the challenge.
    pub fn start_contributivity_round(&mut self, challenge: &ChallengeId) -> Result<Vec<TaskView>, OrchestratorError> {
        self.challenge_ref(challenge)?;
        let best = self.state.ranked(challenge).first().map(|r| r.algorithm_id);
        let mut data = self.state.raw_data.get(challenge).cloned().unwrap_or_default();
        data.sort();
        let jobs = orchestrate_loo_jobs(best, &data).map_err(OrchestratorError::Valuation)?;
        let round = self
            .state
            .rounds
            .get(challenge)
            .and_then(|r| r.last())
            .map_or(1, |r| r.number + 1);
        let mut out = Vec::with_capacity(jobs.len());
        for job in jobs {
            out.push(self.create_task(
                TaskKind::Learn,
                job.data_ids,
                job.algorithm_id,
                challenge,
                Some(ShadowTag {
                    round,
                    left_out: job.left_out,
                }),
                None,
            )?);
        }
        Ok(out)
    }

    fn maybe_start_round(&mut self, challenge: &ChallengeId) -> Result<(), OrchestratorError> {
        let busy = self.state.index.tasks.values().any(|t| {
            &t.challenge_id == challenge && t.kind == TaskKind::Learn && !t.done
        });
        if busy {
            return Ok(());
        }
        let Some(best) = self.state.ranked(challenge).first().map(|r| r.algorithm_id) else {
            return Ok(());
        };
        let mut data = self.state.raw_data.get(challenge).cloned().unwrap_or_default();
        data.sort();
        if data.is_empty() {
            return Ok(());
        }
        let same_basis = self
            .state
            .rounds
            .get(challenge)
            .and_then(|r| r.last())
            .is_some_and(|r| r.algorithm_id == best && r.data_ids == data);
        if !same_basis {
            self.start_contributivity_round(challenge)?;
        }
        Ok(())
    }

    pub fn status(&self, task_id: &TaskId) -> Option<TaskStatus> {
        self.state.status(task_id)
    }
}
