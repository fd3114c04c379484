//! Referential fold over the chain: what every append and every verification
//! checks events against. Also answers the key-release authorization
//! question, since custodians only trust what the ledger says.

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

use super::event::{Event, PredictionRequest, RecordKind, ShadowTag, TaskKind};
use super::LedgerError;
use crate::types::{AccountId, BlobId, ChallengeId, Label, PubKey, TaskId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChallengeRef {
    pub description: String,
    pub label_set: Vec<Label>,
    pub validation_ids: Vec<BlobId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordRef {
    pub owner: AccountId,
    pub kind: RecordKind,
    pub challenge_id: ChallengeId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRef {
    pub kind: TaskKind,
    pub data_ids: Vec<BlobId>,
    pub algorithm_or_model_id: BlobId,
    pub challenge_id: ChallengeId,
    pub shadow: Option<ShadowTag>,
    pub request: Option<PredictionRequest>,
    pub assignee: Option<PubKey>,
    pub done: bool,
    pub requeues: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChainIndex {
    pub challenges: BTreeMap<ChallengeId, ChallengeRef>,
    pub records: BTreeMap<BlobId, RecordRef>,
    pub tasks: BTreeMap<TaskId, TaskRef>,
}

fn bad(msg: impl Into<String>) -> LedgerError {
    LedgerError::InvalidReference(msg.into())
}

impl ChainIndex {
    pub fn check(&self, event: &Event) -> Result<(), LedgerError> {
        match event {
            Event::ChallengeDefined {
                challenge_id,
                label_set,
                ..
            } => {
                if self.challenges.contains_key(challenge_id) {
                    return Err(bad(format!("challenge {challenge_id} already defined")));
                }
                let distinct: BTreeSet<_> = label_set.iter().collect();
                if label_set.is_empty() || distinct.len() != label_set.len() {
                    return Err(bad("label set must be non-empty and distinct"));
                }
            }
            Event::AccountFunded { .. } => {}
            Event::DataRegistered {
                record_id,
                challenge_id,
                ..
            } => {
                if self.records.contains_key(record_id) {
                    return Err(bad(format!("record {record_id} already registered")));
                }
                self.challenge(challenge_id)?;
            }
            Event::TaskCreated {
                task_id,
                kind,
                data_ids,
                algorithm_or_model_id,
                challenge_id,
                request,
                ..
            } => {
                if self.tasks.contains_key(task_id) {
                    return Err(bad(format!("task {task_id} already exists")));
                }
                self.challenge(challenge_id)?;
                match kind {
                    TaskKind::Learn => {
                        self.expect_record(algorithm_or_model_id, RecordKind::Algorithm, challenge_id)?;
                        for id in data_ids {
                            self.expect_record(id, RecordKind::RawData, challenge_id)?;
                        }
                    }
                    TaskKind::Predict => {
                        self.expect_record(algorithm_or_model_id, RecordKind::Model, challenge_id)?;
                        if request.is_none() || data_ids.is_empty() {
                            return Err(bad(format!("predict task {task_id} lacks request or input")));
                        }
                    }
                }
            }
            Event::WorkerAssigned { task_id, .. } => {
                let task = self.task(task_id)?;
                if task.done || task.assignee.is_some() {
                    return Err(bad(format!("task {task_id} is not queued")));
                }
            }
            Event::TaskRequeued {
                task_id,
                worker_pubkey,
            } => {
                let task = self.task(task_id)?;
                if task.done || task.assignee.as_ref() != Some(worker_pubkey) {
                    return Err(bad(format!("task {task_id} not assigned to {worker_pubkey}")));
                }
            }
            Event::PerformanceRecorded {
                task_id,
                model_id,
                performance,
            } => {
                let task = self.task(task_id)?;
                if task.kind != TaskKind::Learn {
                    return Err(bad(format!("task {task_id} is not a learn task")));
                }
                if task.done || task.assignee.is_none() {
                    return Err(bad(format!("task {task_id} is not assigned")));
                }
                if !performance.is_finite() || !(0.0..=1.0).contains(performance) {
                    return Err(LedgerError::InvalidPerformance(*performance));
                }
                if let Some(model) = model_id {
                    self.expect_record(model, RecordKind::Model, &task.challenge_id)?;
                }
            }
            Event::PredictionRecorded {
                task_id, model_id, ..
            } => {
                let task = self.task(task_id)?;
                if task.kind != TaskKind::Predict {
                    return Err(bad(format!("task {task_id} is not a predict task")));
                }
                if task.done || task.assignee.is_none() {
                    return Err(bad(format!("task {task_id} is not assigned")));
                }
                if &task.algorithm_or_model_id != model_id {
                    return Err(bad(format!("task {task_id} was not run with model {model_id}")));
                }
            }
            Event::PaymentRecorded { .. } => {}
        }
        Ok(())
    }

    pub fn apply(&mut self, event: &Event) {
        match event {
            Event::ChallengeDefined {
                challenge_id,
                description,
                label_set,
            } => {
                self.challenges.insert(
                    challenge_id.clone(),
                    ChallengeRef {
                        description: description.clone(),
                        label_set: label_set.clone(),
                        validation_ids: Vec::new(),
                    },
                );
            }
            Event::DataRegistered {
                record_id,
                owner_id,
                kind,
                challenge_id,
            } => {
                if *kind == RecordKind::Validation {
                    if let Some(c) = self.challenges.get_mut(challenge_id) {
                        c.validation_ids.push(*record_id);
                    }
                }
                self.records.insert(
                    *record_id,
                    RecordRef {
                        owner: owner_id.clone(),
                        kind: *kind,
                        challenge_id: challenge_id.clone(),
                    },
                );
            }
            Event::TaskCreated {
                task_id,
                kind,
                data_ids,
                algorithm_or_model_id,
                challenge_id,
                shadow,
                request,
            } => {
                self.tasks.insert(
                    task_id.clone(),
                    TaskRef {
                        kind: *kind,
                        data_ids: data_ids.clone(),
                        algorithm_or_model_id: *algorithm_or_model_id,
                        challenge_id: challenge_id.clone(),
                        shadow: shadow.clone(),
                        request: request.clone(),
                        assignee: None,
                        done: false,
                        requeues: 0,
                    },
                );
            }
            Event::WorkerAssigned {
                task_id,
                worker_pubkey,
            } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.assignee = Some(*worker_pubkey);
                }
            }
            Event::TaskRequeued { task_id, .. } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.assignee = None;
                    t.requeues += 1;
                }
            }
            Event::PerformanceRecorded { task_id, .. } | Event::PredictionRecorded { task_id, .. } => {
                if let Some(t) = self.tasks.get_mut(task_id) {
                    t.done = true;
                }
            }
            Event::AccountFunded { .. } | Event::PaymentRecorded { .. } => {}
        }
    }

    /// Records a task may legitimately touch: its data, its algorithm or
    /// model, and (for learn tasks) its challenge's validation set.
    pub fn task_records(&self, task_id: &TaskId) -> BTreeSet<BlobId> {
        let mut out = BTreeSet::new();
        if let Some(task) = self.tasks.get(task_id) {
            out.extend(task.data_ids.iter().copied());
            out.insert(task.algorithm_or_model_id);
            if task.kind == TaskKind::Learn {
                if let Some(c) = self.challenges.get(&task.challenge_id) {
                    out.extend(c.validation_ids.iter().copied());
                }
            }
        }
        out
    }

    /// True iff `task_id` is currently assigned (not done) to `worker` and
    /// references `record_id`.
    pub fn authorizes(&self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> bool {
        match self.tasks.get(task_id) {
            Some(task) if !task.done && task.assignee.as_ref() == Some(worker) => {
                self.task_records(task_id).contains(record_id)
            }
            _ => false,
        }
    }

    pub fn current_assignee(&self, task_id: &TaskId) -> Option<PubKey> {
        self.tasks
            .get(task_id)
            .filter(|t| !t.done)
            .and_then(|t| t.assignee)
    }

    fn challenge(&self, id: &ChallengeId) -> Result<&ChallengeRef, LedgerError> {
        self.challenges
            .get(id)
            .ok_or_else(|| bad(format!("unknown challenge {id}")))
    }

    fn task(&self, id: &TaskId) -> Result<&TaskRef, LedgerError> {
        self.tasks
            .get(id)
            .ok_or_else(|| bad(format!("unknown task {id}")))
    }

    fn expect_record(&self, id: &BlobId, kind: RecordKind, challenge: &ChallengeId) -> Result<(), LedgerError> {
        match self.records.get(id) {
            Some(r) if r.kind == kind && &r.challenge_id == challenge => Ok(()),
            Some(r) => Err(bad(format!(
                "record {id} is {:?} in {}, expected {kind:?} in {challenge}",
                r.kind, r.challenge_id
            ))),
            None => Err(bad(format!("unknown record {id}"))),
        }
    }
}
