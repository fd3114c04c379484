//! Everything the orchestrator knows, as a pure fold over the chain. The
//! live orchestrator applies each block as it appends it; replaying the
//! chain from genesis must reproduce the same value.

use serde::Serialize;
use std::collections::BTreeMap;

use super::{BenchmarkRow, OrchestratorError};
use crate::ledger::{Block, ChainIndex, Event, RecordKind, TaskKind};
use crate::service::{TaskStatus, TaskView};
use crate::types::{AccountId, BlobId, ChallengeId, Credits, TaskId};
use crate::valuation::{compute_contributivity, Balances, ContributivityVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Round {
    pub number: u64,
    pub algorithm_id: BlobId,
    pub data_ids: Vec<BlobId>,
    pub tasks: Vec<TaskId>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatestVector {
    pub vector: ContributivityVector,
    pub at_block: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct State {
    pub index: ChainIndex,
    /// Task ids in creation order.
    pub order: Vec<TaskId>,
    pub benchmark: BTreeMap<ChallengeId, BTreeMap<BlobId, BenchmarkRow>>,
    pub balances: Balances,
    /// Payments promised by predict tasks not yet settled.
    pub escrow: BTreeMap<AccountId, Credits>,
    pub results: BTreeMap<TaskId, (Option<BlobId>, f64)>,
    /// Model id to the task that produced it.
    pub models: BTreeMap<BlobId, TaskId>,
    /// Algorithms per challenge with the block index that registered them.
    pub algorithms: BTreeMap<ChallengeId, Vec<(BlobId, u64)>>,
    pub raw_data: BTreeMap<ChallengeId, Vec<BlobId>>,
    pub rounds: BTreeMap<ChallengeId, Vec<Round>>,
    pub vectors: BTreeMap<ChallengeId, LatestVector>,
    pub task_seq: u64,
    pub blocks: u64,
}

impl State {
    pub fn replay(chain: &[Block]) -> Result<State, OrchestratorError> {
        let mut s = State::default();
        for b in chain {
            s.index.check(&b.event).map_err(OrchestratorError::Ledger)?;
            s.apply(&b.event)?;
        }
        Ok(s)
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), OrchestratorError> {
        let at = self.blocks;
        self.index.apply(event);
        self.blocks += 1;
        match event {
            Event::ChallengeDefined { .. } | Event::WorkerAssigned { .. } | Event::TaskRequeued { .. } => {}
            Event::AccountFunded { account_id, amount } => self.balances.fund(account_id, *amount),
            Event::DataRegistered {
                record_id,
                kind,
                challenge_id,
                ..
            } => match kind {
                RecordKind::Algorithm => self
                    .algorithms
                    .entry(challenge_id.clone())
                    .or_default()
                    .push((*record_id, at)),
                RecordKind::RawData => self.raw_data.entry(challenge_id.clone()).or_default().push(*record_id),
                RecordKind::Model | RecordKind::Validation => {}
            },
            Event::TaskCreated {
                task_id,
                data_ids,
                algorithm_or_model_id,
                challenge_id,
                shadow,
                request,
                ..
            } => {
                self.task_seq += 1;
                self.order.push(task_id.clone());
                if let Some(tag) = shadow {
                    let rounds = self.rounds.entry(challenge_id.clone()).or_default();
                    if rounds.last().map(|r| r.number) != Some(tag.round) {
                        rounds.push(Round {
                            number: tag.round,
                            algorithm_id: *algorithm_or_model_id,
                            data_ids: data_ids.clone(),
                            tasks: Vec::new(),
                            complete: false,
                        });
                    }
                    rounds.last_mut().expect("pushed").tasks.push(task_id.clone());
                }
                if let Some(req) = request {
                    *self.escrow.entry(req.requester.clone()).or_insert(0) += req.payment;
                }
            }
            Event::PerformanceRecorded {
                task_id,
                model_id,
                performance,
            } => {
                self.results.insert(task_id.clone(), (*model_id, *performance));
                let task = self.index.tasks[task_id].clone();
                if task.shadow.is_some() {
                    self.close_round(&task.challenge_id, at);
                } else if let Some(model) = model_id {
                    self.models.insert(*model, task_id.clone());
                    let rows = self.benchmark.entry(task.challenge_id.clone()).or_default();
                    let row = rows.entry(task.algorithm_or_model_id).or_insert(BenchmarkRow {
                        algorithm_id: task.algorithm_or_model_id,
                        best_model_id: *model,
                        best_performance: *performance,
                        evaluations: 0,
                    });
                    if row.evaluations > 0 && *performance > row.best_performance {
                        row.best_model_id = *model;
                        row.best_performance = *performance;
                    }
                    row.evaluations += 1;
                }
            }
            Event::PredictionRecorded { task_id, .. } => {
                if let Some(req) = &self.index.tasks[task_id].request {
                    if let Some(e) = self.escrow.get_mut(&req.requester) {
                        *e -= req.payment;
                        if *e == 0 {
                            self.escrow.remove(&req.requester);
                        }
                    }
                }
            }
            Event::PaymentRecorded { payer, splits } => self
                .balances
                .apply_entries(payer, splits)
                .map_err(OrchestratorError::Valuation)?,
        }
        Ok(())
    }

    fn close_round(&mut self, challenge: &ChallengeId, at: u64) {
        let Some(round) = self.rounds.get_mut(challenge).and_then(|r| r.last_mut()) else {
            return;
        };
        if round.complete || round.tasks.iter().any(|t| !self.index.tasks[t].done) {
            return;
        }
        round.complete = true;
        let mut full = None;
        let mut without = BTreeMap::new();
        for t in &round.tasks {
            let perf = self.results[t].1;
            match &self.index.tasks[t].shadow.as_ref().expect("shadow task").left_out {
                None => full = Some(perf),
                Some(d) => {
                    without.insert(*d, perf);
                }
            }
        }
        if let Some(full) = full {
            if let Ok(vector) = compute_contributivity(challenge.clone(), &round.data_ids, full, &without) {
                self.vectors.insert(challenge.clone(), LatestVector { vector, at_block: at });
            }
        }
    }

    pub fn status(&self, task_id: &TaskId) -> Option<TaskStatus> {
        self.index.tasks.get(task_id).map(|t| {
            if t.done {
                TaskStatus::Done
            } else if t.assignee.is_some() {
                TaskStatus::Assigned
            } else {
                TaskStatus::Queued
            }
        })
    }

    pub fn view(&self, task_id: &TaskId) -> Option<TaskView> {
        let t = self.index.tasks.get(task_id)?;
        Some(TaskView {
            task_id: task_id.clone(),
            kind: t.kind,
            data_ids: t.data_ids.clone(),
            algorithm_or_model_id: t.algorithm_or_model_id,
            challenge_id: t.challenge_id.clone(),
            status: self.status(task_id)?,
            shadow: t.shadow.is_some(),
            requester: t.request.as_ref().map(|r| r.requester.clone()),
        })
    }

    /// Oldest queued task, predictions before learning.
    pub fn next_queued(&self) -> Option<&TaskId> {
        let queued = |kind: TaskKind| {
            self.order
                .iter()
                .find(move |t| self.index.tasks[*t].kind == kind && self.status(t) == Some(TaskStatus::Queued))
        };
        queued(TaskKind::Predict).or_else(|| queued(TaskKind::Learn))
    }

    pub fn available_balance(&self, account: &AccountId) -> Credits {
        self.balances
            .balance(account)
            .saturating_sub(self.escrow.get(account).copied().unwrap_or(0))
    }

    /// Benchmark rows, best first, ascending algorithm id among equals.
    pub fn ranked(&self, challenge: &ChallengeId) -> Vec<BenchmarkRow> {
        let mut rows: Vec<BenchmarkRow> = self
            .benchmark
            .get(challenge)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default();
        rows.sort_by(|a, b| {
            b.best_performance
                .partial_cmp(&a.best_performance)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.algorithm_id.cmp(&b.algorithm_id))
        });
        rows
    }

    /// Raw data still fed to training: zero-score data of the latest
    /// contributivity round are dropped until a newer algorithm arrives.
    pub fn eligible_data(&self, challenge: &ChallengeId) -> Vec<BlobId> {
        let all = self.raw_data.get(challenge).cloned().unwrap_or_default();
        let Some(latest) = self.vectors.get(challenge) else {
            return all;
        };
        let newer_algorithm = self
            .algorithms
            .get(challenge)
            .is_some_and(|a| a.iter().any(|(_, at)| *at > latest.at_block));
        if newer_algorithm {
            return all;
        }
        all.into_iter()
            .filter(|d| latest.vector.score(d) != Some(0.0))
            .collect()
    }
}
