//! Ephemeral worker: fresh identity, one task, then self-destruction.
//!
//! Phases only move forward. Network access happens in `provision` and
//! `report_and_destroy`; `run` takes no platform handle at all, so the
//! isolated phase cannot send anything.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, Zeroizing};

use super::dataset::{parse_unlabeled_csv, Dataset};
use super::trainer::{evaluate, predict, train, Model, TrainerSpec};
use super::ComputeError;
use crate::cryptobox::{
    decrypt_blob, encrypt_blob, generate_key, reconstruct_key, seal_for_recipient, sign_challenge, split_key,
    Identity, ReleaseRequest,
};
use crate::ledger::TaskKind;
use crate::service::{Platform, ServiceError, TaskAssignment, TaskResult};
use crate::storage::BlobKind;
use crate::types::{BlobId, NodeId, PubKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Created,
    Provisioned,
    IsolatedRunning,
    Reporting,
    Destroyed,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkerError {
    #[error("orchestrator refused key release for {0}")]
    AuthorizationDenied(BlobId),
    #[error("share for {record} missing from {node}: {reason}")]
    MissingShares {
        record: BlobId,
        node: NodeId,
        reason: String,
    },
    #[error("record {0} failed to decrypt")]
    AuthenticationFailed(BlobId),
    #[error("could not fetch {record}: {reason}")]
    FetchFailed { record: BlobId, reason: String },
    #[error("compute failed: {0}")]
    Compute(ComputeError),
    #[error("orchestrator rejected the report: {0}")]
    ReportRejected(ServiceError),
    #[error("custodian {0} unavailable")]
    CustodianUnavailable(NodeId),
    #[error("storage unavailable: {0}")]
    StorageUnavailable(ServiceError),
    #[error("entropy source unavailable")]
    EntropyUnavailable,
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
}

struct Buffer {
    record: Option<BlobId>,
    bytes: Zeroizing<Vec<u8>>,
}

enum Outcome {
    Learn { performance: f64, model: Option<usize> },
    Predict { output: usize },
}

pub struct Worker {
    identity: Identity,
    phase: Phase,
    task: Option<TaskAssignment>,
    scratch: Vec<Buffer>,
    outcome: Option<Outcome>,
}

impl std::fmt::Debug for Worker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Worker")
            .field("pubkey", &self.identity.public_key())
            .field("phase", &self.phase)
            .field("scratch_bytes", &self.scratch_len())
            .finish()
    }
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl Worker {
    pub fn spawn<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Worker {
            identity: Identity::generate(rng),
            phase: Phase::Created,
            task: None,
            scratch: Vec::new(),
            outcome: None,
        }
    }

    pub fn public_key(&self) -> PubKey {
        self.identity.public_key()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn task(&self) -> Option<&TaskAssignment> {
        self.task.as_ref()
    }

    /// Total plaintext bytes held.
    pub fn scratch_len(&self) -> usize {
        self.scratch.iter().map(|b| b.bytes.len()).sum()
    }

    /// Digests of every plaintext buffer, for taint instrumentation.
    pub fn scratch_fingerprints(&self) -> Vec<[u8; 32]> {
        self.scratch.iter().map(|b| sha256(&b.bytes)).collect()
    }

    pub fn scratch_plaintexts(&self) -> impl Iterator<Item = &[u8]> {
        self.scratch.iter().map(|b| b.bytes.as_slice())
    }

    fn expect(&self, phase: Phase) -> Result<(), WorkerError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(WorkerError::WrongPhase(self.phase))
        }
    }

    fn wipe(&mut self) {
        for b in &mut self.scratch {
            b.bytes.zeroize();
        }
        self.scratch.clear();
        self.scratch.shrink_to_fit();
        self.outcome = None;
    }

    /// Fetches and decrypts every record the task references. On failure
    /// nothing is retained and the phase is unchanged.
    pub fn provision<P: Platform + ?Sized>(&mut self, task: TaskAssignment, platform: &mut P) -> Result<(), WorkerError> {
        self.expect(Phase::Created)?;
        let me = self.identity.public_key();
        let nodes = platform.custodians();
        self.task = Some(task.clone());
        let mut loaded = Vec::new();
        for record in task.records() {
            let fail = |e: WorkerError, loaded: &mut Vec<Buffer>| {
                loaded.iter_mut().for_each(|b: &mut Buffer| b.bytes.zeroize());
                Err(e)
            };
            match platform.authorize_key_release(&task.task_id, &me, &record) {
                Ok(true) => {}
                Ok(false) | Err(_) => return fail(WorkerError::AuthorizationDenied(record), &mut loaded),
            }
            let blob = match platform.get_blob(&record) {
                Ok(b) => b,
                Err(e) => {
                    let reason = e.to_string();
                    return fail(WorkerError::FetchFailed { record, reason }, &mut loaded);
                }
            };
            let mut shares = Vec::with_capacity(nodes.len());
            for node in &nodes {
                let share = platform
                    .issue_challenge(node, &task.task_id, &record)
                    .and_then(|challenge| {
                        let request = ReleaseRequest {
                            signature: sign_challenge(&self.identity, &challenge),
                            challenge,
                            worker_pubkey: me,
                        };
                        platform.release_share(node, &request)
                    });
                match share {
                    Ok(s) => shares.push(s),
                    Err(e) => {
                        shares.iter_mut().for_each(|s: &mut crate::cryptobox::KeyShare| s.zeroize());
                        let missing = WorkerError::MissingShares {
                            record,
                            node: node.clone(),
                            reason: e.to_string(),
                        };
                        return fail(missing, &mut loaded);
                    }
                }
            }
            let plain = reconstruct_key(&shares, nodes.len())
                .and_then(|key| decrypt_blob(&key, &blob.sealed));
            shares.iter_mut().for_each(|s| s.zeroize());
            match plain {
                Ok(p) => loaded.push(Buffer {
                    record: Some(record),
                    bytes: Zeroizing::new(p),
                }),
                Err(_) => return fail(WorkerError::AuthenticationFailed(record), &mut loaded),
            }
        }
        self.scratch = loaded;
        self.phase = Phase::Provisioned;
        Ok(())
    }

    fn plaintext(&self, record: &BlobId) -> &[u8] {
        self.scratch
            .iter()
            .find(|b| b.record.as_ref() == Some(record))
            .map(|b| b.bytes.as_slice())
            .expect("provisioned record")
    }

    fn push_output(&mut self, bytes: Vec<u8>) -> usize {
        self.scratch.push(Buffer {
            record: None,
            bytes: Zeroizing::new(bytes),
        });
        self.scratch.len() - 1
    }

    /// Trains-and-evaluates or predicts, entirely offline.
    pub fn run(&mut self) -> Result<(), WorkerError> {
        self.expect(Phase::Provisioned)?;
        self.phase = Phase::IsolatedRunning;
        let task = self.task.clone().expect("provisioned task");
        let outcome = match task.kind {
            TaskKind::Learn => self.run_learn(&task),
            TaskKind::Predict => self.run_predict(&task),
        }
        .map_err(WorkerError::Compute)?;
        self.outcome = Some(outcome);
        self.phase = Phase::Reporting;
        Ok(())
    }

    fn parse_all(&self, ids: &[BlobId], task: &TaskAssignment) -> Result<Dataset, ComputeError> {
        let mut parts = Vec::with_capacity(ids.len());
        for id in ids {
            let d = Dataset::parse_csv(self.plaintext(id))?;
            d.check_labels(&task.label_set)?;
            parts.push(d);
        }
        Dataset::concat(&parts)
    }

    fn run_learn(&mut self, task: &TaskAssignment) -> Result<Outcome, ComputeError> {
        let spec = TrainerSpec::from_json(self.plaintext(&task.algorithm_or_model_id))?;
        let training = self.parse_all(&task.data_ids, task)?;
        let validation = self.parse_all(&task.validation_ids, task)?;
        if training.is_empty() {
            // A leave-one-out run over a single datum trains on nothing.
            return Ok(Outcome::Learn {
                performance: 0.0,
                model: None,
            });
        }
        if !validation.is_empty() && validation.dimension() != training.dimension() {
            return Err(ComputeError::DimensionMismatch {
                expected: training.dimension(),
                got: validation.dimension(),
            });
        }
        let parameters = train(&training, &spec, None)?;
        let performance = evaluate(&parameters, &validation)?;
        let model = if task.shadow.is_some() {
            None
        } else {
            let model = Model {
                algorithm_id: task.algorithm_or_model_id,
                parameters,
                trained_on: task.data_ids.clone(),
            };
            Some(self.push_output(model.to_json()))
        };
        Ok(Outcome::Learn { performance, model })
    }

    fn run_predict(&mut self, task: &TaskAssignment) -> Result<Outcome, ComputeError> {
        let model = Model::from_json(self.plaintext(&task.algorithm_or_model_id))?;
        let mut labels = Vec::new();
        for id in &task.data_ids {
            for row in parse_unlabeled_csv(self.plaintext(id))? {
                labels.push(predict(&model.parameters, &row)?);
            }
        }
        let output = self.push_output(serde_json::to_vec(&labels).expect("labels serialize"));
        Ok(Outcome::Predict { output })
    }

    /// Publishes the result, then wipes everything whether or not the
    /// report went through.
    pub fn report_and_destroy<P: Platform + ?Sized, R: RngCore + CryptoRng>(
        &mut self,
        platform: &mut P,
        rng: &mut R,
    ) -> Result<TaskResult, WorkerError> {
        self.expect(Phase::Reporting)?;
        let result = self.report(platform, rng);
        self.destroy();
        result
    }

    fn report<P: Platform + ?Sized, R: RngCore + CryptoRng>(
        &mut self,
        platform: &mut P,
        rng: &mut R,
    ) -> Result<TaskResult, WorkerError> {
        let task = self.task.clone().expect("task");
        let me = self.identity.public_key();
        let result = match self.outcome.as_ref().expect("outcome after run") {
            Outcome::Learn { performance, model } => {
                let model_id = match model {
                    None => None,
                    Some(i) => {
                        let key = generate_key(rng).map_err(|_| WorkerError::EntropyUnavailable)?;
                        let sealed = encrypt_blob(&key, &self.scratch[*i].bytes, rng)
                            .map_err(|_| WorkerError::EntropyUnavailable)?;
                        let id = platform
                            .put_blob(&sealed, BlobKind::Model)
                            .map_err(WorkerError::StorageUnavailable)?;
                        let nodes = platform.custodians();
                        let set = split_key(id, &key, &nodes, rng).map_err(|_| {
                            WorkerError::CustodianUnavailable(nodes.first().cloned().unwrap_or(NodeId::from("none")))
                        })?;
                        for (node, share) in &set.shares {
                            platform
                                .deposit_share(node, &id, share)
                                .map_err(|_| WorkerError::CustodianUnavailable(node.clone()))?;
                        }
                        Some(id)
                    }
                };
                TaskResult::Learn {
                    performance: *performance,
                    model_id,
                }
            }
            Outcome::Predict { output } => {
                let requester = task.requester_key.expect("predict tasks carry the requester key");
                let envelope = seal_for_recipient(&requester, &self.scratch[*output].bytes, rng)
                    .map_err(|_| WorkerError::EntropyUnavailable)?;
                let id = platform
                    .put_blob(&envelope.to_blob(), BlobKind::Prediction)
                    .map_err(WorkerError::StorageUnavailable)?;
                TaskResult::Predict { sealed_output_id: id }
            }
        };
        platform
            .record_result(&task.task_id, &me, &result)
            .map_err(WorkerError::ReportRejected)?;
        Ok(result)
    }

    /// Gives the task back to the queue (once per task) and self-destructs.
    pub fn abandon<P: Platform + ?Sized>(&mut self, platform: &mut P) -> Result<(), ServiceError> {
        let out = match &self.task {
            Some(t) => platform.requeue_task(&t.task_id, &self.identity.public_key()),
            None => Ok(()),
        };
        self.destroy();
        out
    }

    /// Zeroes and drops every plaintext buffer.
    pub fn destroy(&mut self) {
        self.wipe();
        self.phase = Phase::Destroyed;
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.wipe();
    }
}
