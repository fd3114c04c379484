//! Deterministic in-process simulation of the whole network.
//!
//! Clients, workers, a supervisor and an admin are actors talking to
//! storage, custodians and the orchestrator through a [`fabric::Fabric`]
//! that records every message and applies the fault plan. Worker slots
//! advance one workflow step at a time, in an order drawn from the seeded
//! scheduler RNG, so concurrent tasks interleave adversarially but
//! reproducibly.
//!
//! After the run every message payload and every service's state is
//! scanned for plaintext fingerprints ([`TaintMap`]).

mod config;
mod fabric;
mod taint;
mod trace;

pub use config::{inject_fault, Action, CorrectionSource, Fault, SimConfig, Step, Window, WorkerBehavior};
pub use fabric::{Fabric, ORCHESTRATOR, STORAGE};
pub use taint::{assert_privacy, key_confidentiality, PrivacyVerdict, TaintMap, Violation, MIN_SUBSTRING_LEN};
pub use trace::{verify_trace, Delivery, Trace, TraceEvent, TraceReport};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use self::fabric::Context;
use crate::client::{AnnotationCorrection, Client, KeyVault};
use crate::clock::LogicalClock;
use crate::compute::{Phase, Worker};
use crate::cryptobox::{decrypt_blob, SealedBlob, SymmetricKey, NONCE_LEN, TAG_LEN};
use crate::local::LocalNetwork;
use crate::orchestrator::{OrchestratorConfig, OrchestratorError};
use crate::service::{OrchestratorApi, ServiceError, StorageApi, TaskAssignment};
use crate::storage::BlobKind;
use crate::types::{AccountId, BlobId, TaskId};

const MAX_SCHEDULER_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("malformed scenario: {0}")]
    Scenario(String),
    #[error("fault conflicts with the plan: {0:?}")]
    ConflictingFault(Fault),
    #[error("malformed trace: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub index: usize,
    pub name: String,
    pub actor: String,
    pub result: Result<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub actor: String,
    pub assignment: u64,
    pub task_id: TaskId,
    pub end: String,
    /// Plaintext bytes still held after the worker was done.
    pub retained_bytes: usize,
}

pub struct SimOutcome {
    pub trace: Trace,
    pub taint: TaintMap,
    pub network: LocalNetwork,
    pub actions: Vec<ActionOutcome>,
    pub workers: Vec<WorkerRecord>,
    pub clients: BTreeMap<String, Client<ChaCha20Rng>>,
    /// Live orchestrator state equals a replay of its chain.
    pub replay_ok: bool,
    /// Keys recoverable from a single custodian; empty when none are.
    pub key_leaks: Vec<String>,
}

impl std::fmt::Debug for SimOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimOutcome")
            .field("events", &self.trace.events.len())
            .field("actions", &self.actions)
            .field("workers", &self.workers.len())
            .field("replay_ok", &self.replay_ok)
            .finish_non_exhaustive()
    }
}

impl SimOutcome {
    pub fn account(&self, client: &str) -> Option<AccountId> {
        self.clients.get(client).map(|c| c.account())
    }

    pub fn privacy(&self) -> PrivacyVerdict {
        assert_privacy(&self.trace, &self.taint)
    }
}

struct ClientState {
    client: Client<ChaCha20Rng>,
    uploads: Vec<Option<BlobId>>,
    predictions: Vec<Option<TaskId>>,
    seen: BTreeSet<BlobId>,
}

struct Job {
    worker: Worker,
    actor: String,
    assignment: u64,
    task: TaskAssignment,
    next: Step,
    rng: ChaCha20Rng,
}

enum Slot {
    Idle { starved: bool },
    Busy(Box<Job>),
}

struct Sim {
    config: SimConfig,
    fabric: Fabric,
    /// Seeds clients and workers.
    seeds: ChaCha20Rng,
    /// Picks which slot moves next.
    scheduler: ChaCha20Rng,
    clients: BTreeMap<String, ClientState>,
    slots: Vec<Slot>,
    spawned: u64,
    assignments: u64,
    workers: Vec<WorkerRecord>,
    taint: TaintMap,
    keys: BTreeMap<BlobId, SymmetricKey>,
}

fn client_actor(name: &str) -> String {
    format!("client:{name}")
}

/// Runs every action in order, letting workers drain the queue after each
/// when `auto_workers` is set. Action failures are recorded, not fatal.
pub fn run_scenario(config: &SimConfig) -> Result<SimOutcome, SimError> {
    config.validate()?;
    let mut seeds = ChaCha20Rng::seed_from_u64(config.seed);
    let clock = LogicalClock::new(0);
    let orch_config = OrchestratorConfig {
        top_k: config.top_k,
        fee_rate: config.fee_rate,
        auto_contributivity: config.auto_contributivity,
        ..OrchestratorConfig::default()
    };
    let net = LocalNetwork::new(seeds.next_u64(), config.custodian_count, orch_config, Arc::new(clock.clone()));
    let scheduler = ChaCha20Rng::seed_from_u64(seeds.next_u64());
    let mut sim = Sim {
        config: config.clone(),
        fabric: Fabric::new(net, clock, config.faults.clone()),
        seeds,
        scheduler,
        clients: BTreeMap::new(),
        slots: (0..config.worker_count).map(|_| Slot::Idle { starved: false }).collect(),
        spawned: 0,
        assignments: 0,
        workers: Vec::new(),
        taint: TaintMap::default(),
        keys: BTreeMap::new(),
    };
    let mut actions = Vec::new();
    for (index, action) in config.scenario.iter().enumerate() {
        let outcome = sim.act(index, action)?;
        sim.fabric.note(|seq, tick| TraceEvent::Action {
            seq,
            tick,
            index,
            name: outcome.name.clone(),
            actor: outcome.actor.clone(),
            outcome: match &outcome.result {
                Ok(s) => format!("ok: {s}"),
                Err(e) => format!("error: {e}"),
            },
        });
        actions.push(outcome);
        sim.absorb_client_taint();
        if config.auto_workers || matches!(action, Action::RunWorkers) {
            sim.drain()?;
        }
    }
    sim.finish(actions)
}

impl Sim {
    fn set_actor(&mut self, actor: &str) {
        self.fabric.ctx = Context {
            actor: actor.to_string(),
            ..Context::default()
        };
    }

    fn client(&mut self, name: &str) -> &mut ClientState {
        if !self.clients.contains_key(name) {
            let mut rng = ChaCha20Rng::seed_from_u64(self.seeds.next_u64());
            let vault = KeyVault::generate(&mut rng);
            self.clients.insert(
                name.to_string(),
                ClientState {
                    client: Client::new(vault, rng),
                    uploads: Vec::new(),
                    predictions: Vec::new(),
                    seen: BTreeSet::new(),
                },
            );
        }
        self.clients.get_mut(name).expect("inserted")
    }

    fn admin<T: Serialize>(
        &mut self,
        op: &str,
        request: serde_json::Value,
        f: impl FnOnce(&mut LocalNetwork) -> Result<T, OrchestratorError>,
    ) -> Result<T, ServiceError> {
        self.set_actor("admin");
        self.fabric
            .call(ORCHESTRATOR, op, request, |net| f(net).map_err(ServiceError::from))
    }

    fn act(&mut self, index: usize, action: &Action) -> Result<ActionOutcome, SimError> {
        let name = action.name().to_string();
        let (actor, result): (String, Result<String, String>) = match action {
            Action::DefineChallenge {
                challenge_id,
                description,
                label_set,
            } => {
                let r = self.admin(
                    "define_challenge",
                    json!({ "challenge_id": challenge_id, "description": description, "label_set": label_set }),
                    |n| {
                        n.orchestrator
                            .define_challenge(challenge_id.clone(), description.clone(), label_set.clone())
                    },
                );
                ("admin".into(), r.map(|_| challenge_id.to_string()).map_err(|e| e.to_string()))
            }
            Action::Fund { client, amount } => {
                let account = self.client(client).client.account();
                let r = self.admin(
                    "fund_account",
                    json!({ "account": account, "amount": amount }),
                    |n| n.orchestrator.fund_account(account.clone(), *amount),
                );
                ("admin".into(), r.map(|_| format!("{amount} credits")).map_err(|e| e.to_string()))
            }
            Action::StartContributivity { challenge_id } => {
                let r = self.admin(
                    "start_contributivity_round",
                    json!({ "challenge_id": challenge_id }),
                    |n| n.orchestrator.start_contributivity_round(challenge_id),
                );
                ("admin".into(), r.map(|t| format!("{} shadow tasks", t.len())).map_err(|e| e.to_string()))
            }
            Action::RunWorkers => ("scheduler".into(), Ok(String::new())),
            Action::Upload {
                client,
                challenge_id,
                csv,
                kind,
            } => {
                let actor = client_actor(client);
                self.client(client);
                self.set_actor(&actor);
                let st = self.clients.get_mut(client).expect("client");
                let r = st
                    .client
                    .upload_data(&mut self.fabric, csv.as_bytes(), challenge_id, *kind);
                st.uploads.push(r.as_ref().ok().copied());
                (actor, r.map(|id| id.to_hex()).map_err(|e| e.to_string()))
            }
            Action::SubmitAlgorithm {
                client,
                challenge_id,
                spec,
            } => {
                let actor = client_actor(client);
                self.client(client);
                self.set_actor(&actor);
                let bytes = serde_json::to_vec(spec).expect("json value");
                let st = self.clients.get_mut(client).expect("client");
                let r = st.client.submit_algorithm(&mut self.fabric, &bytes, challenge_id);
                (actor, r.map(|id| id.to_hex()).map_err(|e| e.to_string()))
            }
            Action::RequestPrediction {
                client,
                challenge_id,
                csv,
                payment,
            } => {
                let actor = client_actor(client);
                self.client(client);
                self.set_actor(&actor);
                let st = self.clients.get_mut(client).expect("client");
                let r = st
                    .client
                    .request_prediction(&mut self.fabric, csv.as_bytes(), challenge_id, *payment);
                st.predictions.push(r.as_ref().ok().map(|v| v.task_id.clone()));
                (actor, r.map(|v| v.task_id.to_string()).map_err(|e| e.to_string()))
            }
            Action::FetchPrediction { client, request } => {
                let actor = client_actor(client);
                self.client(client);
                self.set_actor(&actor);
                let st = self.clients.get_mut(client).expect("client");
                let task = st
                    .predictions
                    .get(*request)
                    .ok_or_else(|| SimError::Scenario(format!("action {index}: {client} has no prediction {request}")))?
                    .clone();
                let r = match task {
                    None => Err("the prediction request failed".to_string()),
                    Some(t) => st
                        .client
                        .fetch_prediction(&mut self.fabric, &t)
                        .map(|labels| labels.join(","))
                        .map_err(|e| e.to_string()),
                };
                (actor, r)
            }
            Action::Correct {
                client,
                source,
                row_index,
                label,
            } => {
                let actor = client_actor(client);
                self.client(client);
                self.set_actor(&actor);
                let st = self.clients.get_mut(client).expect("client");
                let missing = || SimError::Scenario(format!("action {index}: {client} has no {source:?}"));
                let src = match source {
                    CorrectionSource::Upload(i) => st.uploads.get(*i).ok_or_else(missing)?.ok_or("the upload failed"),
                    CorrectionSource::Prediction(i) => {
                        match st.predictions.get(*i).ok_or_else(missing)? {
                            Some(t) => st
                                .client
                                .vault()
                                .predictions()
                                .get(t)
                                .map(|p| p.input_record_id)
                                .ok_or("unknown prediction"),
                            None => Err("the prediction request failed"),
                        }
                    }
                };
                let r = match src {
                    Err(e) => Err(e.to_string()),
                    Ok(source_record_id) => {
                        let correction = AnnotationCorrection {
                            source_record_id,
                            row_index: *row_index,
                            corrected_label: label.clone(),
                            annotator: st.client.account(),
                        };
                        st.client
                            .submit_correction(&mut self.fabric, &correction)
                            .map(|id| id.to_hex())
                            .map_err(|e| e.to_string())
                    }
                };
                (actor, r)
            }
            Action::Audit { client } => {
                let actor = client_actor(client);
                self.client(client);
                self.set_actor(&actor);
                let st = self.clients.get_mut(client).expect("client");
                let r = st.client.audit(&mut self.fabric).map(|rep| {
                    format!(
                        "{} blocks {:?}, {} learning and {} prediction tuples",
                        rep.blocks,
                        rep.verdict,
                        rep.learning.len(),
                        rep.predictions.len()
                    )
                });
                (actor, r.map_err(|e| e.to_string()))
            }
        };
        Ok(ActionOutcome {
            index,
            name,
            actor,
            result,
        })
    }

    /// Client keys and plaintexts become taint sources. The simulator reads
    /// them straight from vaults and storage, outside the message fabric.
    fn absorb_client_taint(&mut self) {
        for st in self.clients.values_mut() {
            for (id, rec) in st.client.vault().records() {
                if !st.seen.insert(*id) {
                    continue;
                }
                let key = rec.key();
                self.taint.add(key.as_bytes());
                if let Ok(stored) = self.fabric.net.storage.get_blob(id) {
                    if let Ok(plain) = decrypt_blob(&key, &stored.sealed) {
                        self.taint.add(&plain);
                    }
                }
                self.keys.insert(*id, key);
            }
        }
    }

    fn note_worker(&mut self, actor: &str, phase: Phase, task: &TaskId, note: Option<String>) {
        let (actor, task) = (actor.to_string(), Some(task.to_string()));
        self.fabric.note(|seq, tick| TraceEvent::Worker {
            seq,
            tick,
            actor,
            phase,
            task,
            note,
        });
    }

    fn killed_at(&self, assignment: u64, step: Step) -> bool {
        self.config
            .faults
            .iter()
            .any(|f| matches!(f, Fault::KillWorker { assignment: a, step: s } if *a == assignment && *s == step))
    }

    fn drain(&mut self) -> Result<(), SimError> {
        for slot in &mut self.slots {
            if let Slot::Idle { starved } = slot {
                *starved = false;
            }
        }
        for _ in 0..MAX_SCHEDULER_STEPS {
            let ready: Vec<usize> = self
                .slots
                .iter()
                .enumerate()
                .filter(|(_, s)| !matches!(s, Slot::Idle { starved: true }))
                .map(|(i, _)| i)
                .collect();
            if ready.is_empty() {
                return Ok(());
            }
            let pick = ready[self.scheduler.gen_range(0..ready.len())];
            match std::mem::replace(&mut self.slots[pick], Slot::Idle { starved: false }) {
                Slot::Idle { .. } => {
                    if let Some(job) = self.poll() {
                        self.slots[pick] = Slot::Busy(Box::new(job));
                    } else {
                        self.slots[pick] = Slot::Idle { starved: true };
                    }
                }
                Slot::Busy(job) => {
                    if let Some(job) = self.advance(*job) {
                        self.slots[pick] = Slot::Busy(Box::new(job));
                    }
                    // Progress may have queued new work.
                    for slot in &mut self.slots {
                        if let Slot::Idle { starved } = slot {
                            *starved = false;
                        }
                    }
                }
            }
        }
        Err(SimError::Scenario("workers did not quiesce".into()))
    }

    fn poll(&mut self) -> Option<Job> {
        self.spawned += 1;
        let actor = format!("worker-{}", self.spawned);
        let mut rng = ChaCha20Rng::seed_from_u64(self.seeds.next_u64());
        let worker = Worker::spawn(&mut rng);
        self.fabric.ctx = Context {
            actor: actor.clone(),
            phase: Some(Phase::Created),
            ..Context::default()
        };
        let task = self.fabric.next_task(&worker.public_key()).ok()?;
        self.assignments += 1;
        self.note_worker(&actor, Phase::Created, &task.task_id, Some(format!("assignment {}", self.assignments)));
        Some(Job {
            worker,
            actor,
            assignment: self.assignments,
            task,
            next: Step::Fetch,
            rng,
        })
    }

    fn retire(&mut self, job: Job, end: String) {
        let retained_bytes = job.worker.scratch_len();
        if retained_bytes > 0 {
            let hits = job.worker.scratch_fingerprints().into_iter().map(hex::encode).collect();
            self.taint.retain(&job.actor, hits);
        }
        self.note_worker(&job.actor, job.worker.phase(), &job.task.task_id, Some(end.clone()));
        self.workers.push(WorkerRecord {
            actor: job.actor,
            assignment: job.assignment,
            task_id: job.task.task_id,
            end,
            retained_bytes,
        });
    }

    fn absorb_scratch(&mut self, worker: &Worker) {
        for p in worker.scratch_plaintexts() {
            self.taint.add(p);
        }
    }

    /// One workflow step. Returns the job if it has more to do.
    fn advance(&mut self, mut job: Job) -> Option<Job> {
        self.fabric.ctx = Context {
            actor: job.actor.clone(),
            phase: Some(job.worker.phase()),
            assignment: Some(job.assignment),
            step: Some(job.next),
        };
        if self.killed_at(job.assignment, job.next) {
            job.worker.destroy();
            let (task_id, pubkey) = (job.task.task_id.clone(), job.worker.public_key());
            let end = format!("killed before {:?}", job.next);
            self.retire(job, end);
            self.set_actor("supervisor");
            let _ = self.fabric.requeue_task(&task_id, &pubkey);
            return None;
        }
        match job.next {
            Step::Fetch => match job.worker.provision(job.task.clone(), &mut self.fabric) {
                Ok(()) => {
                    self.absorb_scratch(&job.worker);
                    self.note_worker(&job.actor, Phase::Provisioned, &job.task.task_id, None);
                    job.next = Step::Run;
                    Some(job)
                }
                Err(e) => {
                    let _ = job.worker.abandon(&mut self.fabric);
                    self.retire(job, format!("provision failed: {e}"));
                    None
                }
            },
            Step::Run => {
                self.fabric.ctx.phase = Some(Phase::IsolatedRunning);
                let r = job.worker.run();
                self.absorb_scratch(&job.worker);
                match r {
                    Ok(()) => {
                        self.note_worker(&job.actor, Phase::Reporting, &job.task.task_id, None);
                        job.next = Step::Report;
                        Some(job)
                    }
                    Err(e) => {
                        self.fabric.ctx.phase = Some(job.worker.phase());
                        let _ = job.worker.abandon(&mut self.fabric);
                        self.retire(job, format!("run failed: {e}"));
                        None
                    }
                }
            }
            Step::Report => {
                self.fabric.ctx.phase = Some(Phase::Reporting);
                if self.config.worker_behavior == WorkerBehavior::LeakyReport {
                    if let Some(plain) = job.worker.scratch_plaintexts().next() {
                        let fake = SealedBlob {
                            nonce: [0; NONCE_LEN],
                            ciphertext: plain.to_vec(),
                            tag: [0; TAG_LEN],
                        };
                        let _ = self.fabric.put_blob(&fake, BlobKind::Model);
                    }
                }
                let r = job.worker.report_and_destroy(&mut self.fabric, &mut job.rng);
                match r {
                    Ok(_) => {
                        self.retire(job, "reported".into());
                    }
                    Err(e) => {
                        let _ = job.worker.abandon(&mut self.fabric);
                        self.retire(job, format!("report failed: {e}"));
                    }
                }
                None
            }
        }
    }

    fn finish(mut self, actions: Vec<ActionOutcome>) -> Result<SimOutcome, SimError> {
        self.absorb_client_taint();
        let mut trace = std::mem::take(&mut self.fabric.trace);
        self.taint.scan_trace(&mut trace);
        self.taint.scan_state(&self.fabric.net);
        let key_leaks = key_confidentiality(&self.fabric.net, &self.keys);
        let replay_ok = self.fabric.net.orchestrator.replay_matches();
        Ok(SimOutcome {
            trace,
            taint: self.taint,
            network: self.fabric.net,
            actions,
            workers: self.workers,
            clients: self.clients.into_iter().map(|(k, v)| (k, v.client)).collect(),
            replay_ok,
            key_leaks,
        })
    }
}
