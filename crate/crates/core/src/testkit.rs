//! Fixtures shared by unit tests, integration tests and the acceptance suite.

use rand::Rng;

use crate::ledger::{Event, Ledger, PredictionRequest, RecordKind, SplitEntry, TaskKind};
use crate::types::{AccountId, BlobId, ChallengeId, PubKey, TaskId};

pub fn blob(n: u64) -> BlobId {
    let mut b = [0u8; 32];
    b[24..].copy_from_slice(&n.to_be_bytes());
    BlobId(b)
}

pub fn worker_key(n: u64) -> PubKey {
    let mut b = [0x77u8; 32];
    b[24..].copy_from_slice(&n.to_be_bytes());
    PubKey(b)
}

/// Generates `len` events that satisfy every referential invariant, mixing
/// registrations, learn/predict tasks, assignments, requeues, results and
/// payments.
pub fn random_events<R: Rng>(rng: &mut R, len: usize) -> Vec<Event> {
    let challenge = ChallengeId::from("c0");
    let mut events = Vec::with_capacity(len);
    if len == 0 {
        return events;
    }
    events.push(Event::ChallengeDefined {
        challenge_id: challenge.clone(),
        description: "fixture".into(),
        label_set: vec!["A".into(), "B".into()],
    });

    let mut next_blob = 1u64;
    let mut raw: Vec<BlobId> = Vec::new();
    let mut algos: Vec<BlobId> = Vec::new();
    let mut models: Vec<BlobId> = Vec::new();
    let mut queued: Vec<(TaskId, TaskKind)> = Vec::new();
    let mut assigned: Vec<(TaskId, TaskKind, PubKey)> = Vec::new();
    let mut task_no = 0u64;

    while events.len() < len {
        let owner = AccountId(format!("acct-{}", rng.gen_range(0..4)));
        let choice = rng.gen_range(0..9);
        let ev = match choice {
            0 | 1 => {
                let id = blob(next_blob);
                next_blob += 1;
                let kind = if algos.is_empty() || rng.gen_bool(0.6) {
                    raw.push(id);
                    RecordKind::RawData
                } else {
                    RecordKind::Validation
                };
                Event::DataRegistered {
                    record_id: id,
                    owner_id: owner,
                    kind,
                    challenge_id: challenge.clone(),
                }
            }
            2 => {
                let id = blob(next_blob);
                next_blob += 1;
                algos.push(id);
                Event::DataRegistered {
                    record_id: id,
                    owner_id: owner,
                    kind: RecordKind::Algorithm,
                    challenge_id: challenge.clone(),
                }
            }
            3 if !algos.is_empty() => {
                task_no += 1;
                let task_id = TaskId(format!("task-{task_no:06}"));
                let take = rng.gen_range(0..=raw.len().min(3));
                let data_ids = raw.iter().rev().take(take).copied().collect();
                queued.push((task_id.clone(), TaskKind::Learn));
                Event::TaskCreated {
                    task_id,
                    kind: TaskKind::Learn,
                    data_ids,
                    algorithm_or_model_id: algos[rng.gen_range(0..algos.len())],
                    challenge_id: challenge.clone(),
                    shadow: None,
                    request: None,
                }
            }
            4 if !models.is_empty() => {
                task_no += 1;
                let task_id = TaskId(format!("task-{task_no:06}"));
                let input = blob(next_blob);
                next_blob += 1;
                queued.push((task_id.clone(), TaskKind::Predict));
                Event::TaskCreated {
                    task_id,
                    kind: TaskKind::Predict,
                    data_ids: vec![input],
                    algorithm_or_model_id: models[rng.gen_range(0..models.len())],
                    challenge_id: challenge.clone(),
                    shadow: None,
                    request: Some(PredictionRequest {
                        requester: owner,
                        requester_key: worker_key(999),
                        payment: rng.gen_range(1..50),
                    }),
                }
            }
            5 if !queued.is_empty() => {
                let (task_id, kind) = queued.remove(rng.gen_range(0..queued.len()));
                let key = worker_key(rng.gen_range(0..1000));
                assigned.push((task_id.clone(), kind, key));
                Event::WorkerAssigned {
                    task_id,
                    worker_pubkey: key,
                }
            }
            6 if !assigned.is_empty() => {
                let (task_id, kind, key) = assigned.remove(rng.gen_range(0..assigned.len()));
                queued.push((task_id.clone(), kind));
                Event::TaskRequeued {
                    task_id,
                    worker_pubkey: key,
                }
            }
            7 if !assigned.is_empty() => {
                let i = rng.gen_range(0..assigned.len());
                let (task_id, kind, _) = assigned[i].clone();
                match kind {
                    TaskKind::Learn => {
                        // model registration precedes its performance record
                        let id = blob(next_blob);
                        next_blob += 1;
                        models.push(id);
                        events.push(Event::DataRegistered {
                            record_id: id,
                            owner_id: AccountId::from("platform"),
                            kind: RecordKind::Model,
                            challenge_id: challenge.clone(),
                        });
                        if events.len() >= len {
                            models.pop();
                            break;
                        }
                        assigned.remove(i);
                        Event::PerformanceRecorded {
                            task_id,
                            model_id: Some(id),
                            performance: rng.gen_range(0..=1000) as f64 / 1000.0,
                        }
                    }
                    TaskKind::Predict => {
                        assigned.remove(i);
                        let out = blob(next_blob);
                        next_blob += 1;
                        Event::PredictionRecorded {
                            task_id,
                            model_id: models[0],
                            sealed_output_id: out,
                        }
                    }
                }
            }
            8 => Event::AccountFunded {
                account_id: owner,
                amount: rng.gen_range(1..1000),
            },
            _ => Event::PaymentRecorded {
                payer: owner.clone(),
                splits: vec![SplitEntry {
                    account_id: owner,
                    amount: rng.gen_range(0..10),
                }],
            },
        };
        events.push(ev);
    }
    events.truncate(len);
    fix_prediction_models(&mut events);
    events
}

// PredictionRecorded must name the task's own model; patch after the fact.
fn fix_prediction_models(events: &mut [Event]) {
    use std::collections::BTreeMap;
    let mut task_model: BTreeMap<TaskId, BlobId> = BTreeMap::new();
    for ev in events.iter_mut() {
        match ev {
            Event::TaskCreated {
                task_id,
                algorithm_or_model_id,
                kind: TaskKind::Predict,
                ..
            } => {
                task_model.insert(task_id.clone(), *algorithm_or_model_id);
            }
            Event::PredictionRecorded { task_id, model_id, .. } => {
                *model_id = task_model[task_id];
            }
            _ => {}
        }
    }
}

pub fn build_ledger(signer: crate::cryptobox::Identity, events: Vec<Event>) -> Ledger {
    let mut ledger = Ledger::new(signer);
    for (t, ev) in events.into_iter().enumerate() {
        ledger
            .append_event(ev, 1_000 + t as u64)
            .expect("fixture events are referentially valid");
    }
    ledger
}

/// Simulator scenarios shared by tests, the acceptance suite and examples.
pub mod scenarios {
    use serde_json::json;

    use crate::ledger::RecordKind;
    use crate::simnet::{Action, SimConfig};

    pub const CHALLENGE: &str = "toy";

    /// Four labeled rows around two class centres, shifted by `i`.
    pub fn provider_csv(i: usize) -> String {
        let d = i as f64 * 0.1;
        format!(
            "x,y,label\n{},{},A\n{},{},A\n{},{},B\n{},{},B\n",
            0.0 + d,
            0.0,
            0.0,
            1.0 + d,
            3.0 - d,
            3.0,
            3.0,
            2.0 - d
        )
    }

    pub const VALIDATION_CSV: &str = "x,y,label\n0.2,0.3,A\n2.8,2.7,B\n0.5,0.1,A\n2.5,2.9,B\n";

    pub fn define() -> Action {
        Action::DefineChallenge {
            challenge_id: CHALLENGE.into(),
            description: "two clusters".into(),
            label_set: vec!["A".into(), "B".into()],
        }
    }

    pub fn upload(client: &str, csv: &str) -> Action {
        Action::Upload {
            client: client.into(),
            challenge_id: CHALLENGE.into(),
            csv: csv.into(),
            kind: RecordKind::RawData,
        }
    }

    pub fn validation(client: &str) -> Action {
        Action::Upload {
            client: client.into(),
            challenge_id: CHALLENGE.into(),
            csv: VALIDATION_CSV.into(),
            kind: RecordKind::Validation,
        }
    }

    pub fn algorithm(client: &str, spec: serde_json::Value) -> Action {
        Action::SubmitAlgorithm {
            client: client.into(),
            challenge_id: CHALLENGE.into(),
            spec,
        }
    }

    /// Validation set, `providers` data providers with one 4-row CSV each,
    /// then a centroid and a logistic-regression algorithm.
    pub fn workflow(seed: u64, providers: usize) -> SimConfig {
        let mut scenario = vec![define(), validation("host")];
        for i in 0..providers {
            scenario.push(upload(&format!("provider-{i}"), &provider_csv(i)));
        }
        scenario.push(algorithm("alice", json!({"name": "centroid"})));
        scenario.push(algorithm(
            "bob",
            json!({"name": "logreg", "hyperparameters": {"learning_rate": 0.5, "epochs": 30}}),
        ));
        SimConfig::new(seed, 3, 2, scenario)
    }

    /// `workflow` followed by a paid prediction and its retrieval.
    pub fn workflow_with_prediction(seed: u64, providers: usize) -> SimConfig {
        let mut config = workflow(seed, providers);
        config.scenario.extend([
            Action::Fund {
                client: "carol".into(),
                amount: 100,
            },
            Action::RequestPrediction {
                client: "carol".into(),
                challenge_id: CHALLENGE.into(),
                csv: "x,y\n0.1,0.2\n2.9,3.1\n".into(),
                payment: 10,
            },
            Action::FetchPrediction {
                client: "carol".into(),
                request: 0,
            },
            Action::Audit {
                client: "provider-0".into(),
            },
        ]);
        config
    }
}
