//! Every call from an actor to a service goes through here as a request
//! message and a response message on the trace. Faults are applied at
//! delivery time; an undelivered request surfaces to the caller as
//! `ServiceError::Unavailable`.

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{Fault, Step, Window};
use super::trace::{Delivery, Trace, TraceEvent};
use crate::clock::{Clock, LogicalClock};
use crate::compute::Phase;
use crate::cryptobox::{Challenge, KeyShare, ReleaseRequest, SealedBlob};
use crate::ledger::Block;
use crate::local::LocalNetwork;
use crate::orchestrator::{BenchmarkRow, ChallengeSpec};
use crate::service::{
    CustodyApi, OrchestratorApi, PredictionOrder, RegisterRequest, ServiceError, StorageApi, TaskAssignment,
    TaskResult, TaskView,
};
use crate::storage::{BlobKind, StoredBlob};
use crate::types::{AccountId, BlobId, ChallengeId, Credits, NodeId, PubKey, TaskId};
use crate::valuation::ContributivityVector;

pub const STORAGE: &str = "storage";
pub const ORCHESTRATOR: &str = "orchestrator";

/// Who is talking, and for workers, where they are in their task.
#[derive(Debug, Clone, Default)]
pub(crate) struct Context {
    pub actor: String,
    pub phase: Option<Phase>,
    pub assignment: Option<u64>,
    pub step: Option<Step>,
}

pub struct Fabric {
    pub(crate) net: LocalNetwork,
    pub(crate) trace: Trace,
    pub(crate) clock: LogicalClock,
    pub(crate) faults: Vec<Fault>,
    pub(crate) ctx: Context,
}

impl std::fmt::Debug for Fabric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fabric")
            .field("net", &self.net)
            .field("events", &self.trace.events.len())
            .finish_non_exhaustive()
    }
}

fn window_active(window: &Window, ctx: &Context, tick: u64) -> bool {
    match window {
        Window::Ticks { from, until } => *from <= tick && tick < *until,
        Window::Step { assignment, step } => ctx.assignment == Some(*assignment) && ctx.step == Some(*step),
    }
}

impl Fabric {
    pub(crate) fn new(net: LocalNetwork, clock: LogicalClock, faults: Vec<Fault>) -> Self {
        Fabric {
            net,
            trace: Trace::default(),
            clock,
            faults,
            ctx: Context::default(),
        }
    }

    pub fn network(&self) -> &LocalNetwork {
        &self.net
    }

    fn delivery(&self, to: &str, tick: u64) -> Delivery {
        for f in &self.faults {
            match f {
                Fault::Offline { actor, window } if actor == to && window_active(window, &self.ctx, tick) => {
                    return Delivery::Offline
                }
                Fault::Drop { to: t, window } if t == to && window_active(window, &self.ctx, tick) => {
                    return Delivery::Dropped
                }
                _ => {}
            }
        }
        Delivery::Delivered
    }

    fn record(&mut self, from: String, to: String, op: &str, phase: Option<Phase>, payload: Vec<u8>, delivery: Delivery) {
        let seq = self.trace.next_seq();
        let tick = self.clock.tick();
        self.trace.push(TraceEvent::Message {
            seq,
            tick,
            from,
            to,
            op: op.to_string(),
            phase,
            bytes: payload.len(),
            digest: hex::encode(Sha256::digest(&payload)),
            delivery,
            taint: Vec::new(),
        });
        self.trace.payloads.insert(seq, payload);
    }

    pub(crate) fn note(&mut self, event: impl FnOnce(u64, u64) -> TraceEvent) {
        let seq = self.trace.next_seq();
        let tick = self.clock.tick();
        self.trace.push(event(seq, tick));
    }

    /// Request, fault check, service call, response.
    pub(crate) fn call<T: Serialize>(
        &mut self,
        to: &str,
        op: &str,
        request: serde_json::Value,
        f: impl FnOnce(&mut LocalNetwork) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let from = self.ctx.actor.clone();
        let phase = self.ctx.phase;
        // Checked against the tick the request will be stamped with.
        let delivery = self.delivery(to, self.clock.now_ms() + 1);
        let payload = serde_json::to_vec(&request).expect("request serializes");
        self.record(from.clone(), to.to_string(), op, phase, payload, delivery);
        match delivery {
            Delivery::Delivered => {}
            Delivery::Offline => return Err(ServiceError::Unavailable(format!("{to} is offline"))),
            Delivery::Dropped => return Err(ServiceError::Unavailable(format!("request to {to} timed out"))),
        }
        let result = f(&mut self.net);
        let body = match &result {
            Ok(v) => serde_json::to_vec(&json!({ "ok": v })),
            Err(e) => serde_json::to_vec(&json!({ "err": e })),
        }
        .expect("response serializes");
        self.record(to.to_string(), from, op, None, body, Delivery::Delivered);
        result
    }
}

impl StorageApi for Fabric {
    fn put_blob(&mut self, sealed: &SealedBlob, kind: BlobKind) -> Result<BlobId, ServiceError> {
        self.call(STORAGE, "put_blob", json!({ "sealed": sealed, "kind": kind }), |n| n.put_blob(sealed, kind))
    }

    fn get_blob(&mut self, id: &BlobId) -> Result<StoredBlob, ServiceError> {
        self.call(STORAGE, "get_blob", json!({ "id": id }), |n| n.get_blob(id))
    }

    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError> {
        self.call(STORAGE, "has_blob", json!({ "id": id }), |n| n.has_blob(id))
    }
}

impl CustodyApi for Fabric {
    fn custodians(&self) -> Vec<NodeId> {
        self.net.custodians()
    }

    fn deposit_share(&mut self, node: &NodeId, record_id: &BlobId, share: &KeyShare) -> Result<(), ServiceError> {
        self.call(
            node.as_str(),
            "deposit_share",
            json!({ "record_id": record_id, "share": share }),
            |n| n.deposit_share(node, record_id, share),
        )
    }

    fn issue_challenge(&mut self, node: &NodeId, task_id: &TaskId, record_id: &BlobId) -> Result<Challenge, ServiceError> {
        self.call(
            node.as_str(),
            "issue_challenge",
            json!({ "task_id": task_id, "record_id": record_id }),
            |n| n.issue_challenge(node, task_id, record_id),
        )
    }

    fn release_share(&mut self, node: &NodeId, request: &ReleaseRequest) -> Result<KeyShare, ServiceError> {
        self.call(node.as_str(), "release_share", json!(request), |n| n.release_share(node, request))
    }
}

impl OrchestratorApi for Fabric {
    fn orchestrator_pubkey(&mut self) -> Result<PubKey, ServiceError> {
        self.call(ORCHESTRATOR, "orchestrator_pubkey", json!({}), |n| n.orchestrator_pubkey())
    }

    fn challenge(&mut self, id: &ChallengeId) -> Result<ChallengeSpec, ServiceError> {
        self.call(ORCHESTRATOR, "challenge", json!({ "id": id }), |n| n.challenge(id))
    }

    fn register_data(&mut self, request: &RegisterRequest) -> Result<Vec<TaskView>, ServiceError> {
        self.call(ORCHESTRATOR, "register_data", json!(request), |n| n.register_data(request))
    }

    fn request_prediction(&mut self, order: &PredictionOrder) -> Result<TaskView, ServiceError> {
        self.call(ORCHESTRATOR, "request_prediction", json!(order), |n| n.request_prediction(order))
    }

    fn next_task(&mut self, worker: &PubKey) -> Result<TaskAssignment, ServiceError> {
        self.call(ORCHESTRATOR, "next_task", json!({ "worker": worker }), |n| n.next_task(worker))
    }

    fn record_result(&mut self, task_id: &TaskId, worker: &PubKey, result: &TaskResult) -> Result<(), ServiceError> {
        self.call(
            ORCHESTRATOR,
            "record_result",
            json!({ "task_id": task_id, "worker": worker, "result": result }),
            |n| n.record_result(task_id, worker, result),
        )
    }

    fn requeue_task(&mut self, task_id: &TaskId, worker: &PubKey) -> Result<(), ServiceError> {
        self.call(
            ORCHESTRATOR,
            "requeue_task",
            json!({ "task_id": task_id, "worker": worker }),
            |n| n.requeue_task(task_id, worker),
        )
    }

    fn authorize_key_release(&mut self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> Result<bool, ServiceError> {
        self.call(
            ORCHESTRATOR,
            "authorize_key_release",
            json!({ "task_id": task_id, "worker": worker, "record_id": record_id }),
            |n| n.authorize_key_release(task_id, worker, record_id),
        )
    }

    fn benchmark(&mut self, challenge_id: &ChallengeId) -> Result<Vec<BenchmarkRow>, ServiceError> {
        self.call(ORCHESTRATOR, "benchmark", json!({ "challenge_id": challenge_id }), |n| n.benchmark(challenge_id))
    }

    fn contributivity(&mut self, challenge_id: &ChallengeId) -> Result<Option<ContributivityVector>, ServiceError> {
        self.call(
            ORCHESTRATOR,
            "contributivity",
            json!({ "challenge_id": challenge_id }),
            |n| n.contributivity(challenge_id),
        )
    }

    fn balance(&mut self, account: &AccountId) -> Result<Credits, ServiceError> {
        self.call(ORCHESTRATOR, "balance", json!({ "account": account }), |n| n.balance(account))
    }

    fn chain(&mut self) -> Result<Vec<Block>, ServiceError> {
        self.call(ORCHESTRATOR, "chain", json!({}), |n| n.chain())
    }
}
