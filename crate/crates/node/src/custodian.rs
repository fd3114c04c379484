//! Custodian daemon. Holds one share per record and releases it only after
//! checking the worker's answer against its own verified replica of the
//! orchestrator's chain, caught up just before each release.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::{get, post, put};
use axum::Router;
use serde_json::{json, Value};

use crate::remote::{ChallengeRequest, NodeInfo, RemoteOrchestrator};
use crate::extract::api::{Json, Path};
use crate::{locked, ApiError};
use morpheo_core::clock::Clock;
use morpheo_core::cryptobox::{Challenge, CustodianNode, KeyShare, ReleaseRequest};
use morpheo_core::ledger::Ledger;
use morpheo_core::service::{OrchestratorApi, ServiceError};
use morpheo_core::types::{BlobId, NodeId, PubKey};

pub struct Custodian {
    node: CustodianNode,
    replica: Option<Ledger>,
    orchestrator_key: Option<PubKey>,
    orchestrator: RemoteOrchestrator,
    shares_path: Option<PathBuf>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Custodian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Custodian")
            .field("node", &self.node.node_id())
            .field("replica_blocks", &self.replica.as_ref().map_or(0, Ledger::len))
            .finish_non_exhaustive()
    }
}

fn io_err(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Unavailable(format!("share file: {e}"))
}

impl Custodian {
    /// `orchestrator_key` pins the chain signer; when absent it is fetched
    /// from the orchestrator on first use. Shares in `shares_path` are
    /// reloaded.
    pub fn new(
        node_id: NodeId,
        rng_seed: [u8; 32],
        orchestrator_url: &str,
        orchestrator_key: Option<PubKey>,
        shares_path: Option<PathBuf>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ServiceError> {
        let mut node = CustodianNode::new(node_id, rng_seed);
        if let Some(path) = &shares_path {
            match std::fs::read(path) {
                Ok(bytes) => {
                    let held: BTreeMap<BlobId, KeyShare> = serde_json::from_slice(&bytes).map_err(io_err)?;
                    for (record, share) in held {
                        node.deposit_share(record, share)?;
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(e)),
            }
        }
        Ok(Custodian {
            node,
            replica: None,
            orchestrator_key,
            orchestrator: RemoteOrchestrator::new(orchestrator_url),
            shares_path,
            clock,
        })
    }

    pub fn node(&self) -> &CustodianNode {
        &self.node
    }

    fn persist(&self) -> Result<(), ServiceError> {
        let Some(path) = &self.shares_path else { return Ok(()) };
        let held: BTreeMap<&BlobId, &KeyShare> = self.node.held_shares().collect();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&held).expect("shares serialize")).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    }

    /// Pulls and verifies blocks appended since the last sync.
    pub fn sync(&mut self) -> Result<(), ServiceError> {
        if self.replica.is_none() {
            let key = match self.orchestrator_key {
                Some(k) => k,
                None => self.orchestrator.orchestrator_pubkey()?,
            };
            self.replica = Some(Ledger::from_blocks(Vec::new(), key, None).expect("empty chain is valid"));
        }
        let replica = self.replica.as_mut().expect("just set");
        let fresh = self.orchestrator.chain_since(replica.len())?;
        replica
            .extend_verified(&fresh)
            .map_err(|e| ServiceError::Unavailable(format!("orchestrator chain rejected: {e}")))
    }

    pub fn deposit(&mut self, record: BlobId, share: KeyShare) -> Result<(), ServiceError> {
        self.node.deposit_share(record, share)?;
        self.persist()
    }

    pub fn challenge(&mut self, req: ChallengeRequest) -> Challenge {
        let now = self.clock.now_ms();
        self.node.issue_challenge(req.task_id, req.record_id, now)
    }

    /// A failed sync falls back to the replica as it stands; a stale
    /// replica can only refuse, never wrongly release.
    pub fn release(&mut self, req: &ReleaseRequest) -> Result<KeyShare, ServiceError> {
        if let Err(e) = self.sync() {
            tracing::warn!("chain sync failed: {e}");
        }
        let empty;
        let index = match &self.replica {
            Some(l) => l.index(),
            None => {
                empty = Default::default();
                &empty
            }
        };
        let now = self.clock.now_ms();
        Ok(self.node.release_share(req, index, now)?)
    }

    pub fn info(&self) -> NodeInfo {
        NodeInfo {
            node_id: self.node.node_id().clone(),
            shares: self.node.held_shares().count(),
            replica_blocks: self.replica.as_ref().map_or(0, Ledger::len),
        }
    }
}

type Shared = Arc<Mutex<Custodian>>;

pub fn router(custodian: Custodian) -> Router {
    Router::new()
        .route("/node", get(info))
        .route("/shares/:record", put(deposit))
        .route("/challenges", post(challenge))
        .route("/release", post(release))
        .with_state(Arc::new(Mutex::new(custodian)))
}

async fn info(State(s): State<Shared>) -> Result<Json<NodeInfo>, ApiError> {
    locked(&s, |c| Ok(c.info())).await.map(Json)
}

async fn deposit(State(s): State<Shared>, Path(record): Path<BlobId>, Json(share): Json<KeyShare>) -> Result<Json<Value>, ApiError> {
    locked(&s, move |c| c.deposit(record, share)).await?;
    Ok(Json(json!({ "stored": record })))
}

async fn challenge(State(s): State<Shared>, Json(req): Json<ChallengeRequest>) -> Result<Json<Challenge>, ApiError> {
    locked(&s, move |c| Ok(c.challenge(req))).await.map(Json)
}

async fn release(State(s): State<Shared>, Json(req): Json<ReleaseRequest>) -> Result<Json<KeyShare>, ApiError> {
    locked(&s, move |c| c.release(&req)).await.map(Json)
}
