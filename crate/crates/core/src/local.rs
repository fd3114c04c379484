//! A whole deployment in one process: storage, custodian nodes and the
//! orchestrator, wired directly together. Custodians consult the
//! orchestrator's ledger index when deciding whether to release a share.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::sync::Arc;

use crate::clock::Clock;
use crate::compute::{Worker, WorkerError};
use crate::cryptobox::{Challenge, CustodianNode, Identity, KeyShare, ReleaseRequest, SealedBlob};
use crate::ledger::Block;
use crate::orchestrator::{BenchmarkRow, ChallengeSpec, Orchestrator, OrchestratorConfig, OrchestratorError};
use crate::service::{
    CustodyApi, OrchestratorApi, PredictionOrder, RegisterRequest, ServiceError, StorageApi, TaskAssignment,
    TaskResult, TaskView,
};
use crate::storage::{BlobKind, BlobStore, StoredBlob};
use crate::types::{AccountId, BlobId, ChallengeId, Credits, NodeId, PubKey, TaskId};
use crate::valuation::ContributivityVector;

#[derive(Debug, thiserror::Error)]
pub enum DrainError {
    #[error("task {task}: {error}")]
    Worker { task: TaskId, error: WorkerError },
    #[error(transparent)]
    Service(ServiceError),
}

pub struct LocalNetwork {
    pub storage: BlobStore,
    pub custodians: Vec<CustodianNode>,
    pub orchestrator: Orchestrator,
    pub clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for LocalNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalNetwork")
            .field("blobs", &self.storage.len())
            .field("custodians", &self.custodians.len())
            .field("orchestrator", &self.orchestrator)
            .finish()
    }
}

impl LocalNetwork {
    /// Custodians are named `node-0` .. `node-{n-1}`; every key and nonce
    /// source derives from `seed`.
    pub fn new(seed: u64, custodian_count: usize, config: OrchestratorConfig, clock: Arc<dyn Clock>) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let signer = Identity::generate(&mut rng);
        let custodians = (0..custodian_count)
            .map(|i| {
                let mut node_seed = [0u8; 32];
                rng.fill_bytes(&mut node_seed);
                CustodianNode::new(NodeId::new(format!("node-{i}")), node_seed)
            })
            .collect();
        LocalNetwork {
            storage: BlobStore::in_memory(),
            custodians,
            orchestrator: Orchestrator::new(signer, config, clock.clone()),
            clock,
        }
    }

    /// Runs queued tasks with honest workers, one fresh worker per task,
    /// until the queue is empty. Returns the completed task ids in order.
    pub fn drain<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> Result<Vec<TaskId>, DrainError> {
        let mut done = Vec::new();
        loop {
            let mut worker = Worker::spawn(rng);
            let task = match self.next_task(&worker.public_key()) {
                Ok(t) => t,
                Err(ServiceError::Orchestrator(OrchestratorError::NoWork)) => return Ok(done),
                Err(e) => return Err(DrainError::Service(e)),
            };
            let task_id = task.task_id.clone();
            let outcome = worker
                .provision(task, self)
                .and_then(|_| worker.run())
                .and_then(|_| worker.report_and_destroy(self, rng));
            if let Err(error) = outcome {
                let _ = worker.abandon(self);
                return Err(DrainError::Worker { task: task_id, error });
            }
            done.push(task_id);
        }
    }

    fn node(&mut self, id: &NodeId) -> Result<&mut CustodianNode, ServiceError> {
        self.custodians
            .iter_mut()
            .find(|n| n.node_id() == id)
            .ok_or_else(|| ServiceError::Unavailable(format!("no custodian {id}")))
    }
}

impl StorageApi for LocalNetwork {
    fn put_blob(&mut self, sealed: &SealedBlob, kind: BlobKind) -> Result<BlobId, ServiceError> {
        Ok(self.storage.put_blob(sealed.clone(), kind)?)
    }

    fn get_blob(&mut self, id: &BlobId) -> Result<StoredBlob, ServiceError> {
        Ok(self.storage.get_blob(id)?)
    }

    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError> {
        Ok(self.storage.has_blob(id))
    }
}

impl CustodyApi for LocalNetwork {
    fn custodians(&self) -> Vec<NodeId> {
        self.custodians.iter().map(|n| n.node_id().clone()).collect()
    }

    fn deposit_share(&mut self, node: &NodeId, record_id: &BlobId, share: &KeyShare) -> Result<(), ServiceError> {
        Ok(self.node(node)?.deposit_share(*record_id, share.clone())?)
    }

    fn issue_challenge(&mut self, node: &NodeId, task_id: &TaskId, record_id: &BlobId) -> Result<Challenge, ServiceError> {
        let now = self.clock.now_ms();
        Ok(self.node(node)?.issue_challenge(task_id.clone(), *record_id, now))
    }

    fn release_share(&mut self, node: &NodeId, request: &ReleaseRequest) -> Result<KeyShare, ServiceError> {
        let now = self.clock.now_ms();
        let node = self
            .custodians
            .iter_mut()
            .find(|n| n.node_id() == node)
            .ok_or_else(|| ServiceError::Unavailable(format!("no custodian {node}")))?;
        Ok(node.release_share(request, self.orchestrator.ledger().index(), now)?)
    }
}

impl OrchestratorApi for LocalNetwork {
    fn orchestrator_pubkey(&mut self) -> Result<PubKey, ServiceError> {
        Ok(self.orchestrator.pubkey())
    }

    fn challenge(&mut self, id: &ChallengeId) -> Result<ChallengeSpec, ServiceError> {
        Ok(self.orchestrator.challenge(id)?)
    }

    fn register_data(&mut self, request: &RegisterRequest) -> Result<Vec<TaskView>, ServiceError> {
        Ok(self.orchestrator.register_data(request, &mut self.storage)?)
    }

    fn request_prediction(&mut self, order: &PredictionOrder) -> Result<TaskView, ServiceError> {
        Ok(self.orchestrator.request_prediction(order, &mut self.storage)?)
    }

    fn next_task(&mut self, worker: &PubKey) -> Result<TaskAssignment, ServiceError> {
        Ok(self.orchestrator.next_task(worker)?)
    }

    fn record_result(&mut self, task_id: &TaskId, worker: &PubKey, result: &TaskResult) -> Result<(), ServiceError> {
        Ok(self.orchestrator.record_result(task_id, worker, result, &mut self.storage)?)
    }

    fn requeue_task(&mut self, task_id: &TaskId, worker: &PubKey) -> Result<(), ServiceError> {
        Ok(self.orchestrator.requeue_task(task_id, worker)?)
    }

    fn authorize_key_release(&mut self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> Result<bool, ServiceError> {
        Ok(self.orchestrator.authorize_key_release(task_id, worker, record_id))
    }

    fn benchmark(&mut self, challenge_id: &ChallengeId) -> Result<Vec<BenchmarkRow>, ServiceError> {
        Ok(self.orchestrator.benchmark(challenge_id)?)
    }

    fn contributivity(&mut self, challenge_id: &ChallengeId) -> Result<Option<ContributivityVector>, ServiceError> {
        Ok(self.orchestrator.contributivity(challenge_id)?)
    }

    fn balance(&mut self, account: &AccountId) -> Result<Credits, ServiceError> {
        Ok(self.orchestrator.balance(account))
    }

    fn chain(&mut self) -> Result<Vec<Block>, ServiceError> {
        Ok(self.orchestrator.ledger().blocks().to_vec())
    }
}
