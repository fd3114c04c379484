//! Blocking HTTP clients for each daemon, implementing the core service
//! traits so that the client library and workers run unchanged against a
//! real deployment.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use morpheo_core::cryptobox::{Challenge, KeyShare, ReleaseRequest, SealedBlob};
use morpheo_core::ledger::{parse_ndjson, Block};
use morpheo_core::orchestrator::{BenchmarkRow, BlobProbe, ChallengeSpec};
use morpheo_core::service::{
    CustodyApi, OrchestratorApi, PredictionOrder, RegisterRequest, ServiceError, StorageApi, TaskAssignment,
    TaskResult, TaskView,
};
use morpheo_core::storage::{BlobKind, StoredBlob};
use morpheo_core::types::{AccountId, BlobId, ChallengeId, Credits, Label, NodeId, PubKey, TaskId};
use morpheo_core::valuation::ContributivityVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PutBlob {
    pub sealed: SealedBlob,
    pub kind: BlobKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobCreated {
    pub id: BlobId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkerBody {
    pub worker: PubKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultBody {
    pub worker: PubKey,
    pub result: TaskResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuthorizeQuery {
    pub task_id: TaskId,
    pub worker: PubKey,
    pub record_id: BlobId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Authorized {
    pub authorized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountBalance {
    pub account: AccountId,
    pub balance: Credits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FundBody {
    pub amount: Credits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefineChallenge {
    pub challenge_id: ChallengeId,
    #[serde(default)]
    pub description: String,
    pub label_set: Vec<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeRequest {
    pub task_id: TaskId,
    pub record_id: BlobId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeInfo {
    pub node_id: NodeId,
    pub shares: usize,
    pub replica_blocks: usize,
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout_connect(Duration::from_secs(5))
        .timeout(Duration::from_secs(60))
        .build()
}

fn unavailable(url: &str, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Unavailable(format!("{url}: {e}"))
}

/// Shared plumbing: base URL, agent, and error decoding.
#[derive(Debug, Clone)]
pub struct Endpoint {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl Endpoint {
    pub fn new(base: &str) -> Self {
        Endpoint {
            base: base.trim_end_matches('/').to_string(),
            agent: agent(),
            token: None,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn request(&self, method: &str, path: &str) -> (String, ureq::Request) {
        let url = format!("{}{}", self.base, path);
        let mut req = self.agent.request(method, &url);
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        (url, req)
    }

    fn finish(url: &str, r: Result<ureq::Response, ureq::Error>) -> Result<ureq::Response, ServiceError> {
        match r {
            Ok(resp) => Ok(resp),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(serde_json::from_str::<ServiceError>(&text)
                    .unwrap_or_else(|_| unavailable(url, format!("HTTP {code}: {text}"))))
            }
            Err(e) => Err(unavailable(url, e)),
        }
    }

    fn decode<T: DeserializeOwned>(url: &str, resp: ureq::Response) -> Result<T, ServiceError> {
        resp.into_json().map_err(|e| unavailable(url, format!("bad response body: {e}")))
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ServiceError> {
        let (url, req) = self.request("GET", path);
        let resp = Self::finish(&url, req.call())?;
        Self::decode(&url, resp)
    }

    pub fn send<B: Serialize, T: DeserializeOwned>(&self, method: &str, path: &str, body: &B) -> Result<T, ServiceError> {
        let (url, req) = self.request(method, path);
        let resp = Self::finish(&url, req.send_json(body))?;
        Self::decode(&url, resp)
    }

    pub fn get_bytes(&self, path: &str) -> Result<Vec<u8>, ServiceError> {
        let (url, req) = self.request("GET", path);
        let resp = Self::finish(&url, req.call())?;
        let mut out = Vec::new();
        std::io::Read::read_to_end(&mut resp.into_reader(), &mut out).map_err(|e| unavailable(&url, e))?;
        Ok(out)
    }

    /// `Ok(false)` on 404.
    pub fn head(&self, path: &str) -> Result<bool, ServiceError> {
        let (url, req) = self.request("HEAD", path);
        match req.call() {
            Ok(_) => Ok(true),
            Err(ureq::Error::Status(404, _)) => Ok(false),
            other => Self::finish(&url, other).map(|_| true),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteStorage(pub Endpoint);

impl RemoteStorage {
    pub fn new(base: &str) -> Self {
        RemoteStorage(Endpoint::new(base))
    }
}

impl StorageApi for RemoteStorage {
    fn put_blob(&mut self, sealed: &SealedBlob, kind: BlobKind) -> Result<BlobId, ServiceError> {
        let body = PutBlob {
            sealed: sealed.clone(),
            kind,
        };
        self.0.send::<_, BlobCreated>("PUT", "/blobs", &body).map(|c| c.id)
    }

    fn get_blob(&mut self, id: &BlobId) -> Result<StoredBlob, ServiceError> {
        self.0.get(&format!("/blobs/{id}"))
    }

    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError> {
        self.0.head(&format!("/blobs/{id}"))
    }
}

impl BlobProbe for RemoteStorage {
    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError> {
        StorageApi::has_blob(self, id)
    }
}

/// Custodian nodes in share order.
#[derive(Debug, Clone)]
pub struct RemoteCustodians {
    nodes: Vec<(NodeId, Endpoint)>,
}

impl RemoteCustodians {
    pub fn new(nodes: Vec<(NodeId, String)>) -> Self {
        RemoteCustodians {
            nodes: nodes.into_iter().map(|(id, url)| (id, Endpoint::new(&url))).collect(),
        }
    }

    fn node(&self, id: &NodeId) -> Result<&Endpoint, ServiceError> {
        self.nodes
            .iter()
            .find(|(n, _)| n == id)
            .map(|(_, e)| e)
            .ok_or_else(|| ServiceError::Unavailable(format!("no custodian {id} configured")))
    }

    pub fn info(&self, id: &NodeId) -> Result<NodeInfo, ServiceError> {
        self.node(id)?.get("/node")
    }
}

impl CustodyApi for RemoteCustodians {
    fn custodians(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|(id, _)| id.clone()).collect()
    }

    fn deposit_share(&mut self, node: &NodeId, record_id: &BlobId, share: &KeyShare) -> Result<(), ServiceError> {
        self.node(node)?
            .send::<_, serde_json::Value>("PUT", &format!("/shares/{record_id}"), share)
            .map(|_| ())
    }

    fn issue_challenge(&mut self, node: &NodeId, task_id: &TaskId, record_id: &BlobId) -> Result<Challenge, ServiceError> {
        let body = ChallengeRequest {
            task_id: task_id.clone(),
            record_id: *record_id,
        };
        self.node(node)?.send("POST", "/challenges", &body)
    }

    fn release_share(&mut self, node: &NodeId, request: &ReleaseRequest) -> Result<KeyShare, ServiceError> {
        self.node(node)?.send("POST", "/release", request)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteOrchestrator(pub Endpoint);

impl RemoteOrchestrator {
    pub fn new(base: &str) -> Self {
        RemoteOrchestrator(Endpoint::new(base))
    }

    /// Blocks from `from` onwards.
    pub fn chain_since(&self, from: usize) -> Result<Vec<Block>, ServiceError> {
        let text = self.0.get_bytes(&format!("/chain?from={from}"))?;
        parse_ndjson(&text).map_err(|e| unavailable(self.0.base(), format!("bad chain: {e}")))
    }

    pub fn tasks(&self) -> Result<Vec<TaskView>, ServiceError> {
        self.0.get("/tasks")
    }

    pub fn define_challenge(&self, body: &DefineChallenge) -> Result<ChallengeSpec, ServiceError> {
        self.0.send("POST", "/challenges", body)
    }

    pub fn fund(&self, account: &AccountId, amount: Credits) -> Result<AccountBalance, ServiceError> {
        self.0.send("POST", &format!("/accounts/{account}/fund"), &FundBody { amount })
    }

    pub fn start_contributivity(&self, challenge: &ChallengeId) -> Result<Vec<TaskView>, ServiceError> {
        self.0.send("POST", &format!("/contributivity/{challenge}"), &serde_json::json!({}))
    }
}

impl OrchestratorApi for RemoteOrchestrator {
    fn orchestrator_pubkey(&mut self) -> Result<PubKey, ServiceError> {
        self.0.get("/pubkey")
    }

    fn challenge(&mut self, id: &ChallengeId) -> Result<ChallengeSpec, ServiceError> {
        self.0.get(&format!("/challenges/{id}"))
    }

    fn register_data(&mut self, request: &RegisterRequest) -> Result<Vec<TaskView>, ServiceError> {
        let path = match request.kind {
            morpheo_core::ledger::RecordKind::Algorithm => "/algorithms",
            _ => "/data",
        };
        self.0.send("POST", path, request)
    }

    fn request_prediction(&mut self, order: &PredictionOrder) -> Result<TaskView, ServiceError> {
        self.0.send("POST", "/predictions", order)
    }

    fn next_task(&mut self, worker: &PubKey) -> Result<TaskAssignment, ServiceError> {
        self.0.send("POST", "/tasks/next", &WorkerBody { worker: *worker })
    }

    fn record_result(&mut self, task_id: &TaskId, worker: &PubKey, result: &TaskResult) -> Result<(), ServiceError> {
        let body = ResultBody {
            worker: *worker,
            result: result.clone(),
        };
        self.0
            .send::<_, serde_json::Value>("POST", &format!("/tasks/{task_id}/result"), &body)
            .map(|_| ())
    }

    fn requeue_task(&mut self, task_id: &TaskId, worker: &PubKey) -> Result<(), ServiceError> {
        self.0
            .send::<_, serde_json::Value>("POST", &format!("/tasks/{task_id}/requeue"), &WorkerBody { worker: *worker })
            .map(|_| ())
    }

    fn authorize_key_release(&mut self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> Result<bool, ServiceError> {
        let path = format!("/authorize?task_id={task_id}&worker={worker}&record_id={record_id}");
        self.0.get::<Authorized>(&path).map(|a| a.authorized)
    }

    fn benchmark(&mut self, challenge_id: &ChallengeId) -> Result<Vec<BenchmarkRow>, ServiceError> {
        self.0.get(&format!("/benchmark/{challenge_id}"))
    }

    fn contributivity(&mut self, challenge_id: &ChallengeId) -> Result<Option<ContributivityVector>, ServiceError> {
        self.0.get(&format!("/contributivity/{challenge_id}"))
    }

    fn balance(&mut self, account: &AccountId) -> Result<Credits, ServiceError> {
        self.0.get::<AccountBalance>(&format!("/accounts/{account}")).map(|a| a.balance)
    }

    fn chain(&mut self) -> Result<Vec<Block>, ServiceError> {
        self.chain_since(0)
    }
}

/// Everything a client or worker talks to.
#[derive(Debug, Clone)]
pub struct RemotePlatform {
    pub storage: RemoteStorage,
    pub custodians: RemoteCustodians,
    pub orchestrator: RemoteOrchestrator,
}

impl RemotePlatform {
    pub fn new(storage: &str, custodians: Vec<(NodeId, String)>, orchestrator: &str) -> Self {
        RemotePlatform {
            storage: RemoteStorage::new(storage),
            custodians: RemoteCustodians::new(custodians),
            orchestrator: RemoteOrchestrator::new(orchestrator),
        }
    }
}

impl StorageApi for RemotePlatform {
    fn put_blob(&mut self, sealed: &SealedBlob, kind: BlobKind) -> Result<BlobId, ServiceError> {
        self.storage.put_blob(sealed, kind)
    }

    fn get_blob(&mut self, id: &BlobId) -> Result<StoredBlob, ServiceError> {
        self.storage.get_blob(id)
    }

    fn has_blob(&mut self, id: &BlobId) -> Result<bool, ServiceError> {
        StorageApi::has_blob(&mut self.storage, id)
    }
}

impl CustodyApi for RemotePlatform {
    fn custodians(&self) -> Vec<NodeId> {
        self.custodians.custodians()
    }

    fn deposit_share(&mut self, node: &NodeId, record_id: &BlobId, share: &KeyShare) -> Result<(), ServiceError> {
        self.custodians.deposit_share(node, record_id, share)
    }

    fn issue_challenge(&mut self, node: &NodeId, task_id: &TaskId, record_id: &BlobId) -> Result<Challenge, ServiceError> {
        self.custodians.issue_challenge(node, task_id, record_id)
    }

    fn release_share(&mut self, node: &NodeId, request: &ReleaseRequest) -> Result<KeyShare, ServiceError> {
        self.custodians.release_share(node, request)
    }
}

impl OrchestratorApi for RemotePlatform {
    fn orchestrator_pubkey(&mut self) -> Result<PubKey, ServiceError> {
        self.orchestrator.orchestrator_pubkey()
    }

    fn challenge(&mut self, id: &ChallengeId) -> Result<ChallengeSpec, ServiceError> {
        self.orchestrator.challenge(id)
    }

    fn register_data(&mut self, request: &RegisterRequest) -> Result<Vec<TaskView>, ServiceError> {
        self.orchestrator.register_data(request)
    }

    fn request_prediction(&mut self, order: &PredictionOrder) -> Result<TaskView, ServiceError> {
        self.orchestrator.request_prediction(order)
    }

    fn next_task(&mut self, worker: &PubKey) -> Result<TaskAssignment, ServiceError> {
        self.orchestrator.next_task(worker)
    }

    fn record_result(&mut self, task_id: &TaskId, worker: &PubKey, result: &TaskResult) -> Result<(), ServiceError> {
        self.orchestrator.record_result(task_id, worker, result)
    }

    fn requeue_task(&mut self, task_id: &TaskId, worker: &PubKey) -> Result<(), ServiceError> {
        self.orchestrator.requeue_task(task_id, worker)
    }

    fn authorize_key_release(&mut self, task_id: &TaskId, worker: &PubKey, record_id: &BlobId) -> Result<bool, ServiceError> {
        self.orchestrator.authorize_key_release(task_id, worker, record_id)
    }

    fn benchmark(&mut self, challenge_id: &ChallengeId) -> Result<Vec<BenchmarkRow>, ServiceError> {
        self.orchestrator.benchmark(challenge_id)
    }

    fn contributivity(&mut self, challenge_id: &ChallengeId) -> Result<Option<ContributivityVector>, ServiceError> {
        self.orchestrator.contributivity(challenge_id)
    }

    fn balance(&mut self, account: &AccountId) -> Result<Credits, ServiceError> {
        self.orchestrator.balance(account)
    }

    fn chain(&mut self) -> Result<Vec<Block>, ServiceError> {
        self.orchestrator.chain()
    }
}

/// Parses `node-id=url`.
pub fn parse_custodian(spec: &str) -> Result<(NodeId, String), String> {
    let (id, url) = spec
        .split_once('=')
        .ok_or_else(|| format!("expected NODE_ID=URL, got `{spec}`"))?;
    if id.is_empty() || url.is_empty() {
        return Err(format!("expected NODE_ID=URL, got `{spec}`"));
    }
    Ok((NodeId::from(id), url.to_string()))
}
