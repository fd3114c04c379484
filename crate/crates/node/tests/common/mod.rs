#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use morpheo_core::client::{Client, KeyVault};
use morpheo_core::clock::SystemClock;
use morpheo_core::cryptobox::Identity;
use morpheo_core::ledger::RecordKind;
use morpheo_core::orchestrator::{Orchestrator, OrchestratorConfig};
use morpheo_core::types::{BlobId, ChallengeId, NodeId};
use morpheo_node::custodian::{self, Custodian};
use morpheo_node::remote::{DefineChallenge, Endpoint, RemoteOrchestrator, RemotePlatform, RemoteStorage};
use morpheo_node::worker::run_one;
use morpheo_node::{orchestrator, spawn_server, storage};

pub const TOKEN: &str = "letmein";
pub const CHALLENGE: &str = "toy";
pub const VALIDATION: &str = "x,y,label\n0.2,0.3,A\n2.8,2.7,B\n0.5,0.1,A\n2.5,2.9,B\n";

pub fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub fn url(addr: SocketAddr) -> String {
    format!("http://{addr}")
}

pub fn provider_csv(i: usize) -> String {
    let d = i as f64 * 0.1;
    format!("x,y,label\n{d},0,A\n0,{},A\n{},3,B\n3,{},B\n", 1.0 + d, 3.0 - d, 2.0 - d)
}

/// Storage, orchestrator and three custodians on loopback ports.
pub struct Deployment {
    pub storage: String,
    pub orchestrator: String,
    pub custodians: Vec<(NodeId, String)>,
}

impl Deployment {
    pub fn start() -> Self {
        let storage = url(spawn_server(any_port(), storage::router(morpheo_core::storage::BlobStore::in_memory())).unwrap());
        let signer = Identity::generate(&mut ChaCha20Rng::seed_from_u64(11));
        let orch = Orchestrator::new(signer, OrchestratorConfig::default(), Arc::new(SystemClock));
        let node = orchestrator::OrchestratorNode {
            orchestrator: orch,
            storage: RemoteStorage::new(&storage),
        };
        let orchestrator = url(spawn_server(any_port(), orchestrator::router(node, Some(TOKEN.into()))).unwrap());
        let custodians = (0..3)
            .map(|i| {
                let id = NodeId::from(format!("custodian-{i}").as_str());
                let c = Custodian::new(id.clone(), [i as u8; 32], &orchestrator, None, None, Arc::new(SystemClock)).unwrap();
                (id, url(spawn_server(any_port(), custodian::router(c)).unwrap()))
            })
            .collect();
        Deployment {
            storage,
            orchestrator,
            custodians,
        }
    }

    pub fn platform(&self) -> RemotePlatform {
        RemotePlatform::new(&self.storage, self.custodians.clone(), &self.orchestrator)
    }

    pub fn admin(&self) -> RemoteOrchestrator {
        RemoteOrchestrator(Endpoint::new(&self.orchestrator).with_token(Some(TOKEN.into())))
    }

    pub fn define_toy(&self) {
        self.admin()
            .define_challenge(&DefineChallenge {
                challenge_id: CHALLENGE.into(),
                description: "two clusters".into(),
                label_set: vec!["A".into(), "B".into()],
            })
            .unwrap();
    }

    /// Runs workers until the queue is empty; returns the tasks done.
    pub fn drain(&self) -> usize {
        let mut platform = self.platform();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let mut done = 0;
        while run_one(&mut platform, &mut rng).unwrap().is_some() {
            done += 1;
            assert!(done < 500, "queue does not drain");
        }
        done
    }
}

pub fn client(seed: u64) -> Client<ChaCha20Rng> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Client::new(KeyVault::generate(&mut rng), rng)
}

pub fn challenge() -> ChallengeId {
    CHALLENGE.into()
}

/// Challenge, validation set, two providers and a centroid algorithm,
/// trained to completion. Returns the clients and the first provider's
/// record.
pub struct Populated {
    pub net: Deployment,
    pub host: Client<ChaCha20Rng>,
    pub provider: Client<ChaCha20Rng>,
    pub author: Client<ChaCha20Rng>,
    pub provider_record: BlobId,
}

pub fn populated() -> Populated {
    let net = Deployment::start();
    net.define_toy();
    let mut p = net.platform();
    let mut host = client(1);
    host.upload_data(&mut p, VALIDATION.as_bytes(), &challenge(), RecordKind::Validation).unwrap();
    let mut provider = client(2);
    let provider_record = provider.upload_data(&mut p, provider_csv(0).as_bytes(), &challenge(), RecordKind::RawData).unwrap();
    let mut other = client(3);
    other.upload_data(&mut p, provider_csv(1).as_bytes(), &challenge(), RecordKind::RawData).unwrap();
    let mut author = client(4);
    author.submit_algorithm(&mut p, br#"{"name":"centroid"}"#, &challenge()).unwrap();
    net.drain();
    Populated {
        net,
        host,
        provider,
        author,
        provider_record,
    }
}
