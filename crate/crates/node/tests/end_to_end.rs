mod common;

use common::*;
use morpheo_core::ledger::{verify_chain, Event};
use morpheo_core::service::{OrchestratorApi, StorageApi};

#[test]
fn full_workflow_over_http() {
    let Populated { net, host, provider, mut author, .. } = populated();
    let mut p = net.platform();

    let bench = host.benchmark(&mut p, &challenge()).unwrap();
    assert_eq!(bench.len(), 1);
    assert!(bench[0].best_performance > 0.5);

    author.submit_algorithm(&mut p, br#"{"name":"logreg","hyperparameters":{"learning_rate":0.5,"epochs":30}}"#, &challenge()).unwrap();
    net.drain();
    assert_eq!(host.benchmark(&mut p, &challenge()).unwrap().len(), 2);

    let mut buyer = client(5);
    net.admin().fund(&buyer.account(), 100).unwrap();
    let view = buyer.request_prediction(&mut p, b"x,y\n0.1,0.2\n2.9,3.1\n", &challenge(), 40).unwrap();
    net.drain();
    let labels = buyer.fetch_prediction(&mut p, &view.task_id).unwrap();
    assert_eq!(labels, ["A", "B"].map(morpheo_core::types::Label::from));
    assert_eq!(buyer.balance(&mut p).unwrap(), 60);

    let chain = p.chain().unwrap();
    assert!(verify_chain(&chain, &p.orchestrator_pubkey().unwrap()).is_valid());
    assert!(chain.iter().filter(|b| matches!(b.event, Event::PerformanceRecorded { .. })).count() >= 2);
    let audit = provider.audit(&mut p).unwrap();
    assert!(audit.verdict.is_valid());
    assert!(!audit.learning.is_empty());

    // custodians have followed the chain while releasing shares
    for (id, _) in &net.custodians {
        let info = p.custodians.info(id).unwrap();
        assert!(info.shares >= 6, "{info:?}");
        assert!(info.replica_blocks > 0 && info.replica_blocks <= chain.len());
    }
}

#[test]
fn blobs_round_trip_and_probe() {
    let net = Deployment::start();
    let mut s = net.platform();
    let key = morpheo_core::cryptobox::generate_key(&mut rand::rngs::OsRng).unwrap();
    let sealed = morpheo_core::cryptobox::encrypt_blob(&key, b"hello", &mut rand::rngs::OsRng).unwrap();
    let id = s.put_blob(&sealed, morpheo_core::storage::BlobKind::RawData).unwrap();
    assert!(s.has_blob(&id).unwrap());
    assert_eq!(s.get_blob(&id).unwrap().sealed, sealed);
    assert!(!s.has_blob(&morpheo_core::testkit::blob(42)).unwrap());
}
