mod common;

use common::*;
use morpheo_core::cryptobox::{sign_challenge, CustodyError, Identity, ReleaseRequest};
use morpheo_core::orchestrator::OrchestratorError;
use morpheo_core::service::{CustodyApi, OrchestratorApi, ServiceError, StorageApi};
use morpheo_core::storage::StorageError;
use morpheo_core::testkit::blob;
use morpheo_node::remote::{DefineChallenge, Endpoint, RemoteOrchestrator};
use rand::rngs::OsRng;
use serde_json::json;

fn status(method: &str, url: &str, token: Option<&str>, body: serde_json::Value) -> u16 {
    let mut req = ureq::request(method, url);
    if let Some(t) = token {
        req = req.set("Authorization", &format!("Bearer {t}"));
    }
    match req.send_json(body) {
        Ok(r) => r.status(),
        Err(ureq::Error::Status(code, _)) => code,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn admin_routes_need_the_token() {
    let net = Deployment::start();
    let body = serde_json::json!({"challenge_id": "c", "label_set": ["A"]});
    let url = format!("{}/challenges", net.orchestrator);
    assert_eq!(status("POST", &url, None, body.clone()), 401);
    assert_eq!(status("POST", &url, Some("wrong"), body.clone()), 401);
    assert_eq!(status("POST", &url, Some(TOKEN), body), 200);

    let fund = format!("{}/accounts/someone/fund", net.orchestrator);
    assert_eq!(status("POST", &fund, None, serde_json::json!({"amount": 5})), 401);
    let round = format!("{}/contributivity/c", net.orchestrator);
    assert_eq!(status("POST", &round, None, serde_json::json!(null)), 401);

    let anonymous = RemoteOrchestrator(Endpoint::new(&net.orchestrator));
    let err = anonymous
        .define_challenge(&DefineChallenge {
            challenge_id: "d".into(),
            description: String::new(),
            label_set: vec!["A".into()],
        })
        .unwrap_err();
    assert!(matches!(err, ServiceError::Unavailable(_)), "{err:?}");
}

#[test]
fn service_errors_survive_the_wire() {
    let net = Deployment::start();
    let mut p = net.platform();
    assert_eq!(
        p.get_blob(&blob(7)).unwrap_err(),
        ServiceError::Storage(StorageError::NotFound(blob(7)))
    );
    let worker = Identity::generate(&mut OsRng).public_key();
    assert_eq!(p.next_task(&worker).unwrap_err(), ServiceError::Orchestrator(OrchestratorError::NoWork));
    assert_eq!(
        p.challenge(&challenge()).unwrap_err(),
        ServiceError::Orchestrator(OrchestratorError::UnknownChallenge(challenge()))
    );
    let node = net.custodians[0].0.clone();
    let share = morpheo_core::cryptobox::KeyShare([1; 32]);
    p.deposit_share(&node, &blob(1), &share).unwrap();
    p.deposit_share(&node, &blob(1), &share).unwrap();
    assert_eq!(
        p.deposit_share(&node, &blob(1), &morpheo_core::cryptobox::KeyShare([2; 32])).unwrap_err(),
        ServiceError::Custody(CustodyError::ShareConflict)
    );
}

#[test]
fn unreachable_service_is_unavailable() {
    let mut p = morpheo_node::remote::RemotePlatform::new("http://127.0.0.1:9", vec![], "http://127.0.0.1:9");
    assert!(matches!(p.get_blob(&blob(1)), Err(ServiceError::Unavailable(_))));
    assert!(matches!(p.chain(), Err(ServiceError::Unavailable(_))));
}

#[test]
fn custodians_release_only_to_the_assigned_worker() {
    let net = Deployment::start();
    net.define_toy();
    let mut p = net.platform();
    let mut host = client(1);
    host.upload_data(&mut p, VALIDATION.as_bytes(), &challenge(), morpheo_core::ledger::RecordKind::Validation)
        .unwrap();
    let mut provider = client(2);
    let record = provider
        .upload_data(&mut p, provider_csv(0).as_bytes(), &challenge(), morpheo_core::ledger::RecordKind::RawData)
        .unwrap();
    client(3).submit_algorithm(&mut p, br#"{"name":"centroid"}"#, &challenge()).unwrap();

    let worker = Identity::generate(&mut OsRng);
    let task = p.next_task(&worker.public_key()).unwrap();
    assert!(task.data_ids.contains(&record));
    let node = net.custodians[0].0.clone();

    let intruder = Identity::generate(&mut OsRng);
    let c = p.issue_challenge(&node, &task.task_id, &record).unwrap();
    let forged = ReleaseRequest {
        signature: sign_challenge(&intruder, &c),
        challenge: c,
        worker_pubkey: intruder.public_key(),
    };
    assert_eq!(
        p.release_share(&node, &forged).unwrap_err(),
        ServiceError::Custody(CustodyError::UnknownWorker)
    );

    // right key claimed, wrong signer
    let c = p.issue_challenge(&node, &task.task_id, &record).unwrap();
    let stolen = ReleaseRequest {
        signature: sign_challenge(&intruder, &c),
        challenge: c,
        worker_pubkey: worker.public_key(),
    };
    assert_eq!(
        p.release_share(&node, &stolen).unwrap_err(),
        ServiceError::Custody(CustodyError::BadSignature)
    );

    let c = p.issue_challenge(&node, &task.task_id, &record).unwrap();
    let honest = ReleaseRequest {
        signature: sign_challenge(&worker, &c),
        challenge: c,
        worker_pubkey: worker.public_key(),
    };
    p.release_share(&node, &honest).unwrap();
    assert_eq!(
        p.release_share(&node, &honest).unwrap_err(),
        ServiceError::Custody(CustodyError::ChallengeReplayed)
    );
}

#[test]
fn malformed_requests_are_service_errors() {
    let net = Deployment::start();
    for (method, url, body) in [
        ("POST", format!("{}/tasks/next", net.orchestrator), json!({"worker": "zz"})),
        ("GET", format!("{}/blobs/not-an-id", net.storage), json!(null)),
        ("POST", format!("{}/release", net.custodians[0].1), json!({})),
    ] {
        let err = ureq::request(method, &url).send_json(body).unwrap_err();
        let ureq::Error::Status(code, reply) = err else { panic!("{url}: {err}") };
        assert_eq!(code, 400, "{url}");
        let decoded: ServiceError = reply.into_json().unwrap();
        assert!(
            matches!(decoded, ServiceError::Orchestrator(OrchestratorError::InvalidRequest(_))),
            "{url}: {decoded:?}"
        );
    }
}
