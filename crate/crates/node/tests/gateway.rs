mod common;

use common::*;
use morpheo_core::client::{KeyVault, RecordRows};
use morpheo_core::ledger::{Event, RecordKind};
use morpheo_core::service::OrchestratorApi;
use morpheo_core::testkit::blob;
use morpheo_node::gateway::{self, CorrectionReceipt, Gateway, PredictionView, RecordSummary};
use morpheo_node::spawn_server;
use serde_json::{json, Value};

const PASS: &str = "correct horse";

fn get(url: &str) -> (u16, Value) {
    match ureq::get(url).call() {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

fn post(url: &str, body: Value) -> (u16, Value) {
    match ureq::post(url).send_json(body) {
        Ok(r) => (r.status(), r.into_json().unwrap()),
        Err(ureq::Error::Status(code, r)) => (code, r.into_json().unwrap()),
        Err(e) => panic!("{e}"),
    }
}

struct Ui {
    base: String,
    net: Deployment,
    record: morpheo_core::types::BlobId,
    task: morpheo_core::types::TaskId,
    vault: tempfile::NamedTempFile,
}

/// Gateway over a vault holding one dataset and one finished prediction.
fn ui() -> Ui {
    let Populated { net, mut provider, provider_record, .. } = populated();
    let mut p = net.platform();
    net.admin().fund(&provider.account(), 50).unwrap();
    let task = provider
        .request_prediction(&mut p, b"x,y\n0.1,0.2\n2.9,3.1\n", &challenge(), 10)
        .unwrap()
        .task_id;
    net.drain();
    let vault = tempfile::NamedTempFile::new().unwrap();
    let gw = Gateway::new(provider, net.platform(), Some(vault.path().to_path_buf()), PASS.into());
    let addr = spawn_server(any_port(), gateway::router(gw)).unwrap();
    Ui {
        base: format!("http://{addr}/api"),
        net,
        record: provider_record,
        task,
        vault,
    }
}

#[test]
fn lists_records_and_decrypts_rows() {
    let ui = ui();
    let (code, body) = get(&format!("{}/records", ui.base));
    assert_eq!(code, 200);
    let records: Vec<RecordSummary> = serde_json::from_value(body).unwrap();
    assert_eq!(records.len(), 2);
    let data = records.iter().find(|r| r.record_id == ui.record).unwrap();
    assert_eq!((data.kind, data.rows, data.prediction_task.as_ref()), (Some(RecordKind::RawData), 4, None));
    let input = records.iter().find(|r| r.kind.is_none()).unwrap();
    assert_eq!(input.prediction_task.as_ref(), Some(&ui.task));

    let (code, body) = get(&format!("{}/records/{}/rows", ui.base, ui.record));
    assert_eq!(code, 200);
    let rows: RecordRows = serde_json::from_value(body).unwrap();
    assert_eq!(rows.feature_names, ["x", "y"]);
    assert_eq!(rows.features, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0], vec![3.0, 2.0]]);
    assert_eq!(rows.labels.unwrap(), ["A", "A", "B", "B"].map(morpheo_core::types::Label::from));

    let (code, body) = get(&format!("{}/records/{}/rows", ui.base, input.record_id));
    assert_eq!(code, 200);
    assert_eq!(body["labels"], Value::Null);
    assert_eq!(body["features"], json!([[0.1, 0.2], [2.9, 3.1]]));
}

#[test]
fn foreign_records_are_refused() {
    let ui = ui();
    let (code, body) = get(&format!("{}/records/{}/rows", ui.base, blob(3)));
    assert_eq!((code, body["error"].as_str()), (403, Some("NotOwner")));
    let (code, body) = get(&format!("{}/records/not-hex/rows", ui.base));
    assert_eq!((code, body["error"].as_str()), (400, Some("Parse")));
}

#[test]
fn predictions_are_decrypted() {
    let ui = ui();
    let (code, body) = get(&format!("{}/predictions/{}", ui.base, ui.task));
    assert_eq!(code, 200);
    let view: PredictionView = serde_json::from_value(body).unwrap();
    assert_eq!(view.labels, ["A", "B"].map(morpheo_core::types::Label::from));
    let (code, body) = get(&format!("{}/predictions/task-999999", ui.base));
    assert_eq!((code, body["error"].as_str()), (409, Some("NotReady")));
}

#[test]
fn corrections_register_new_data() {
    let ui = ui();
    let url = format!("{}/corrections", ui.base);
    let (code, body) = post(&url, json!({"source_record_id": ui.record, "row_index": 1, "corrected_label": "B"}));
    assert_eq!(code, 201, "{body}");
    let receipt: CorrectionReceipt = serde_json::from_value(body).unwrap();

    let chain = ui.net.platform().chain().unwrap();
    let registered = chain.iter().any(|b| {
        matches!(&b.event, Event::DataRegistered { record_id, kind: RecordKind::RawData, .. } if *record_id == receipt.record_id)
    });
    assert!(registered);

    let (_, body) = get(&format!("{}/records/{}/rows", ui.base, receipt.record_id));
    assert_eq!(body["features"], json!([[0.0, 1.0]]));
    assert_eq!(body["labels"], json!(["B"]));

    // the vault was saved with the new record
    let saved = KeyVault::open(ui.vault.path(), PASS).unwrap();
    assert!(saved.record(&receipt.record_id).is_some());

    // the same correction again is the same content
    let (code, body) = post(&url, json!({"source_record_id": ui.record, "row_index": 1, "corrected_label": "B"}));
    assert_eq!((code, body["error"].as_str()), (409, Some("DuplicateRegistration")));
}

#[test]
fn bad_corrections_are_rejected() {
    let ui = ui();
    let url = format!("{}/corrections", ui.base);
    let cases = [
        (json!({"source_record_id": ui.record, "row_index": 4, "corrected_label": "A"}), 422, "IndexOutOfRange"),
        (json!({"source_record_id": ui.record, "row_index": 0, "corrected_label": "C"}), 422, "BadLabel"),
        (json!({"source_record_id": blob(3), "row_index": 0, "corrected_label": "A"}), 403, "NotOwner"),
        (
            json!({"source_record_id": ui.record, "row_index": 0, "corrected_label": "A", "annotator": "someone-else"}),
            403,
            "NotOwner",
        ),
    ];
    for (body, status, name) in cases {
        let (code, reply) = post(&url, body.clone());
        assert_eq!((code, reply["error"].as_str()), (status, Some(name)), "{body}");
    }
    let (code, reply) = post(&url, json!({"row_index": 0}));
    assert_eq!((code, reply["error"].as_str()), (400, Some("Parse")));
}

#[test]
fn benchmark_passes_through() {
    let ui = ui();
    let (code, body) = get(&format!("{}/benchmark/{}", ui.base, CHALLENGE));
    assert_eq!(code, 200);
    assert_eq!(body.as_array().unwrap().len(), 1);
    let (code, body) = get(&format!("{}/benchmark/nope", ui.base));
    assert_eq!((code, body["error"].as_str()), (404, Some("Service")));
}

#[test]
fn loopback_only() {
    assert!(gateway::check_loopback(&"127.0.0.1:7300".parse().unwrap()).is_ok());
    assert!(gateway::check_loopback(&"[::1]:7300".parse().unwrap()).is_ok());
    assert!(gateway::check_loopback(&"0.0.0.0:7300".parse().unwrap()).is_err());
    assert!(gateway::check_loopback(&"192.168.1.4:7300".parse().unwrap()).is_err());
}
