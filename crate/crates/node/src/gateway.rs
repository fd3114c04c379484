//! Local HTTP gateway over a client vault, for the review UI. Decryption
//! happens here; the UI only ever sees what these routes return. Reads run
//! concurrently, mutations take the vault exclusively and persist it.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use rand::rngs::OsRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::status_of;
use crate::remote::RemotePlatform;
use morpheo_core::client::{AnnotationCorrection, Client, ClientError, RecordRows};
use morpheo_core::ledger::RecordKind;
use morpheo_core::orchestrator::BenchmarkRow;
use morpheo_core::types::{AccountId, BlobId, ChallengeId, Label, TaskId};

pub struct Gateway {
    client: RwLock<Client<ChaCha20Rng>>,
    platform: RemotePlatform,
    vault_path: Option<PathBuf>,
    passphrase: String,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("vault_path", &self.vault_path).finish_non_exhaustive()
    }
}

impl Gateway {
    /// With `vault_path` set, the vault is re-saved after every mutation.
    pub fn new(client: Client<ChaCha20Rng>, platform: RemotePlatform, vault_path: Option<PathBuf>, passphrase: String) -> Self {
        Gateway {
            client: RwLock::new(client),
            platform,
            vault_path,
            passphrase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub record_id: BlobId,
    pub challenge_id: ChallengeId,
    /// Absent for prediction inputs.
    pub kind: Option<RecordKind>,
    pub rows: usize,
    /// The prediction request this record is the input of, if any.
    pub prediction_task: Option<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionView {
    pub task_id: TaskId,
    pub input_record_id: BlobId,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionBody {
    pub source_record_id: BlobId,
    pub row_index: usize,
    pub corrected_label: Label,
    /// Defaults to the vault's own account.
    #[serde(default)]
    pub annotator: Option<AccountId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReceipt {
    pub record_id: BlobId,
}

#[derive(Debug)]
pub struct GatewayError(pub ClientError);

impl From<ClientError> for GatewayError {
    fn from(e: ClientError) -> Self {
        GatewayError(e)
    }
}

fn code(e: &ClientError) -> (StatusCode, &'static str) {
    use ClientError as C;
    match e {
        C::Parse(_) => (StatusCode::BAD_REQUEST, "Parse"),
        C::LabelMismatch(_) => (StatusCode::UNPROCESSABLE_ENTITY, "LabelMismatch"),
        C::UnknownTrainer(_) => (StatusCode::UNPROCESSABLE_ENTITY, "UnknownTrainer"),
        C::DuplicateRegistration(_) => (StatusCode::CONFLICT, "DuplicateRegistration"),
        C::InsufficientBalance { .. } => (StatusCode::PAYMENT_REQUIRED, "InsufficientBalance"),
        C::NotReady(_) => (StatusCode::CONFLICT, "NotReady"),
        C::DecryptionFailed => (StatusCode::FORBIDDEN, "DecryptionFailed"),
        C::NotOwner(_) => (StatusCode::FORBIDDEN, "NotOwner"),
        C::IndexOutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "IndexOutOfRange"),
        C::BadLabel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "BadLabel"),
        C::AuthenticationFailed => (StatusCode::FORBIDDEN, "AuthenticationFailed"),
        C::Vault(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Vault"),
        C::Crypto(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Crypto"),
        C::Service(s) => {
            let status = status_of(s);
            let status = if status == StatusCode::SERVICE_UNAVAILABLE { StatusCode::BAD_GATEWAY } else { status };
            (status, "Service")
        }
    }
}

fn malformed(msg: String) -> GatewayError {
    GatewayError(ClientError::Parse(msg))
}

crate::extract::extractors!(GatewayError, malformed);

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let (status, name) = code(&self.0);
        (status, axum::Json(json!({ "error": name, "message": self.0.to_string() }))).into_response()
    }
}

type Shared = Arc<Gateway>;

pub fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/api/records", get(records))
        .route("/api/records/:id/rows", get(rows))
        .route("/api/predictions/:task", get(prediction))
        .route("/api/corrections", post(correct))
        .route("/api/benchmark/:challenge", get(benchmark))
        .with_state(Arc::new(gateway))
}

/// The gateway is a local companion and refuses non-loopback addresses.
pub fn check_loopback(addr: &SocketAddr) -> Result<(), String> {
    if addr.ip().is_loopback() {
        Ok(())
    } else {
        Err(format!("refusing to serve the gateway on non-loopback address {addr}"))
    }
}

async fn blocking<T: Send + 'static>(
    g: Shared,
    f: impl FnOnce(&Gateway) -> Result<T, ClientError> + Send + 'static,
) -> Result<T, GatewayError> {
    tokio::task::spawn_blocking(move || f(&g))
        .await
        .map_err(|e| GatewayError(ClientError::Vault(format!("handler panicked: {e}"))))?
        .map_err(GatewayError)
}

fn read(g: &Gateway) -> std::sync::RwLockReadGuard<'_, Client<ChaCha20Rng>> {
    g.client.read().unwrap_or_else(|p| p.into_inner())
}

fn write(g: &Gateway) -> std::sync::RwLockWriteGuard<'_, Client<ChaCha20Rng>> {
    g.client.write().unwrap_or_else(|p| p.into_inner())
}

fn persist(g: &Gateway, client: &Client<ChaCha20Rng>) -> Result<(), ClientError> {
    match &g.vault_path {
        Some(path) => client.vault().save(path, &g.passphrase, &mut OsRng),
        None => Ok(()),
    }
}

async fn records(State(g): State<Shared>) -> Result<Json<Vec<RecordSummary>>, GatewayError> {
    blocking(g, |g| {
        let client = read(g);
        let vault = client.vault();
        let mut out: Vec<RecordSummary> = vault
            .records()
            .iter()
            .map(|(id, r)| RecordSummary {
                record_id: *id,
                challenge_id: r.challenge_id.clone(),
                kind: r.kind,
                rows: r.rows,
                prediction_task: vault
                    .predictions()
                    .iter()
                    .find(|(_, p)| p.input_record_id == *id)
                    .map(|(t, _)| t.clone()),
            })
            .collect();
        out.sort_by_key(|r| r.record_id);
        Ok(out)
    })
    .await
    .map(Json)
}

async fn rows(State(g): State<Shared>, Path(id): Path<BlobId>) -> Result<Json<RecordRows>, GatewayError> {
    blocking(g, move |g| {
        let mut platform = g.platform.clone();
        read(g).record_rows(&mut platform, &id)
    })
    .await
    .map(Json)
}

async fn prediction(State(g): State<Shared>, Path(task): Path<TaskId>) -> Result<Json<PredictionView>, GatewayError> {
    blocking(g, move |g| {
        let mut platform = g.platform.clone();
        let mut client = write(g);
        let labels = client.fetch_prediction(&mut platform, &task)?;
        let input_record_id = client
            .vault()
            .predictions()
            .get(&task)
            .map(|p| p.input_record_id)
            .ok_or_else(|| ClientError::NotReady(task.clone()))?;
        Ok(PredictionView {
            task_id: task,
            input_record_id,
            labels,
        })
    })
    .await
    .map(Json)
}

async fn correct(State(g): State<Shared>, Json(body): Json<CorrectionBody>) -> Result<(StatusCode, Json<CorrectionReceipt>), GatewayError> {
    blocking(g, move |g| {
        let mut platform = g.platform.clone();
        let mut client = write(g);
        let correction = AnnotationCorrection {
            source_record_id: body.source_record_id,
            row_index: body.row_index,
            corrected_label: body.corrected_label,
            annotator: body.annotator.unwrap_or_else(|| client.account()),
        };
        let record_id = client.submit_correction(&mut platform, &correction)?;
        persist(g, &client)?;
        Ok((StatusCode::CREATED, Json(CorrectionReceipt { record_id })))
    })
    .await
}

async fn benchmark(State(g): State<Shared>, Path(c): Path<ChallengeId>) -> Result<Json<Vec<BenchmarkRow>>, GatewayError> {
    blocking(g, move |g| {
        let mut platform = g.platform.clone();
        read(g).benchmark(&mut platform, &c)
    })
    .await
    .map(Json)
}
