//! Orchestrator daemon. All state transitions go through one lock, so task
//! assignment is linearizable; blob existence is checked against the
//! storage daemon before anything is registered.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::bad_request;
use crate::remote::{AccountBalance, AuthorizeQuery, Authorized, DefineChallenge, FundBody, RemoteStorage, ResultBody, WorkerBody};
use crate::extract::api::{Json, Path, Query};
use crate::{locked, ApiError};
use morpheo_core::ledger::{self, RecordKind};
use morpheo_core::orchestrator::{BenchmarkRow, ChallengeSpec, Orchestrator};
use morpheo_core::service::{PredictionOrder, RegisterRequest, ServiceError, TaskAssignment, TaskView};
use morpheo_core::types::{AccountId, ChallengeId, PubKey, TaskId};
use morpheo_core::valuation::ContributivityVector;

pub struct OrchestratorNode {
    pub orchestrator: Orchestrator,
    pub storage: RemoteStorage,
}

#[derive(Clone)]
struct AppState {
    node: Arc<Mutex<OrchestratorNode>>,
    admin_token: Option<Arc<str>>,
}

impl AppState {
    fn admin(&self, headers: &HeaderMap) -> Result<(), (StatusCode, Json<Value>)> {
        let Some(token) = &self.admin_token else { return Ok(()) };
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given == Some(&**token) {
            Ok(())
        } else {
            Err((StatusCode::UNAUTHORIZED, Json(json!({ "error": "admin token required" }))))
        }
    }
}

/// `admin_token`, when set, guards challenge definition, funding and
/// manual contributivity rounds.
pub fn router(node: OrchestratorNode, admin_token: Option<String>) -> Router {
    let state = AppState {
        node: Arc::new(Mutex::new(node)),
        admin_token: admin_token.map(Into::into),
    };
    Router::new()
        .route("/pubkey", get(pubkey))
        .route("/challenges", post(define_challenge))
        .route("/challenges/:id", get(challenge))
        .route("/data", post(register_data))
        .route("/algorithms", post(register_algorithm))
        .route("/predictions", post(request_prediction))
        .route("/tasks", get(tasks))
        .route("/tasks/next", post(next_task))
        .route("/tasks/:id/result", post(record_result))
        .route("/tasks/:id/requeue", post(requeue))
        .route("/benchmark/:challenge", get(benchmark))
        .route("/authorize", get(authorize))
        .route("/contributivity/:challenge", get(contributivity).post(start_round))
        .route("/accounts/:id", get(balance))
        .route("/accounts/:id/fund", post(fund))
        .route("/chain", get(chain))
        .with_state(state)
}

async fn pubkey(State(s): State<AppState>) -> Result<Json<PubKey>, ApiError> {
    locked(&s.node, |n| Ok(n.orchestrator.pubkey())).await.map(Json)
}

async fn define_challenge(
    State(s): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<DefineChallenge>,
) -> Result<Json<ChallengeSpec>, axum::response::Response> {
    s.admin(&headers).map_err(IntoResponse::into_response)?;
    locked(&s.node, move |n| {
        let o = &mut n.orchestrator;
        o.define_challenge(body.challenge_id.clone(), body.description, body.label_set)?;
        Ok(o.challenge(&body.challenge_id)?)
    })
    .await
    .map(Json)
    .map_err(IntoResponse::into_response)
}

async fn challenge(State(s): State<AppState>, Path(id): Path<ChallengeId>) -> Result<Json<ChallengeSpec>, ApiError> {
    locked(&s.node, move |n| Ok(n.orchestrator.challenge(&id)?)).await.map(Json)
}

async fn register(s: AppState, req: RegisterRequest) -> Result<Json<Vec<TaskView>>, ApiError> {
    locked(&s.node, move |n| {
        let OrchestratorNode { orchestrator, storage } = n;
        Ok(orchestrator.register_data(&req, storage)?)
    })
    .await
    .map(Json)
}

async fn register_data(State(s): State<AppState>, Json(req): Json<RegisterRequest>) -> Result<Json<Vec<TaskView>>, ApiError> {
    if req.kind == RecordKind::Algorithm {
        return Err(bad_request("algorithms are registered at /algorithms"));
    }
    register(s, req).await
}

async fn register_algorithm(State(s): State<AppState>, Json(req): Json<RegisterRequest>) -> Result<Json<Vec<TaskView>>, ApiError> {
    if req.kind != RecordKind::Algorithm {
        return Err(bad_request("only algorithms are registered at /algorithms"));
    }
    register(s, req).await
}

async fn request_prediction(State(s): State<AppState>, Json(order): Json<PredictionOrder>) -> Result<Json<TaskView>, ApiError> {
    locked(&s.node, move |n| {
        let OrchestratorNode { orchestrator, storage } = n;
        Ok(orchestrator.request_prediction(&order, storage)?)
    })
    .await
    .map(Json)
}

async fn tasks(State(s): State<AppState>) -> Result<Json<Vec<TaskView>>, ApiError> {
    locked(&s.node, |n| Ok(n.orchestrator.tasks())).await.map(Json)
}

async fn next_task(State(s): State<AppState>, Json(body): Json<WorkerBody>) -> Result<Json<TaskAssignment>, ApiError> {
    locked(&s.node, move |n| Ok(n.orchestrator.next_task(&body.worker)?)).await.map(Json)
}

async fn record_result(
    State(s): State<AppState>,
    Path(id): Path<TaskId>,
    Json(body): Json<ResultBody>,
) -> Result<Json<Value>, ApiError> {
    locked(&s.node, move |n| {
        let OrchestratorNode { orchestrator, storage } = n;
        orchestrator.record_result(&id, &body.worker, &body.result, storage)?;
        Ok(json!({ "recorded": id }))
    })
    .await
    .map(Json)
}

async fn requeue(State(s): State<AppState>, Path(id): Path<TaskId>, Json(body): Json<WorkerBody>) -> Result<Json<Value>, ApiError> {
    locked(&s.node, move |n| {
        n.orchestrator.requeue_task(&id, &body.worker)?;
        Ok(json!({ "requeued": id }))
    })
    .await
    .map(Json)
}

async fn benchmark(State(s): State<AppState>, Path(c): Path<ChallengeId>) -> Result<Json<Vec<BenchmarkRow>>, ApiError> {
    locked(&s.node, move |n| Ok(n.orchestrator.benchmark(&c)?)).await.map(Json)
}

async fn authorize(State(s): State<AppState>, Query(q): Query<AuthorizeQuery>) -> Result<Json<Authorized>, ApiError> {
    locked(&s.node, move |n| {
        Ok(Authorized {
            authorized: n.orchestrator.authorize_key_release(&q.task_id, &q.worker, &q.record_id),
        })
    })
    .await
    .map(Json)
}

async fn contributivity(State(s): State<AppState>, Path(c): Path<ChallengeId>) -> Result<Json<Option<ContributivityVector>>, ApiError> {
    locked(&s.node, move |n| Ok(n.orchestrator.contributivity(&c)?)).await.map(Json)
}

async fn start_round(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(c): Path<ChallengeId>,
) -> Result<Json<Vec<TaskView>>, axum::response::Response> {
    s.admin(&headers).map_err(IntoResponse::into_response)?;
    locked(&s.node, move |n| Ok(n.orchestrator.start_contributivity_round(&c)?))
        .await
        .map(Json)
        .map_err(IntoResponse::into_response)
}

async fn balance(State(s): State<AppState>, Path(account): Path<AccountId>) -> Result<Json<AccountBalance>, ApiError> {
    locked(&s.node, move |n| {
        Ok(AccountBalance {
            balance: n.orchestrator.balance(&account),
            account,
        })
    })
    .await
    .map(Json)
}

async fn fund(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(account): Path<AccountId>,
    Json(body): Json<FundBody>,
) -> Result<Json<AccountBalance>, axum::response::Response> {
    s.admin(&headers).map_err(IntoResponse::into_response)?;
    locked(&s.node, move |n| {
        n.orchestrator.fund_account(account.clone(), body.amount)?;
        Ok(AccountBalance {
            balance: n.orchestrator.balance(&account),
            account,
        })
    })
    .await
    .map(Json)
    .map_err(IntoResponse::into_response)
}

#[derive(Debug, Deserialize)]
struct ChainQuery {
    #[serde(default)]
    from: usize,
}

/// The chain as NDJSON, optionally from block `from` onwards.
async fn chain(State(s): State<AppState>, Query(q): Query<ChainQuery>) -> Result<impl IntoResponse, ApiError> {
    let body = locked(&s.node, move |n| {
        let blocks = n.orchestrator.ledger().blocks();
        let from = q.from.min(blocks.len());
        Ok::<_, ServiceError>(ledger::to_ndjson(&blocks[from..]))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}
