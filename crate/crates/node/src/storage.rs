//! Storage daemon: PUT /blobs, GET /blobs/{id}, HEAD /blobs/{id}.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, put};
use axum::Router;

use crate::remote::{BlobCreated, PutBlob};
use crate::extract::api::{Json, Path};
use crate::{locked, ApiError};
use morpheo_core::service::ServiceError;
use morpheo_core::storage::{BlobStore, StoredBlob};
use morpheo_core::types::BlobId;

type Shared = Arc<Mutex<BlobStore>>;

pub fn router(store: BlobStore) -> Router {
    Router::new()
        .route("/blobs", put(put_blob))
        .route("/blobs/:id", get(get_blob).head(head_blob))
        .with_state(Arc::new(Mutex::new(store)))
}

async fn put_blob(State(s): State<Shared>, Json(body): Json<PutBlob>) -> Result<(StatusCode, Json<BlobCreated>), ApiError> {
    let id = locked(&s, move |store| store.put_blob(body.sealed, body.kind).map_err(ServiceError::from)).await?;
    Ok((StatusCode::CREATED, Json(BlobCreated { id })))
}

async fn get_blob(State(s): State<Shared>, Path(id): Path<BlobId>) -> Result<Json<StoredBlob>, ApiError> {
    locked(&s, move |store| store.get_blob(&id).map_err(ServiceError::from)).await.map(Json)
}

async fn head_blob(State(s): State<Shared>, Path(id): Path<BlobId>) -> Result<StatusCode, ApiError> {
    let present = locked(&s, move |store| Ok(store.has_blob(&id))).await?;
    Ok(if present { StatusCode::OK } else { StatusCode::NOT_FOUND })
}
