//! Service errors travel as their JSON encoding with a matching status, so
//! a remote caller gets back the same `ServiceError` a local one would.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use morpheo_core::cryptobox::CustodyError;
use morpheo_core::orchestrator::OrchestratorError;
use morpheo_core::service::ServiceError;
use morpheo_core::storage::StorageError;

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    use OrchestratorError as O;
    match e {
        ServiceError::Storage(StorageError::NotFound(_)) => StatusCode::NOT_FOUND,
        ServiceError::Storage(StorageError::StorageFull) => StatusCode::INSUFFICIENT_STORAGE,
        ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        ServiceError::Custody(CustodyError::ShareNotHeld) => StatusCode::NOT_FOUND,
        ServiceError::Custody(CustodyError::ShareConflict) => StatusCode::CONFLICT,
        ServiceError::Custody(_) => StatusCode::FORBIDDEN,
        ServiceError::Orchestrator(o) => match o {
            O::UnknownBlob(_) | O::UnknownChallenge(_) | O::UnknownTask(_) | O::NoWork | O::NoModelAvailable => {
                StatusCode::NOT_FOUND
            }
            O::DuplicateRegistration(_) | O::RequeueExhausted(_) | O::TaskNotAssigned(_) => StatusCode::CONFLICT,
            O::WrongWorker => StatusCode::FORBIDDEN,
            O::InsufficientBalance { .. } => StatusCode::PAYMENT_REQUIRED,
            O::StorageUnavailable(_) => StatusCode::BAD_GATEWAY,
            O::Ledger(_) => StatusCode::INTERNAL_SERVER_ERROR,
            O::InvalidPerformance(_) | O::InvalidRequest(_) | O::Valuation(_) => StatusCode::BAD_REQUEST,
        },
        ServiceError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), Json(self.0)).into_response()
    }
}

pub(crate) fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(ServiceError::Orchestrator(OrchestratorError::InvalidRequest(msg.into())))
}
