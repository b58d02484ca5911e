//! HTTP JSON API over [`TrialService`].

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nof1_core::trial::TrialConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::service::TrialService;

/// Error body: `{code, message, field?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            field: self.field().map(str::to_string),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedBody {
    pub trial_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeBody {
    pub t: usize,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloseBody {
    pub snapshots: Vec<crate::events::EstimateSnapshot>,
}

fn body(json: Result<Json<Value>, JsonRejection>) -> Result<Value, ServiceError> {
    json.map(|Json(v)| v).map_err(|e| ServiceError::validation("body", e.body_text()))
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?
}

async fn create(
    State(svc): State<TrialService>,
    json: Result<Json<Value>, JsonRejection>,
) -> Result<(StatusCode, Json<CreatedBody>), ServiceError> {
    let config = TrialConfig::from_json(body(json)?)?;
    let trial_id = blocking(move || svc.create_trial(config)).await?;
    Ok((StatusCode::CREATED, Json(CreatedBody { trial_id })))
}

async fn list(State(svc): State<TrialService>) -> Result<Json<Value>, ServiceError> {
    let ids = blocking(move || svc.store().list()).await?;
    Ok(Json(json!({ "trials": ids })))
}

async fn assign(State(svc): State<TrialService>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let a = blocking(move || svc.assign_next_block(&id)).await?;
    Ok(Json(a).into_response())
}

async fn record(
    State(svc): State<TrialService>,
    Path((id, k)): Path<(String, usize)>,
    json: Result<Json<Value>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let b: OutcomeBody =
        serde_json::from_value(body(json)?).map_err(|e| ServiceError::validation("body", e.to_string()))?;
    let ack = blocking(move || svc.record_outcome(&id, k, b.t, b.y, b.covariates)).await?;
    Ok(Json(ack).into_response())
}

async fn close(
    State(svc): State<TrialService>,
    Path((id, k)): Path<(String, usize)>,
) -> Result<Json<CloseBody>, ServiceError> {
    let snapshots = blocking(move || svc.close_block(&id, k)).await?;
    Ok(Json(CloseBody { snapshots }))
}

async fn status(State(svc): State<TrialService>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let s = blocking(move || svc.get_status(&id)).await?;
    Ok(Json(s).into_response())
}

pub fn router(service: TrialService) -> Router {
    Router::new()
        .route("/trials", post(create).get(list))
        .route("/trials/{id}", get(status))
        .route("/trials/{id}/blocks", post(assign))
        .route("/trials/{id}/blocks/{k}/outcomes", post(record))
        .route("/trials/{id}/blocks/{k}/close", post(close))
        .with_state(service)
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, service: TrialService) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}
