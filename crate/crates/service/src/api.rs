//! The `/v1` HTTP API over a [`SessionManager`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use periop_core::aggregation::{Directive, Feedback, FinalOutput};
use periop_core::config::Ablation;
use periop_core::manager::{SessionManager, SessionSummary, SessionTrace};
use periop_core::session::{Phase, SessionState};
use periop_core::{Error, ErrorClass};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<SessionManager>,
    /// Required bearer token, when set.
    pub token: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    class: &'static str,
    message: String,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, class) = match e.class() {
            ErrorClass::NotFound => (StatusCode::NOT_FOUND, "not_found"),
            ErrorClass::Conflict => (StatusCode::CONFLICT, "conflict"),
            ErrorClass::Unprocessable => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
            ErrorClass::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            class,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            class: "unprocessable",
            message: e.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"class": self.class, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub patient_id: String,
    pub task: String,
    #[serde(default)]
    pub ablations: Vec<Ablation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRef {
    pub session_id: String,
    pub phase: Phase,
}

/// Feedback as submitted by a client. The session comes from the path and
/// the submission time from the server clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub feedback_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub author_role: Option<String>,
    pub directives: Vec<Directive>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create).get(list))
        .route("/v1/sessions/{id}", get(get_state))
        .route("/v1/sessions/{id}/run", post(run))
        .route("/v1/sessions/{id}/feedback", post(feedback))
        .route("/v1/sessions/{id}/finalize", post(finalize))
        .route("/v1/sessions/{id}/trace", get(trace))
        .layer(middleware::from_fn_with_state(state.clone(), authorize))
        .with_state(state)
}

async fn authorize(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            let body = json!({"error": {"class": "unauthorized", "message": "missing or wrong bearer token"}});
            return (StatusCode::UNAUTHORIZED, Json(body)).into_response();
        }
    }
    next.run(request).await
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn create(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionRef>)> {
    let Json(req) = body?;
    let s = state.manager.create(&req.patient_id, &req.task, &req.ablations)?;
    Ok((
        StatusCode::CREATED,
        Json(SessionRef {
            session_id: s.session_id,
            phase: s.phase,
        }),
    ))
}

async fn list(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(state.manager.list())
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionState>> {
    Ok(Json(state.manager.get_state(&id)?))
}

async fn run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<(StatusCode, Json<SessionRef>)> {
    state.manager.run(&id)?;
    let s = state.manager.get_state(&id)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(SessionRef {
            session_id: s.session_id,
            phase: s.phase,
        }),
    ))
}

async fn feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> ApiResult<Json<FinalOutput>> {
    let phase = state.manager.get_state(&id)?.phase;
    if phase != Phase::AwaitingReview {
        return Err(Error::IllegalTransition(format!(
            "feedback is accepted only while awaiting review; session `{id}` is {phase}"
        ))
        .into());
    }
    let Json(req) = body?;
    if let Some(sid) = &req.session_id {
        if sid != &id {
            return Err(Error::InvalidFeedback(format!("feedback names session `{sid}` but was posted to `{id}`")).into());
        }
    }
    let fb = Feedback {
        feedback_id: req.feedback_id,
        session_id: id.clone(),
        author_role: req.author_role.unwrap_or_else(|| "clinician".into()),
        directives: req.directives,
        submitted_at: state.manager.engine().clock().now(),
    };
    Ok(Json(state.manager.submit_feedback(&id, &fb)?))
}

async fn finalize(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<FinalOutput>> {
    Ok(Json(state.manager.finalize(&id)?))
}

async fn trace(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionTrace>> {
    Ok(Json(state.manager.trace(&id)?))
}
