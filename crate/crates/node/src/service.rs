//! HTTP and WebSocket facade over one agent's [`Host`](crate::host::Host).

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use choreo_core::{Decision, EngineError};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast;

use crate::host::{CaseSummary, HostError, Workspace};
use crate::runtime::Shared;

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<HostError> for ApiError {
    fn from(e: HostError) -> Self {
        let status = match &e {
            HostError::UnknownCase(_) => StatusCode::NOT_FOUND,
            HostError::Stale(_) => StatusCode::CONFLICT,
            HostError::Misrouted(_) => StatusCode::BAD_REQUEST,
            HostError::Engine(EngineError::CaseStarted(_)) => StatusCode::CONFLICT,
            HostError::Engine(EngineError::NotInitiator(_)) => StatusCode::FORBIDDEN,
            HostError::Engine(EngineError::WrongProduction { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            HostError::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/v1/agent/{id}/cases", get(list_cases).post(start_case))
        .route("/v1/agent/{id}/cases/{case}/workspace", get(workspace))
        .route("/v1/agent/{id}/cases/{case}/execute", post(execute))
        .route("/v1/agent/{id}/events", get(events))
        .layer(middleware::from_fn_with_state(shared.clone(), authenticate))
        .with_state(shared)
}

/// Bearer header, or `?token=` for WebSocket clients that cannot set headers.
async fn authenticate(
    State(shared): State<Arc<Shared>>,
    Query(query): Query<HashMap<String, String>>,
    request: Request,
    next: Next,
) -> Response {
    let Some(expected) = shared.token.as_deref() else {
        return next.run(request).await;
    };
    let header = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if header == Some(expected) || query.get("token").map(String::as_str) == Some(expected) {
        next.run(request).await
    } else {
        ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response()
    }
}

fn check_agent(shared: &Shared, id: &str) -> Result<(), ApiError> {
    if shared.agent == id {
        Ok(())
    } else {
        Err(ApiError(StatusCode::NOT_FOUND, format!("agent {id} is not hosted here")))
    }
}

async fn list_cases(State(shared): State<Arc<Shared>>, Path(id): Path<String>) -> ApiResult<Vec<CaseSummary>> {
    check_agent(&shared, &id)?;
    Ok(Json(shared.host().cases()))
}

#[derive(Deserialize)]
struct StartCase {
    case_id: String,
}

async fn start_case(
    State(shared): State<Arc<Shared>>,
    Path(id): Path<String>,
    Json(body): Json<StartCase>,
) -> Result<(StatusCode, Json<Workspace>), ApiError> {
    check_agent(&shared, &id)?;
    let ws = shared.act(|host| {
        let effects = host.start_case(&body.case_id)?;
        Ok((effects, host.workspace(&body.case_id)))
    })?;
    Ok((StatusCode::CREATED, Json(ws)))
}

async fn workspace(
    State(shared): State<Arc<Shared>>,
    Path((id, case)): Path<(String, String)>,
) -> ApiResult<Workspace> {
    check_agent(&shared, &id)?;
    Ok(Json(shared.host().workspace(&case)))
}

async fn execute(
    State(shared): State<Arc<Shared>>,
    Path((id, case)): Path<(String, String)>,
    Json(decision): Json<Decision>,
) -> ApiResult<Workspace> {
    check_agent(&shared, &id)?;
    let ws = shared.act(|host| {
        let effects = host.execute(&case, &decision)?;
        Ok((effects, host.workspace(&case)))
    })?;
    Ok(Json(ws))
}

async fn events(
    State(shared): State<Arc<Shared>>,
    Path(id): Path<String>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    check_agent(&shared, &id)?;
    let rx = shared.events.subscribe();
    Ok(upgrade.on_upgrade(move |socket| forward(socket, rx)))
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<choreo_core::TraceEvent>) {
    loop {
        match rx.recv().await {
            Ok(event) => {
                let Ok(text) = serde_json::to_string(&event) else { continue };
                if socket.send(WsMessage::Text(text.into())).await.is_err() {
                    return;
                }
            }
            Err(broadcast::error::RecvError::Lagged(n)) => tracing::warn!(skipped = n, "event stream lagged"),
            Err(broadcast::error::RecvError::Closed) => return,
        }
    }
}
