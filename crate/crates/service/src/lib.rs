//! HTTP/JSON review service.
//!
//! Routes (all responses carry `schema_version`):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/v1/health` | liveness |
//! | POST | `/v1/query` | question answering with assessments and summary |
//! | GET | `/v1/candidates` | filtered, paginated candidate list |
//! | GET | `/v1/candidates/{id}` | one candidate |
//! | POST | `/v1/candidates/{id}/decision` | accept, reject or reset |
//! | POST | `/v1/candidates/bulk-decision` | decision for all pending candidates at a level |
//! | GET | `/v1/stats` | counts and decision throughput |
//! | POST | `/v1/export` | writes refined mappings to the configured path |

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ontorag_core::llm::ChatProvider;
use ontorag_core::nl2sparql::{ExampleBank, Nl2SparqlError};
use ontorag_core::pipeline::{self, PipelineConfig, PipelineError};
use ontorag_core::review::{Action, CandidateFilter, ReviewError, ReviewModel, Status, DEFAULT_PAGE_SIZE};
use ontorag_core::{MappingLevel, Store};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SCHEMA_VERSION: &str = "1";

/// Everything a request handler needs.
pub struct ServiceContext {
    pub store: Arc<Store>,
    pub review: Arc<ReviewModel>,
    pub provider: Arc<dyn ChatProvider>,
    pub bank: ExampleBank,
    pub pipeline: PipelineConfig,
    /// Grade unassessed candidates on the first listing.
    pub assess_on_list: bool,
    pub export_path: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    ctx: Arc<ServiceContext>,
    assessed: Arc<AtomicBool>,
}

pub fn router(ctx: ServiceContext) -> Router {
    let state = AppState {
        ctx: Arc::new(ctx),
        assessed: Arc::new(AtomicBool::new(false)),
    };
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/query", post(query))
        .route("/v1/candidates", get(list_candidates))
        .route("/v1/candidates/bulk-decision", post(bulk_decision))
        .route("/v1/candidates/{id}", get(get_candidate))
        .route("/v1/candidates/{id}/decision", post(decide))
        .route("/v1/stats", get(stats))
        .route("/v1/export", post(export))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    ctx: ServiceContext,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(ctx))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        if let Err(e) = tokio::signal::ctrl_c().await {
            log::error!("cannot listen for Ctrl-C: {e}");
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                log::error!("cannot listen for SIGTERM: {e}");
                std::future::pending::<()>().await;
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutdown requested");
}

fn ok(body: impl Serialize) -> Response {
    let mut value = serde_json::to_value(body).expect("response serializes");
    match value.as_object_mut() {
        Some(map) => {
            map.insert("schema_version".into(), SCHEMA_VERSION.into());
        }
        None => value = json!({ "schema_version": SCHEMA_VERSION, "data": value }),
    }
    (StatusCode::OK, Json(value)).into_response()
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    extra: Option<(&'static str, Value)>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            extra: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "kind": self.kind, "message": self.message },
        });
        if let Some((key, value)) = self.extra {
            body[key] = value;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        match e {
            ReviewError::UnknownCandidate(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_candidate", e.to_string())
            }
            ReviewError::InvalidInput(_) => ApiError::bad_request(e.to_string()),
            other => {
                log::error!("review model failure: {other}");
                ApiError::internal(other.to_string())
            }
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let trace = e.trace().map(|t| serde_json::to_value(t).expect("trace serializes"));
        let mut err = if e.provider_error().is_some() {
            ApiError::new(StatusCode::BAD_GATEWAY, "provider_failure", e.to_string())
        } else {
            match &e {
                PipelineError::Generation(Nl2SparqlError::ExhaustedAttempts(_)) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "exhausted_attempts", e.to_string())
                }
                PipelineError::Generation(Nl2SparqlError::Execution { .. }) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "execution_failed", e.to_string())
                }
                PipelineError::Assessment(_) | PipelineError::Summary(_) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "reasoning_failed", e.to_string())
                }
                _ => ApiError::internal(e.to_string()),
            }
        };
        err.extra = trace.map(|t| ("trace", t));
        err
    }
}

fn body<T: DeserializeOwned>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {}", e.body_text())))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health() -> Response {
    ok(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct QueryBody {
    question: String,
}

async fn query(
    State(state): State<AppState>,
    payload: Result<Json<QueryBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let QueryBody { question } = body(payload)?;
    if question.trim().is_empty() {
        return Err(ApiError::bad_request("question must not be empty"));
    }
    let ctx = state.ctx.clone();
    let outcome = blocking(move || {
        pipeline::run_query(&question, &ctx.store, ctx.provider.as_ref(), &ctx.bank, &ctx.pipeline)
            .map_err(ApiError::from)
    })
    .await?;
    Ok(ok(outcome))
}

fn parse_param<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    match params.get(key).map(|v| v.trim()).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("invalid {key}: {v:?}"))),
    }
}

async fn list_candidates(
    State(state): State<AppState>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let filter = CandidateFilter {
        level: parse_param::<MappingLevel>(&params, "level")?,
        status: parse_param::<Status>(&params, "status")?,
    };
    let page = parse_param::<usize>(&params, "page")?.unwrap_or(1);
    let page_size = parse_param::<usize>(&params, "page_size")?.unwrap_or(DEFAULT_PAGE_SIZE);
    let ctx = state.ctx.clone();
    let assessed = state.assessed.clone();
    let listing = blocking(move || {
        if ctx.assess_on_list && !assessed.swap(true, Ordering::SeqCst) {
            match ctx.review.assess_missing(
                &ctx.pipeline.strategy,
                ctx.provider.as_ref(),
                ctx.pipeline.workers.max(1),
            ) {
                Ok(run) => log::info!(
                    "assessed {} candidates ({} skipped, {} failed)",
                    run.assessed,
                    run.skipped,
                    run.failures.len()
                ),
                Err(e) => log::warn!("candidate assessment failed: {e}"),
            }
        }
        Ok(ctx.review.list(&filter, page, page_size)?)
    })
    .await?;
    Ok(ok(listing))
}

async fn get_candidate(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let candidate = state.ctx.review.get(&id).ok_or(ReviewError::UnknownCandidate(id))?;
    Ok(ok(json!({ "candidate": candidate })))
}

#[derive(Deserialize)]
struct DecisionBody {
    action: String,
    reviewer: String,
    #[serde(default)]
    note: Option<String>,
}

async fn decide(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let action: Action = b.action.parse()?;
    let review = state.ctx.review.clone();
    let candidate = blocking(move || Ok(review.decide(&id, action, &b.reviewer, b.note)?)).await?;
    Ok(ok(json!({ "candidate": candidate })))
}

#[derive(Deserialize)]
struct BulkBody {
    level: String,
    action: String,
    reviewer: String,
    #[serde(default)]
    note: Option<String>,
}

async fn bulk_decision(
    State(state): State<AppState>,
    payload: Result<Json<BulkBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let level: MappingLevel = b
        .level
        .parse()
        .map_err(|_| ApiError::bad_request(format!("invalid level: {:?}", b.level)))?;
    let action: Action = b.action.parse()?;
    let review = state.ctx.review.clone();
    let affected = blocking(move || Ok(review.bulk_decide(level, action, &b.reviewer, b.note)?)).await?;
    Ok(ok(json!({ "affected": affected })))
}

async fn stats(State(state): State<AppState>) -> Response {
    ok(state.ctx.review.stats())
}

async fn export(State(state): State<AppState>) -> Result<Response, ApiError> {
    let Some(path) = state.ctx.export_path.clone() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "export_not_configured",
            "no export path configured for this service",
        ));
    };
    let review = state.ctx.review.clone();
    let out = path.clone();
    let statements = blocking(move || Ok(review.export_refined(&out)?)).await?;
    Ok(ok(json!({ "statements": statements, "path": path })))
}
