//! JSON API over a workspace: matching, corpus stats, issue listing and
//! triage recording.
//!
//! | method | path          | body / query                               |
//! |--------|---------------|--------------------------------------------|
//! | POST   | `/api/match`  | [`MatchRequest`]                           |
//! | POST   | `/api/triage` | [`TriageRequest`], answers 201             |
//! | GET    | `/api/stats`  |                                            |
//! | GET    | `/api/issues` | `?query=<substring>&page=<n>`, 50 per page |
//!
//! Every response, including errors, is `application/json`. Errors are
//! [`ApiError`] objects. There is no authentication; bind to localhost.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::config::default_provider;
use crate::corpus::{record_triage, Decision, TriageDecision};
use crate::error::Error;
use crate::hash::content_hash;
use crate::matcher::{MatchOptions, Matcher};
use crate::model::Review;
use crate::view::{list_issues, run_match, stats, MatchRequest};

/// Error body of every non-2xx response.
///
/// `code` is always one of [`API_ERROR_CODES`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn invalid_body(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", message)
    }
}

/// Every `code` an [`ApiError`] can carry.
pub const API_ERROR_CODES: &[&str] = &[
    "invalid_body",
    "invalid_argument",
    "empty_text",
    "empty_input",
    "parse_error",
    "unsupported_language",
    "unknown_issue",
    "unknown_review",
    "unknown_provider",
    "no_embeddings",
    "dimension_mismatch",
    "provider_mismatch",
    "duplicate_id",
    "enrichment_unavailable",
    "backend_unavailable",
    "network_failure",
    "auth_failure",
    "rate_limited",
    "workspace_locked",
    "not_found",
    "method_not_allowed",
    "storage_error",
    "internal_error",
];

/// HTTP status for a library error.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::InvalidArgument(_)
        | Error::EmptyText
        | Error::EmptyInput
        | Error::Parse { .. }
        | Error::UnsupportedLanguage(_) => StatusCode::BAD_REQUEST,
        Error::UnknownIssue(_) | Error::UnknownReview(_) => StatusCode::NOT_FOUND,
        Error::UnknownProvider(_)
        | Error::NoEmbeddings(_)
        | Error::DimensionMismatch { .. }
        | Error::ProviderMismatch { .. }
        | Error::DuplicateId(_) => StatusCode::CONFLICT,
        Error::ProviderUnavailable(_)
        | Error::BackendUnavailable(_)
        | Error::Network(_)
        | Error::AuthFailure(_)
        | Error::RateLimited { .. } => StatusCode::BAD_GATEWAY,
        Error::WorkspaceLocked(_) => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = status_for(&e);
        let code = match status {
            StatusCode::INTERNAL_SERVER_ERROR if !matches!(e, Error::Io(_) | Error::Json(_)) => "internal_error",
            _ => e.code(),
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = serde_json::to_string(&self).unwrap_or_else(|_| "{}".into());
        json_response(status, body)
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn ok_json<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    let body = serde_json::to_string(value).map_err(|e| ApiError::from(Error::Json(e)))?;
    Ok(json_response(status, body))
}

/// Body of `POST /api/triage`. Exactly one of `review_text` and `review_id`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageRequest {
    #[serde(default)]
    pub review_text: Option<String>,
    #[serde(default)]
    pub review_id: Option<String>,
    /// `linked`, `new_issue` or `dismissed`.
    pub decision: String,
    #[serde(default)]
    pub issue_iid: Option<u64>,
    #[serde(default)]
    pub decided_by: Option<String>,
    /// Language of `review_text`; defaults to `en`.
    #[serde(default)]
    pub lang: Option<String>,
}

impl TriageRequest {
    fn decision(&self) -> std::result::Result<Decision, ApiError> {
        let mismatch = |m: &str| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", m);
        match (self.decision.as_str(), self.issue_iid) {
            ("linked", Some(iid)) => Ok(Decision::Linked { issue_iid: iid }),
            ("linked", None) => Err(mismatch("decision `linked` requires issue_iid")),
            ("new_issue" | "dismissed", Some(_)) => Err(mismatch("issue_iid is only allowed with `linked`")),
            ("new_issue", None) => Ok(Decision::NewIssueNeeded),
            ("dismissed", None) => Ok(Decision::Dismissed),
            (other, _) => Err(mismatch(&format!(
                "unknown decision `{other}`; expected linked, new_issue or dismissed"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed CORS origins; `*` allows any. Empty disables CORS headers.
    pub cors_origins: Vec<String>,
    /// Directory served for non-API paths (the triage UI build).
    pub static_dir: Option<PathBuf>,
}

struct Inner {
    matcher: Matcher,
    defaults: MatchOptions,
    writes: Mutex<()>,
}

#[derive(Clone)]
struct AppState(Arc<Inner>);

async fn blocking<F>(f: F) -> ApiResult
where
    F: FnOnce() -> ApiResult + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string())))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid_body(e.to_string()))
}

async fn match_handler(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let request: MatchRequest = parse_body(&body)?;
    blocking(move || {
        let inner = &state.0;
        let response = run_match(&inner.matcher, &request, &inner.defaults)?;
        ok_json(StatusCode::OK, &response)
    })
    .await
}

async fn triage_handler(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let request: TriageRequest = parse_body(&body)?;
    let decision = request.decision()?;
    blocking(move || {
        let inner = &state.0;
        let ws = inner.matcher.workspace();
        let _serial = inner.writes.lock().expect("write mutex");
        let new_review = match (&request.review_id, &request.review_text) {
            (Some(id), None) => {
                ws.review(id)?;
                None
            }
            (None, Some(text)) => {
                let id = format!("r-{}", content_hash(text));
                match ws.review(&id) {
                    Ok(_) => None,
                    Err(Error::UnknownReview(_)) => {
                        let mut review = Review::new(id, text.clone(), request.lang.clone().unwrap_or_else(|| "en".into()))?;
                        review.source = "triage".into();
                        Some(review)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            _ => return Err(ApiError::invalid_body("give exactly one of review_id and review_text")),
        };
        if let Decision::Linked { issue_iid } = decision {
            if !ws.issue_map()?.contains_key(&issue_iid) {
                return Err(Error::UnknownIssue(issue_iid).into());
            }
        }
        let lock = ws.lock()?;
        let review_id = match new_review {
            Some(review) => {
                let id = review.id.clone();
                let mut all = ws.reviews()?;
                all.push(review);
                ws.save_reviews(&lock, all)?;
                id
            }
            None => request.review_id.clone().unwrap_or_default(),
        };
        let stored = record_triage(
            ws,
            &lock,
            TriageDecision {
                review_id,
                decision,
                decided_by: request.decided_by.clone().unwrap_or_else(|| "api".into()),
                decided_at: Utc::now(),
            },
        )?;
        ok_json(StatusCode::CREATED, &stored)
    })
    .await
}

async fn stats_handler(State(state): State<AppState>) -> ApiResult {
    blocking(move || {
        let m = &state.0.matcher;
        ok_json(StatusCode::OK, &stats(m.workspace(), m.registry())?)
    })
    .await
}

async fn issues_handler(
    State(state): State<AppState>,
    query: std::result::Result<Query<HashMap<String, String>>, QueryRejection>,
) -> ApiResult {
    let Query(params) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_argument", e.body_text()))?;
    let page = match params.get("page").map(|p| p.trim()) {
        None | Some("") => 1,
        Some(p) => p
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_argument", format!("bad page `{p}`")))?,
    };
    blocking(move || {
        let ws = state.0.matcher.workspace();
        ok_json(StatusCode::OK, &list_issues(ws, params.get("query").map(String::as_str), page)?)
    })
    .await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

/// Builds the application. `defaults` supplies the provider, k and the
/// other knobs a request leaves out.
pub fn router(matcher: Matcher, defaults: MatchOptions, config: &ServiceConfig) -> Router {
    let state = AppState(Arc::new(Inner {
        matcher,
        defaults,
        writes: Mutex::new(()),
    }));
    let api = Router::new()
        .route("/match", post(match_handler))
        .route("/triage", post(triage_handler))
        .route("/stats", get(stats_handler))
        .route("/issues", get(issues_handler))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    let mut app = Router::new().nest("/api", api);
    app = match &config.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(not_found),
    };
    if !config.cors_origins.is_empty() {
        let origins = if config.cors_origins.iter().any(|o| o == "*") {
            AllowOrigin::any()
        } else {
            AllowOrigin::list(config.cors_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
        };
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origins)
                .allow_methods(Any)
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    app
}

/// Default knobs for a service over `matcher`'s workspace.
pub fn default_options(matcher: &Matcher) -> MatchOptions {
    MatchOptions {
        provider: default_provider(matcher.workspace()),
        ..MatchOptions::default()
    }
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
