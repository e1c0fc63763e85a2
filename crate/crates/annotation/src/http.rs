//! JSON API over [`AnnotationService`].

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pic_core::promptkit::TemplateSet;
use pic_core::ToxicityLabel;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::error::AnnotationError;
use crate::service::{AnnotationService, AnnotationSubmission, ExportKind, ReviewEdit};
use crate::state::{PairState, TaskKind};

#[derive(Clone, Default)]
pub struct HttpOptions {
    /// Shared bearer token; `None` leaves the API open.
    pub token: Option<String>,
    /// Directory with the built UI bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
}

type Shared = Arc<AnnotationService>;

impl IntoResponse for AnnotationError {
    fn into_response(self) -> Response {
        use AnnotationError::*;
        let status = match &self {
            UnknownPair(_) | NoChain(_) => StatusCode::NOT_FOUND,
            UnknownAnnotator(_) | ReviewerIsAnnotator { .. } => StatusCode::FORBIDDEN,
            NoLease { .. }
            | LeaseExpired { .. }
            | LabelConflict { .. }
            | PairComplete(_)
            | ChainExists(_)
            | VersionConflict { .. } => StatusCode::CONFLICT,
            ChainNotAllowed(_) | IncompleteChain(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Invalid(_) | Core(_) => StatusCode::BAD_REQUEST,
            Io { .. } | CorruptLog { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %self, "annotation store failure");
        }
        let body = json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

fn bad_request(message: String) -> Response {
    AnnotationError::Invalid(message).into_response()
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
    #[serde(default)]
    kind: Option<TaskKind>,
}

async fn next_task(State(svc): State<Shared>, Query(q): Query<NextQuery>) -> Response {
    match svc.next_task(&q.annotator, q.kind.unwrap_or(TaskKind::Label)) {
        Ok(Some(task)) => Json(task).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn submit(State(svc): State<Shared>, Json(sub): Json<AnnotationSubmission>) -> Response {
    match svc.submit(&sub) {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn review(State(svc): State<Shared>, Json(edit): Json<ReviewEdit>) -> Response {
    match svc.review(&edit) {
        Ok(outcome) => Json(outcome).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    state: Option<String>,
    #[serde(default)]
    kind: Option<String>,
}

async fn export(State(svc): State<Shared>, Query(q): Query<ExportQuery>) -> Response {
    let filter = match q.state.as_deref().filter(|s| !s.is_empty() && *s != "all") {
        None => None,
        Some(s) => match s.parse::<PairState>() {
            Ok(st) => Some(st),
            Err(e) => return bad_request(e),
        },
    };
    let kind = match q.kind.as_deref().unwrap_or("pairs").parse::<ExportKind>() {
        Ok(k) => k,
        Err(e) => return bad_request(e),
    };
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"))],
        svc.export(kind, filter),
    )
        .into_response()
}

async fn pair(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    match svc.pair_view(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Serialize)]
struct OptionEntry {
    letter: char,
    text: &'static str,
    label: ToxicityLabel,
}

async fn options() -> Json<Vec<OptionEntry>> {
    Json(
        ToxicityLabel::ALL
            .iter()
            .map(|&l| OptionEntry {
                letter: l.letter(),
                text: l.option_text(),
                label: l,
            })
            .collect(),
    )
}

async fn steps() -> Json<Vec<String>> {
    Json(TemplateSet::bundled().step_names)
}

async fn require_token(State(token): State<Arc<String>>, req: Request, next: Next) -> Response {
    let expected = format!("Bearer {token}");
    let ok = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v == expected);
    if ok {
        next.run(req).await
    } else {
        (
            StatusCode::UNAUTHORIZED,
            Json(json!({ "error": "unauthorized", "message": "missing or wrong bearer token" })),
        )
            .into_response()
    }
}

pub fn router(svc: Shared, opts: HttpOptions) -> Router {
    let mut api = Router::new()
        .route("/tasks/next", get(next_task))
        .route("/submissions", post(submit))
        .route("/reviews", post(review))
        .route("/export", get(export))
        .route("/pairs/{id}", get(pair))
        .route("/config/options", get(options))
        .route("/config/steps", get(steps))
        .with_state(svc);
    if let Some(token) = opts.token {
        api = api.layer(middleware::from_fn_with_state(Arc::new(token), require_token));
    }
    match opts.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind and serve until the task is dropped.
pub async fn serve(addr: std::net::SocketAddr, svc: Shared, opts: HttpOptions) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(svc, opts)).await
}
