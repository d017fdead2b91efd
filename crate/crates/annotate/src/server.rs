//! `/api/v1` over HTTP with JSON bodies.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/api/v1/status` | |
//! | POST | `/api/v1/tasks` | `{image_ids, split}` |
//! | GET | `/api/v1/annotation/next` | |
//! | GET | `/api/v1/tasks/{id}/annotation` | |
//! | POST | `/api/v1/tasks/{id}/annotation` | `{annotator, selection, expression}` |
//! | GET | `/api/v1/tasks/{id}/no-target-suggestions` | `?k=5&seed=` |
//! | GET | `/api/v1/validation/next` | `?validator=` |
//! | POST | `/api/v1/tasks/{id}/validation` | `{validator, selection}` |
//! | POST | `/api/v1/tasks/{id}/reject` | `{validator, reason}` |
//! | POST | `/api/v1/tasks/{id}/requeue` | |
//! | POST | `/api/v1/export` | |
//! | GET | `/api/v1/images/{id}` | PNG |
//!
//! Everything else is served from `<project>/ui/` when that directory exists.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{FromRequest, FromRequestParts, Path as UrlPath, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use grex_core::dataset::io::image_path;
use grex_core::dataset::{AnnId, ImageId, Split};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::AnnotateError;
use crate::project::{AnnotationView, ExportSummary, NoTargetSuggestion, Project, ValidationView};
use crate::task::{TaskId, TaskState};

pub const EXPORT_DIR: &str = "export";
pub const UI_DIR: &str = "ui";

pub struct AppState {
    pub project: RwLock<Project>,
    /// Project directory; exports and UI assets live under it.
    pub dir: Option<PathBuf>,
}

pub type Shared = Arc<AppState>;

pub struct ApiError(pub AnnotateError);

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        ApiError(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            AnnotateError::UnknownTask(_) | AnnotateError::MissingImage(_) => StatusCode::NOT_FOUND,
            AnnotateError::WrongState { .. } => StatusCode::CONFLICT,
            AnnotateError::NotEligible { .. } => StatusCode::FORBIDDEN,
            AnnotateError::UnknownImage(_)
            | AnnotateError::UnknownInstance { .. }
            | AnnotateError::EmptyExpression
            | AnnotateError::EmptyPlayer
            | AnnotateError::EmptyPool { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotateError::CorruptLog { .. } | AnnotateError::Io { .. } | AnnotateError::Dataset(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let body = ErrorBody {
            error: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn malformed(status: StatusCode, message: String) -> Response {
    let body = ErrorBody {
        error: "malformed_request".to_string(),
        message,
    };
    (status, Json(body)).into_response()
}

/// `Json` whose rejections use the API error body.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = Response;

    async fn from_request(req: Request, state: &S) -> Result<Self, Response> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(r) => Err(malformed(r.status(), r.body_text())),
        }
    }
}

/// `Query` whose rejections use the API error body.
pub struct Params<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = Response;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Response> {
        match Query::<T>::from_request_parts(parts, state).await {
            Ok(Query(v)) => Ok(Params(v)),
            Err(r) => Err(malformed(r.status(), r.body_text())),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateTasks {
    pub image_ids: Vec<ImageId>,
    pub split: Split,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub task_ids: Vec<TaskId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitAnnotation {
    pub annotator: String,
    #[serde(default)]
    pub selection: BTreeSet<AnnId>,
    pub expression: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitValidation {
    pub validator: String,
    #[serde(default)]
    pub selection: BTreeSet<AnnId>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Reject {
    pub validator: String,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateReply {
    pub task_id: TaskId,
    pub state: TaskState,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Requeued {
    pub task_id: TaskId,
    pub replaces: TaskId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Status {
    pub tasks: BTreeMap<TaskState, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Next<T> {
    pub task: Option<T>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Suggestions {
    pub suggestions: Vec<NoTargetSuggestion>,
}

#[derive(Debug, Deserialize)]
pub struct SuggestQuery {
    #[serde(default = "default_k")]
    pub k: usize,
    pub seed: Option<u64>,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Deserialize)]
pub struct ValidatorQuery {
    pub validator: String,
}

fn read(state: &Shared) -> std::sync::RwLockReadGuard<'_, Project> {
    state.project.read().unwrap_or_else(|p| p.into_inner())
}

fn write(state: &Shared) -> std::sync::RwLockWriteGuard<'_, Project> {
    state.project.write().unwrap_or_else(|p| p.into_inner())
}

async fn status(State(s): State<Shared>) -> Json<Status> {
    Json(Status {
        tasks: read(&s).board().count_by_state(),
    })
}

async fn create_tasks(State(s): State<Shared>, Body(req): Body<CreateTasks>) -> ApiResult<Created> {
    let task_ids = write(&s).create_tasks(&req.image_ids, req.split)?;
    Ok(Json(Created { task_ids }))
}

async fn next_annotation(State(s): State<Shared>) -> Json<Next<AnnotationView>> {
    Json(Next {
        task: read(&s).next_annotation(),
    })
}

async fn get_annotation(State(s): State<Shared>, UrlPath(id): UrlPath<TaskId>) -> ApiResult<AnnotationView> {
    Ok(Json(read(&s).annotation_view(id)?))
}

async fn submit_annotation(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<TaskId>,
    Body(req): Body<SubmitAnnotation>,
) -> ApiResult<StateReply> {
    let state = write(&s).submit_annotation(id, &req.annotator, req.selection, &req.expression)?;
    Ok(Json(StateReply { task_id: id, state }))
}

async fn suggest(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<TaskId>,
    Params(q): Params<SuggestQuery>,
) -> ApiResult<Suggestions> {
    let suggestions = read(&s).suggest_no_target(id, q.k, q.seed.unwrap_or(id))?;
    Ok(Json(Suggestions { suggestions }))
}

async fn next_validation(State(s): State<Shared>, Params(q): Params<ValidatorQuery>) -> ApiResult<Next<ValidationView>> {
    if q.validator.trim().is_empty() {
        return Err(ApiError(AnnotateError::EmptyPlayer));
    }
    Ok(Json(Next {
        task: read(&s).next_validation(&q.validator),
    }))
}

async fn submit_validation(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<TaskId>,
    Body(req): Body<SubmitValidation>,
) -> ApiResult<StateReply> {
    let state = write(&s).submit_validation(id, &req.validator, req.selection)?;
    Ok(Json(StateReply { task_id: id, state }))
}

async fn reject(State(s): State<Shared>, UrlPath(id): UrlPath<TaskId>, Body(req): Body<Reject>) -> ApiResult<StateReply> {
    let state = write(&s).reject(id, &req.validator, &req.reason)?;
    Ok(Json(StateReply { task_id: id, state }))
}

async fn requeue(State(s): State<Shared>, UrlPath(id): UrlPath<TaskId>) -> ApiResult<Requeued> {
    let task_id = write(&s).requeue(id)?;
    Ok(Json(Requeued { task_id, replaces: id }))
}

async fn export(State(s): State<Shared>) -> Result<Json<ExportSummary>, ApiError> {
    let Some(dir) = &s.dir else {
        return Err(ApiError(AnnotateError::io(
            EXPORT_DIR,
            std::io::Error::new(std::io::ErrorKind::Unsupported, "in-memory project has no export directory"),
        )));
    };
    Ok(Json(read(&s).export(&dir.join(EXPORT_DIR))?))
}

async fn image(State(s): State<Shared>, UrlPath(name): UrlPath<String>) -> Result<Response, ApiError> {
    let id: ImageId = name
        .trim_end_matches(".png")
        .parse()
        .map_err(|_| ApiError(AnnotateError::MissingImage(0)))?;
    let root = {
        let p = read(&s);
        if !p.catalog.images.contains_key(&id) {
            return Err(ApiError(AnnotateError::MissingImage(id)));
        }
        p.catalog.root.clone()
    };
    let path = root.map(|r| image_path(&r, id)).ok_or(ApiError(AnnotateError::MissingImage(id)))?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError(AnnotateError::MissingImage(id)))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/status", get(status))
        .route("/tasks", post(create_tasks))
        .route("/annotation/next", get(next_annotation))
        .route("/tasks/{id}/annotation", get(get_annotation).post(submit_annotation))
        .route("/tasks/{id}/no-target-suggestions", get(suggest))
        .route("/validation/next", get(next_validation))
        .route("/tasks/{id}/validation", post(submit_validation))
        .route("/tasks/{id}/reject", post(reject))
        .route("/tasks/{id}/requeue", post(requeue))
        .route("/export", post(export))
        .route("/images/{name}", get(image));
    let ui = state.dir.as_ref().map(|d| d.join(UI_DIR)).filter(|d| d.is_dir());
    let app = Router::new().nest("/api/v1", api).with_state(state);
    match ui {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("project directory {0} is not writable")]
    Unwritable(PathBuf),
    #[error(transparent)]
    Project(#[from] AnnotateError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Open the project and bind; the returned listener is ready to serve.
pub async fn bind(dir: &Path, addr: SocketAddr) -> Result<(tokio::net::TcpListener, Shared), ServeError> {
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|_| ServeError::Unwritable(dir.to_path_buf()))?;
    let _ = std::fs::remove_file(&probe);
    let project = Project::open(dir)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let state = Arc::new(AppState {
        project: RwLock::new(project),
        dir: Some(dir.to_path_buf()),
    });
    Ok((listener, state))
}

/// Serve until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Shared) -> Result<(), ServeError> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
