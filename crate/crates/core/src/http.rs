//! JSON-over-HTTP API for [`ProjectService`].
//!
//! | method | path | auth |
//! |---|---|---|
//! | POST | `/api/accounts` | - |
//! | POST | `/api/login` | - |
//! | POST | `/api/projects` | bearer |
//! | GET | `/api/projects` | bearer |
//! | DELETE | `/api/projects/{id}` | bearer |
//! | GET | `/api/projects/{id}/export.csv` | bearer |
//! | GET | `/a/{link_key}` | - |
//! | POST | `/api/sessions` | - |
//! | POST | `/api/sessions/{id}/videos/{i}/entries` | - |
//! | POST | `/api/sessions/{id}/videos/{i}/finish` | - |
//!
//! Errors come back as `{"error": {"code": ..., "message": ..., "field": ...}}`
//! where `code` names the failing condition, e.g. `StaleVideoIndex`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, FromRequestParts, Path, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::service::{Entry, ProjectConfig, ProjectService, ServiceError};
use crate::store::{ProjectId, SessionId};

type Shared = Arc<ProjectService>;

/// Error response wrapper.
#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError(ServiceError::ValidationError {
            field: "body".into(),
            message: rejection.body_text(),
        })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::Unauthenticated => StatusCode::UNAUTHORIZED,
            ServiceError::Unauthorized => StatusCode::FORBIDDEN,
            ServiceError::ValidationError { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::UnknownProject(_) | ServiceError::UnknownLink(_) | ServiceError::UnknownSession(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::StaleVideoIndex { .. } => StatusCode::CONFLICT,
            ServiceError::MalformedEventStream(_) => StatusCode::BAD_REQUEST,
            ServiceError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let field = match &self.0 {
            ServiceError::ValidationError { field, .. } => Some(field.clone()),
            _ => None,
        };
        let body = json!({
            "error": {
                "code": self.0.code(),
                "message": self.0.to_string(),
                "field": field,
            }
        });
        (status, Json(body)).into_response()
    }
}

/// JSON body whose rejections use the API error format.
#[derive(Debug, FromRequest)]
#[from_request(via(Json), rejection(ApiError))]
pub struct Body<T>(pub T);

/// Account resolved from an `Authorization: Bearer` header.
#[derive(Debug, Clone)]
pub struct Researcher(pub String);

impl FromRequestParts<Shared> for Researcher {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, service: &Shared) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ServiceError::Unauthenticated)?;
        Ok(Researcher(service.authenticate(token.trim())?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSession {
    pub link_key: String,
    #[serde(default)]
    pub participant_id: Option<String>,
    #[serde(default)]
    pub test_mode: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryBatch {
    pub entries: Vec<Entry>,
}

fn project_id(raw: &str) -> Result<ProjectId, ServiceError> {
    raw.parse()
        .map(ProjectId)
        .map_err(|_| ServiceError::UnknownProject(ProjectId(0)))
}

fn session_path(raw: &(String, String)) -> Result<(SessionId, usize), ServiceError> {
    let session = raw
        .0
        .parse()
        .map(SessionId)
        .map_err(|_| ServiceError::UnknownSession(raw.0.clone()))?;
    let index = raw.1.parse().map_err(|_| ServiceError::ValidationError {
        field: "video_index".into(),
        message: format!("`{}` is not a video index", raw.1),
    })?;
    Ok((session, index))
}

async fn register(State(s): State<Shared>, Body(c): Body<Credentials>) -> Result<impl IntoResponse, ApiError> {
    s.register(&c.username, &c.password)?;
    Ok((StatusCode::CREATED, Json(json!({ "username": c.username }))))
}

async fn login(State(s): State<Shared>, Body(c): Body<Credentials>) -> Result<impl IntoResponse, ApiError> {
    let token = s.login(&c.username, &c.password)?;
    Ok(Json(json!({ "token": token })))
}

async fn create_project(
    State(s): State<Shared>,
    Researcher(owner): Researcher,
    Body(config): Body<ProjectConfig>,
) -> Result<impl IntoResponse, ApiError> {
    let created = s.create_project(&owner, config)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_projects(State(s): State<Shared>, Researcher(owner): Researcher) -> impl IntoResponse {
    Json(s.project_summary(&owner))
}

async fn delete_project(
    State(s): State<Shared>,
    Researcher(owner): Researcher,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    s.delete_project(&owner, project_id(&id)?)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn export(
    State(s): State<Shared>,
    Researcher(owner): Researcher,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let bytes = s.export_csv(&owner, project_id(&id)?)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes))
}

async fn landing(State(s): State<Shared>, Path(key): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(s.landing(&key)?))
}

async fn start_session(State(s): State<Shared>, Body(req): Body<StartSession>) -> Result<impl IntoResponse, ApiError> {
    let descriptor = s.start_session(&req.link_key, req.participant_id.as_deref(), req.test_mode)?;
    Ok((StatusCode::CREATED, Json(descriptor)))
}

async fn append_entries(
    State(s): State<Shared>,
    Path(raw): Path<(String, String)>,
    Body(batch): Body<EntryBatch>,
) -> Result<impl IntoResponse, ApiError> {
    let (session, index) = session_path(&raw)?;
    Ok(Json(s.append_entries(session, index, &batch.entries)?))
}

async fn finish_video(State(s): State<Shared>, Path(raw): Path<(String, String)>) -> Result<impl IntoResponse, ApiError> {
    let (session, index) = session_path(&raw)?;
    Ok(Json(s.finish_video(session, index)?))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/accounts", post(register))
        .route("/api/login", post(login))
        .route("/api/projects", post(create_project).get(list_projects))
        .route("/api/projects/{id}", delete(delete_project))
        .route("/api/projects/{id}/export.csv", get(export))
        .route("/a/{link_key}", get(landing))
        .route("/api/sessions", post(start_session))
        .route("/api/sessions/{id}/videos/{index}/entries", post(append_entries))
        .route("/api/sessions/{id}/videos/{index}/finish", post(finish_video))
        .with_state(service)
}

/// Serves the API until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service)).await
}
