//! HTTP front end: `/api/detect`, the playground endpoints and `/api/health`,
//! plus static hosting of a web UI directory.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mgtd_core::corpus::load_manifest;
use mgtd_core::neural::load_model;
use mgtd_core::service::{self, DetectRequest, GuessRequest, PlaygroundPool, ServiceError, SessionStore};
use mgtd_core::ClassifierModel;
use serde::Deserialize;
use tower_http::services::ServeDir;

pub const DEFAULT_PORT: u16 = 7860;

/// Shared handler state. The model slot is filled once loading finishes;
/// until then `/api/detect` answers `not_loaded` and health reports
/// `loaded: false`.
#[derive(Clone)]
pub struct AppState {
    model: Arc<OnceLock<Arc<ClassifierModel>>>,
    sessions: Arc<SessionStore>,
}

impl AppState {
    pub fn new(sessions: SessionStore) -> Self {
        AppState { model: Arc::new(OnceLock::new()), sessions: Arc::new(sessions) }
    }

    /// Returns false if a model was already installed.
    pub fn install_model(&self, model: ClassifierModel) -> bool {
        self.model.set(Arc::new(model)).is_ok()
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }
}

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::Empty | ServiceError::TooShort { .. } | ServiceError::TooLong { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::NotLoaded => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Exhausted => StatusCode::GONE,
            ServiceError::UnknownSession(_) | ServiceError::UnknownItem(_) => StatusCode::NOT_FOUND,
            ServiceError::AlreadyScored(_) => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
        };
        (status, Json(self.0.body())).into_response()
    }
}

fn bad_body(e: impl std::fmt::Display) -> ApiError {
    ApiError(ServiceError::BadRequest(e.to_string()))
}

async fn detect(
    State(state): State<AppState>,
    body: Result<Json<DetectRequest>, JsonRejection>,
) -> Result<Json<service::DetectResponse>, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let model = state.model.get().cloned().ok_or(ServiceError::NotLoaded)?;
    let result = tokio::task::spawn_blocking(move || service::detect(&model, &req.text))
        .await
        .map_err(|e| bad_body(format!("detection task failed: {e}")))?;
    Ok(Json(result?))
}

#[derive(Debug, Default, Deserialize)]
struct SessionRequest {
    #[serde(default)]
    domain: Option<String>,
}

async fn create_session(
    State(state): State<AppState>,
    body: Option<Json<SessionRequest>>,
) -> Result<Json<service::SessionInfo>, ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let id = uuid::Uuid::new_v4().simple().to_string();
    Ok(Json(state.sessions.create(id, req.domain)?))
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: String,
}

async fn sample(
    State(state): State<AppState>,
    query: Result<Query<SessionQuery>, QueryRejection>,
) -> Result<Json<service::SampleResponse>, ApiError> {
    let Query(q) = query.map_err(bad_body)?;
    Ok(Json(state.sessions.sample(&q.session)?))
}

async fn guess(
    State(state): State<AppState>,
    body: Result<Json<GuessRequest>, JsonRejection>,
) -> Result<Json<service::GuessResponse>, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    Ok(Json(state.sessions.guess(&req)?))
}

async fn score(
    State(state): State<AppState>,
    query: Result<Query<SessionQuery>, QueryRejection>,
) -> Result<Json<service::SessionInfo>, ApiError> {
    let Query(q) = query.map_err(bad_body)?;
    Ok(Json(state.sessions.info(&q.session)?))
}

async fn health(State(state): State<AppState>) -> Json<service::Health> {
    Json(service::health(state.model.get().is_some(), state.sessions.pool().len()))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/detect", post(detect))
        .route("/api/playground/session", post(create_session))
        .route("/api/playground/sample", get(sample))
        .route("/api/playground/guess", post(guess))
        .route("/api/playground/score", get(score))
        .route("/api/health", get(health))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub model: PathBuf,
    /// Manifest whose test split feeds the playground.
    pub pool_manifest: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub session_ttl: Duration,
    /// Sessions are restored from here at startup and written on shutdown.
    pub snapshot: Option<PathBuf>,
    pub seed: u64,
}

impl ServerConfig {
    pub fn new(model: PathBuf) -> Self {
        ServerConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            model,
            pool_manifest: None,
            static_dir: None,
            session_ttl: Duration::from_secs(6 * 3600),
            snapshot: None,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub enum ServeError {
    Data(String),
    Io(std::io::Error),
}

impl std::fmt::Display for ServeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServeError::Data(m) => write!(f, "{m}"),
            ServeError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ServeError {}

/// Serves until Ctrl-C. The model loads in the background; until it is in
/// place detection answers `not_loaded`.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let pool = match &config.pool_manifest {
        Some(path) => {
            let m = load_manifest(path).map_err(|e| ServeError::Data(format!("{}: {e}", path.display())))?;
            PlaygroundPool::from_manifest(&m)
        }
        None => PlaygroundPool::default(),
    };
    if pool.is_empty() {
        tracing::warn!("playground pool is empty; sample requests will report exhausted");
    }
    let store = SessionStore::new(Arc::new(pool), config.seed, config.session_ttl);
    if let Some(path) = config.snapshot.as_ref().filter(|p| p.exists()) {
        let n = store.load_snapshot(path).map_err(ServeError::Io)?;
        tracing::info!(sessions = n, "restored playground sessions");
    }
    let state = AppState::new(store);

    let loader = state.clone();
    let model_path = config.model.clone();
    tokio::task::spawn_blocking(move || match load_model(&model_path) {
        Ok(model) => {
            loader.install_model(model);
            tracing::info!(path = %model_path.display(), "model loaded");
        }
        Err(e) => tracing::error!(path = %model_path.display(), "model failed to load: {e}"),
    });

    let evictor = state.clone();
    let ttl = config.session_ttl;
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(ttl.clamp(Duration::from_secs(1), Duration::from_secs(60)));
        loop {
            tick.tick().await;
            let n = evictor.sessions().evict_idle();
            if n > 0 {
                tracing::debug!(evicted = n, "idle sessions dropped");
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(config.addr).await.map_err(ServeError::Io)?;
    tracing::info!(addr = %listener.local_addr().map_err(ServeError::Io)?, "listening");
    let app = router(state.clone(), config.static_dir.clone());
    let server = axum::serve(listener, app).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    server.await.map_err(ServeError::Io)?;
    if let Some(path) = &config.snapshot {
        state.sessions().save_snapshot(path).map_err(ServeError::Io)?;
    }
    Ok(())
}
