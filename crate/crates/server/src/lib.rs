//! HTTP sessions for composing a workflow one recommended service at a time.
//!
//! Every session holds a partial workflow and the goal vector inferred from its
//! goal text. The loaded model is shared read-only by all sessions.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use flowrec_core::provenance::{Edge, Service};
use flowrec_core::recommender::{recommend_with_goal, Candidate, PartialWorkflow};
use flowrec_core::seqmodel::Model;
use flowrec_core::Error as CoreError;

pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);

/// Error reply: a status code and a JSON body `{"error": ..., ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        match e {
            CoreError::Cycle { nodes } => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": message, "cycle": nodes }),
            },
            CoreError::DuplicateService { .. } | CoreError::DuplicateEdge { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
            }
            CoreError::UnknownService(_) | CoreError::UnknownAnchor(_) => Self::not_found(message),
            CoreError::InvalidConfig(_) => Self::bad_request(message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// `Json` whose rejections are all reported as 400 with a JSON error body.
pub struct Body<T>(pub T);

impl<S, T> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(value)) => Ok(Body(value)),
            Err(rejection) => Err(ApiError::bad_request(rejection_message(rejection))),
        }
    }
}

fn rejection_message(r: JsonRejection) -> String {
    format!("malformed body: {}", r.body_text())
}

#[derive(Debug)]
struct Session {
    workflow: PartialWorkflow,
    goal_vector: Vec<f64>,
    created_at: u64,
}

#[derive(Debug)]
struct Slot {
    session: RwLock<Session>,
    last_used: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.last_used.lock().unwrap() = Instant::now();
    }

    fn idle_since(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().unwrap())
    }
}

/// Shared server state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    model: Model,
    fingerprint: String,
    ttl: Duration,
    sessions: RwLock<HashMap<Uuid, Arc<Slot>>>,
}

impl AppState {
    pub fn new(model: Model) -> Self {
        Self::with_ttl(model, DEFAULT_TTL)
    }

    /// Sessions idle for longer than `ttl` are dropped.
    pub fn with_ttl(model: Model, ttl: Duration) -> Self {
        let fingerprint = model.fingerprint();
        Self {
            inner: Arc::new(Inner {
                model,
                fingerprint,
                ttl,
                sessions: RwLock::new(HashMap::new()),
            }),
        }
    }

    pub fn model(&self) -> &Model {
        &self.inner.model
    }

    pub fn session_count(&self) -> usize {
        self.evict_expired();
        self.inner.sessions.read().unwrap().len()
    }

    fn evict_expired(&self) {
        let now = Instant::now();
        let ttl = self.inner.ttl;
        let mut sessions = self.inner.sessions.write().unwrap();
        let before = sessions.len();
        sessions.retain(|_, slot| slot.idle_since(now) <= ttl);
        if sessions.len() < before {
            log::info!("evicted {} idle sessions", before - sessions.len());
        }
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.evict_expired();
        let unknown = || ApiError::not_found(format!("unknown session `{id}`"));
        let uuid = Uuid::parse_str(id).map_err(|_| unknown())?;
        let slot = self.inner.sessions.read().unwrap().get(&uuid).cloned().ok_or_else(unknown)?;
        slot.touch();
        Ok(slot)
    }

    fn service(&self, id: &str) -> Result<Service, ApiError> {
        let vocab = &self.inner.model.params.vocabulary;
        vocab
            .get(id)
            .map(|i| vocab.service(i).clone())
            .ok_or_else(|| ApiError::not_found(format!("unknown service `{id}`")))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub goal: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddService {
    pub service_id: String,
    #[serde(default)]
    pub source_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub anchor_id: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateGoal {
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub goal: String,
    pub services: Vec<Service>,
    pub edges: Vec<Edge>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl SessionView {
    fn of(id: &str, s: &Session) -> Self {
        Self {
            session_id: id.to_string(),
            goal: s.workflow.goal.clone(),
            services: s.workflow.services.clone(),
            edges: s.workflow.edges.clone(),
            created_at: s.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub anchor_id: String,
    pub candidates: Vec<Candidate>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/services", get(services))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/services", post(add_service))
        .route("/sessions/{id}/recommend", post(recommend))
        .route("/sessions/{id}/goal", put(update_goal))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model_fingerprint": state.inner.fingerprint,
        "services": state.inner.model.params.num_services(),
    }))
}

async fn services(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "services": state.inner.model.params.vocabulary.services() }))
}

async fn create_session(
    State(state): State<AppState>,
    Body(req): Body<CreateSession>,
) -> (StatusCode, Json<serde_json::Value>) {
    state.evict_expired();
    let id = Uuid::new_v4();
    let session = Session {
        goal_vector: state.inner.model.goal_embedder.infer(&req.goal),
        workflow: PartialWorkflow::new(req.goal),
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let slot = Arc::new(Slot {
        session: RwLock::new(session),
        last_used: Mutex::new(Instant::now()),
    });
    state.inner.sessions.write().unwrap().insert(id, slot);
    log::debug!("session {id} created");
    (StatusCode::CREATED, Json(json!({ "session_id": id.to_string() })))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.read().unwrap();
    Ok(Json(SessionView::of(&id, &session)))
}

/// Adds the service if it is new, then the edge from `source_id` if given.
/// Both happen or neither does.
async fn add_service(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<AddService>,
) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let service = state.service(&req.service_id)?;
    let mut session = slot.session.write().unwrap();
    let mut next = session.workflow.clone();
    match &req.source_id {
        None => next.add_service(service)?,
        Some(source) => {
            if !next.contains(source) {
                return Err(ApiError::not_found(format!("service `{source}` is not in the session")));
            }
            if !next.contains(&req.service_id) {
                next.add_service(service)?;
            }
            next.add_edge(source, &req.service_id)?;
        }
    }
    session.workflow = next;
    Ok(Json(SessionView::of(&id, &session)))
}

async fn recommend(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<RecommendRequest>,
) -> Result<Json<RecommendResponse>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.read().unwrap();
    if !session.workflow.contains(&req.anchor_id) {
        return Err(ApiError::not_found(format!(
            "anchor `{}` is not in the session",
            req.anchor_id
        )));
    }
    let rec = recommend_with_goal(
        &state.inner.model.params,
        &session.workflow,
        &req.anchor_id,
        req.k,
        &session.goal_vector,
    )?;
    Ok(Json(RecommendResponse {
        anchor_id: rec.anchor,
        candidates: rec.candidates,
    }))
}

async fn update_goal(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Body(req): Body<UpdateGoal>,
) -> Result<Json<SessionView>, ApiError> {
    let slot = state.slot(&id)?;
    let goal_vector = state.inner.model.goal_embedder.infer(&req.goal);
    let mut session = slot.session.write().unwrap();
    session.goal_vector = goal_vector;
    session.workflow.goal = req.goal;
    Ok(Json(SessionView::of(&id, &session)))
}

/// Serves the API on `addr` until interrupted. With `ui_dir`, files in it are
/// served for every path the API does not claim.
pub async fn serve(state: AppState, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let mut app = router(state);
    if let Some(dir) = ui_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
