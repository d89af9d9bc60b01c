//! HTTP API for live elicitation sessions.

mod session;

pub use session::{
    Phase, Progress, QueuedQuestion, Session, SessionError, SessionState, TrainJob, SCHEMA_VERSION,
};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hke_core::dataset::{render_stimulus, Dataset};
use hke_core::experiment::RunSettings;
use hke_core::hierarchy::HierarchyTree;
use hke_core::ItemId;
use serde::{Deserialize, Serialize};
use serde_json::json;

type Shared = Arc<Mutex<Session>>;

pub struct AppState {
    dataset: Arc<Dataset>,
    data_dir: PathBuf,
    defaults: RunSettings,
    sessions: Mutex<HashMap<String, Shared>>,
}

impl AppState {
    /// Opens `data_dir`, reloading every session stored there. Sessions that
    /// were training when the server stopped are retrained in the background
    /// once a runtime is available; see [`AppState::resume`].
    pub fn open(dataset: Dataset, data_dir: &Path, defaults: RunSettings) -> Result<Self, SessionError> {
        defaults.validate()?;
        fs::create_dir_all(data_dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(data_dir)? {
            let path = entry?.path();
            if path.join("session.json").is_file() {
                let s = Session::load(&path)?;
                sessions.insert(s.state.id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(Self {
            dataset: Arc::new(dataset),
            data_dir: data_dir.to_owned(),
            defaults,
            sessions: Mutex::new(sessions),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Restarts training for sessions persisted mid-training.
    pub fn resume(self: &Arc<Self>) -> Result<(), SessionError> {
        let sessions: Vec<Shared> = self.sessions.lock().unwrap().values().cloned().collect();
        for shared in sessions {
            let job = shared.lock().unwrap().resume_training(&self.dataset)?;
            if let Some(job) = job {
                spawn_training(self.dataset.clone(), shared, job);
            }
        }
        Ok(())
    }

    fn session(&self, id: &str) -> Result<Shared, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_owned()).into())
    }

    fn next_id(&self, sessions: &HashMap<String, Shared>) -> String {
        (sessions.len() + 1..)
            .map(|n| format!("s{n:04}"))
            .find(|id| !sessions.contains_key(id) && !self.data_dir.join(id).exists())
            .expect("unbounded range")
    }
}

fn spawn_training(dataset: Arc<Dataset>, shared: Shared, job: TrainJob) {
    tokio::task::spawn_blocking(move || {
        let outcome = job.run(&dataset);
        let mut session = shared.lock().unwrap();
        if let Err(e) = session.finish_training(outcome) {
            eprintln!("session {}: failed to persist training result: {e}", session.state.id);
        }
    });
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self(e)
    }
}

impl From<hke_core::Error> for ApiError {
    fn from(e: hke_core::Error) -> Self {
        Self(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SessionError::UnknownSession(_) | SessionError::UnknownItem(_) => StatusCode::NOT_FOUND,
            SessionError::Validation { .. } | SessionError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Conflict(_) => StatusCode::CONFLICT,
            SessionError::Io(_) | SessionError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "schema_version": SCHEMA_VERSION, "error": self.0.to_string() });
        if let SessionError::Validation { legal_ids: Some(ids), .. } = &self.0 {
            body["legal_ids"] = json!(ids);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub responder: Option<String>,
    pub config: Option<RunSettings>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub schema_version: u32,
    pub session_id: String,
    pub responder: String,
    pub dataset: String,
    pub settings: RunSettings,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StimulusRef {
    pub id: ItemId,
    pub stimulus_url: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuestionView {
    pub schema_version: u32,
    pub session_id: String,
    pub question_id: String,
    pub items: Vec<StimulusRef>,
    pub iteration: usize,
    pub answered: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerBody {
    pub question_id: String,
    pub chosen: ItemId,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerAck {
    pub schema_version: u32,
    pub question_id: String,
    /// False when the question had already been answered.
    pub recorded: bool,
    #[serde(flatten)]
    pub progress: Progress,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeView {
    pub schema_version: u32,
    pub iteration: usize,
    pub tree: Option<HierarchyTree>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProgressView {
    pub schema_version: u32,
    pub session_id: String,
    #[serde(flatten)]
    pub progress: Progress,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let settings = req.config.unwrap_or_else(|| app.defaults.clone());
    let mut sessions = app.sessions.lock().unwrap();
    let id = app.next_id(&sessions);
    let responder = req.responder.unwrap_or_else(|| id.clone());
    if responder.trim().is_empty() {
        return Err(SessionError::Validation {
            message: "responder must not be empty".into(),
            legal_ids: None,
        }
        .into());
    }
    let session = Session::create(&app.data_dir, &id, &responder, settings, &app.dataset)?;
    let created = SessionCreated {
        schema_version: SCHEMA_VERSION,
        session_id: id.clone(),
        responder,
        dataset: session.state.dataset.clone(),
        settings: session.state.settings.clone(),
    };
    sessions.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(created)))
}

async fn next_question(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<QuestionView>> {
    let shared = app.session(&id)?;
    let mut session = shared.lock().unwrap();
    let q = session.next_question(&app.dataset)?;
    Ok(Json(QuestionView {
        schema_version: SCHEMA_VERSION,
        session_id: id,
        question_id: q.id(),
        items: q
            .ids
            .iter()
            .map(|&i| StimulusRef {
                id: i,
                stimulus_url: format!("/stimuli/{i}"),
            })
            .collect(),
        iteration: session.state.iteration,
        answered: session.pool.len(),
    }))
}

async fn submit_answer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<AnswerBody>,
) -> ApiResult<Json<AnswerAck>> {
    let shared = app.session(&id)?;
    let mut session = shared.lock().unwrap();
    let recorded = session.submit(&body.question_id, body.chosen)?;
    Ok(Json(AnswerAck {
        schema_version: SCHEMA_VERSION,
        question_id: body.question_id,
        recorded,
        progress: session.progress(),
    }))
}

async fn train(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<(StatusCode, Json<ProgressView>)> {
    let shared = app.session(&id)?;
    let (job, progress) = {
        let mut session = shared.lock().unwrap();
        let job = session.begin_training(&app.dataset)?;
        (job, session.progress())
    };
    spawn_training(app.dataset.clone(), shared, job);
    Ok((
        StatusCode::ACCEPTED,
        Json(ProgressView {
            schema_version: SCHEMA_VERSION,
            session_id: id,
            progress,
        }),
    ))
}

async fn tree(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<TreeView>> {
    let shared = app.session(&id)?;
    let session = shared.lock().unwrap();
    Ok(Json(TreeView {
        schema_version: SCHEMA_VERSION,
        iteration: session.state.iteration,
        tree: session.tree.clone(),
    }))
}

async fn progress(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<ProgressView>> {
    let shared = app.session(&id)?;
    let progress = shared.lock().unwrap().progress();
    Ok(Json(ProgressView {
        schema_version: SCHEMA_VERSION,
        session_id: id,
        progress,
    }))
}

async fn stimulus(State(app): State<Arc<AppState>>, UrlPath(item): UrlPath<ItemId>) -> ApiResult<Response> {
    let item = app.dataset.get(item).ok_or(SessionError::UnknownItem(item))?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], render_stimulus(item)).into_response())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/question", get(next_question))
        .route("/sessions/{id}/answers", post(submit_answer))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/tree", get(tree))
        .route("/sessions/{id}/progress", get(progress))
        .route("/stimuli/{item_id}", get(stimulus))
        .with_state(app)
}

/// Serves until ctrl-c. Prints the bound address once listening.
pub async fn serve(app: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    println!("listening on http://{}", listener.local_addr()?);
    app.resume().map_err(std::io::Error::other)?;
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
