//! JSON endpoints over a loaded model set.
//!
//! The engine is swapped as a whole behind a lock; handlers clone the
//! `Arc` and release the lock before doing any work.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use stc::corpus::ShortText;
use stc::engine::{FeatureValue, Manifest, ModelRegistry, RankedResponse};

pub const MAX_TOP_K: usize = 100;

/// Shared handle to the current engine, if any.
#[derive(Clone, Default)]
pub struct AppState {
    engine: Arc<RwLock<Option<Arc<ModelRegistry>>>>,
}

impl AppState {
    pub fn new(engine: Option<ModelRegistry>) -> Self {
        AppState {
            engine: Arc::new(RwLock::new(engine.map(Arc::new))),
        }
    }

    pub fn set_engine(&self, engine: Option<ModelRegistry>) {
        *self.engine.write().expect("engine lock") = engine.map(Arc::new);
    }

    pub fn engine(&self) -> Option<Arc<ModelRegistry>> {
        self.engine.read().expect("engine lock").clone()
    }
}

fn default_top_k() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RespondRequest {
    pub message: String,
    /// The message uses the corpus token syntax; otherwise it is split on
    /// whitespace and the reply carries a warning.
    #[serde(default)]
    pub pretokenized: bool,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rank: usize,
    pub pair_id: u32,
    pub response: String,
    pub post: String,
    pub score: f64,
    /// Raw feature values by name.
    pub features: BTreeMap<String, f64>,
    /// Per-feature score composition in schema order.
    pub breakdown: Vec<FeatureValue>,
}

impl From<RankedResponse> for Candidate {
    fn from(r: RankedResponse) -> Self {
        Candidate {
            rank: r.rank,
            pair_id: r.pair_id,
            response: r.response,
            post: r.post,
            score: r.score,
            features: r.features.iter().map(|f| (f.name.clone(), f.raw)).collect(),
            breakdown: r.features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RespondResponse {
    pub candidates: Vec<Candidate>,
    pub elapsed_ms: f64,
    pub engine_version: String,
    pub warning: Option<String>,
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub engine_loaded: bool,
    pub engine_version: Option<String>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

fn not_loaded() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "no engine loaded")
}

pub fn engine_version(reg: &ModelRegistry) -> String {
    format!(
        "stc {} {} vocab {}",
        env!("CARGO_PKG_VERSION"),
        reg.schema().version(),
        reg.vocab().tag()
    )
}

/// Parses the message the way the endpoint does; the flag reports whether
/// the whitespace fallback was used.
pub fn parse_message(req: &RespondRequest) -> Result<(ShortText, bool), String> {
    if req.pretokenized {
        ShortText::parse(&req.message).map(|t| (t, false))
    } else {
        Ok((ShortText::from_raw(&req.message), true))
    }
}

/// The candidates a request produces, computed directly on the engine.
pub fn respond_candidates(
    reg: &ModelRegistry,
    text: &ShortText,
    top_k: usize,
) -> stc::Result<(Vec<Candidate>, Option<String>)> {
    let r = reg.respond(text, top_k)?;
    Ok((r.candidates.into_iter().map(Candidate::from).collect(), r.diagnostic))
}

async fn respond(State(state): State<AppState>, body: Bytes) -> Response {
    let req: RespondRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    if !(1..=MAX_TOP_K).contains(&req.top_k) {
        return error(
            StatusCode::BAD_REQUEST,
            format!("top_k must be in 1..={MAX_TOP_K}, got {}", req.top_k),
        );
    }
    let (text, raw) = match parse_message(&req) {
        Ok(t) => t,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad message: {e}")),
    };
    let Some(engine) = state.engine() else {
        return not_loaded();
    };
    let start = Instant::now();
    let top_k = req.top_k;
    let reg = Arc::clone(&engine);
    let result = tokio::task::spawn_blocking(move || respond_candidates(&reg, &text, top_k)).await;
    match result {
        Ok(Ok((candidates, diagnostic))) => Json(RespondResponse {
            candidates,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            engine_version: engine_version(&engine),
            warning: raw.then(|| "message was not pretokenized; split on whitespace".to_string()),
            diagnostic,
        })
        .into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    match state.engine() {
        Some(e) => Json(Health {
            status: "ok".into(),
            engine_loaded: true,
            engine_version: Some(engine_version(&e)),
        })
        .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(Health {
                status: "no engine loaded".into(),
                engine_loaded: false,
                engine_version: None,
            }),
        )
            .into_response(),
    }
}

async fn models(State(state): State<AppState>) -> Response {
    match state.engine() {
        Some(e) => Json::<Manifest>(e.manifest()).into_response(),
        None => not_loaded(),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/respond", post(respond))
        .route("/api/health", get(health))
        .route("/api/models", get(models))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
