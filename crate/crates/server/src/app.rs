//! HTTP surface: `/ws` sessions, static model-edge JSON, graceful shutdown.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;

use flatpose_core::estimator::{build_estimator, library_from_models, ContourParams, Estimator};
use flatpose_core::scenegen::LoadedModels;
use flatpose_core::Pose;

use crate::models::{export_edges, ModelEdges, ModelIndex};
use crate::protocol::PlaneMessage;
use crate::session::{handle_connection, SessionContext, SHUTDOWN_GRACE};
use crate::ServerError;

pub const DEFAULT_MAX_FPS: f64 = 5.0;
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub max_fps: f64,
    pub estimator: String,
    pub models_dir: Option<PathBuf>,
    /// Plane for frames that carry none.
    pub default_plane: Option<PlaneMessage>,
    pub contour: ContourParams,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.into(),
            max_fps: DEFAULT_MAX_FPS,
            estimator: "contour".into(),
            models_dir: None,
            default_plane: None,
            contour: ContourParams::default(),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), ServerError> {
        if !(self.max_fps.is_finite() && self.max_fps > 0.0) {
            return Err(ServerError::Config(format!("max_fps must be positive, got {}", self.max_fps)));
        }
        if let Some(p) = &self.default_plane {
            if !p.pose().is_valid() {
                return Err(ServerError::Config("default_plane rotation is not orthonormal".into()));
            }
        }
        self.contour.validate().map_err(|e| ServerError::Config(e.to_string()))
    }
}

/// Immutable state shared by all sessions.
#[derive(Clone)]
pub struct AppState {
    pub estimator: Arc<dyn Estimator>,
    pub max_fps: f64,
    pub default_plane: Option<Pose>,
    pub index: Arc<ModelIndex>,
    pub edges: Arc<BTreeMap<u32, ModelEdges>>,
    shutdown: watch::Receiver<bool>,
    sessions: Arc<tokio::sync::Mutex<JoinSet<()>>>,
}

impl AppState {
    /// Loads models (if configured) and builds the estimator.
    pub fn from_config(config: &ServerConfig) -> Result<(Self, watch::Sender<bool>), ServerError> {
        config.validate()?;
        let models = match &config.models_dir {
            Some(dir) => LoadedModels::read(dir).map_err(|e| ServerError::Models(e.to_string()))?,
            None => LoadedModels::default(),
        };
        let (library, missing) = library_from_models(&models);
        if !missing.is_empty() && config.estimator == "contour" {
            tracing::warn!(?missing, "models without a profile are ignored by the contour estimator");
        }
        let estimator = build_estimator(&config.estimator, library, config.contour)
            .map_err(|e| ServerError::Config(e.to_string()))?;
        Ok(Self::new(Arc::from(estimator), config.max_fps, config.default_plane.map(|p| p.pose()), &models))
    }

    pub fn new(
        estimator: Arc<dyn Estimator>,
        max_fps: f64,
        default_plane: Option<Pose>,
        models: &LoadedModels,
    ) -> (Self, watch::Sender<bool>) {
        let (tx, rx) = watch::channel(false);
        let (index, edges) = export_edges(models);
        let state = Self {
            estimator,
            max_fps,
            default_plane,
            index: Arc::new(index),
            edges: Arc::new(edges),
            shutdown: rx,
            sessions: Arc::new(tokio::sync::Mutex::new(JoinSet::new())),
        };
        (state, tx)
    }

    fn context(&self) -> SessionContext {
        SessionContext { estimator: Arc::clone(&self.estimator), max_fps: self.max_fps, default_plane: self.default_plane }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/models/index.json", get(model_index))
        .route("/models/{id}/edges.json", get(model_edges))
        .with_state(state)
}

async fn model_index(State(state): State<AppState>) -> Json<ModelIndex> {
    Json((*state.index).clone())
}

async fn model_edges(State(state): State<AppState>, Path(id): Path<u32>) -> Response {
    match state.edges.get(&id) {
        Some(e) => Json(e.clone()).into_response(),
        None => (StatusCode::NOT_FOUND, format!("no model with id {id}")).into_response(),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| async move {
        let sessions = Arc::clone(&state.sessions);
        sessions.lock().await.spawn(run_socket(socket, state));
    })
}

async fn run_socket(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::channel::<String>(64);
    let (in_tx, in_rx) = mpsc::channel::<String>(64);
    let writer = tokio::spawn(async move {
        while let Some(text) = out_rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        let _ = sink.send(Message::Close(None)).await;
    });
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let text = match msg {
                Message::Text(t) => t.to_string(),
                // Binary frames are handed on as text so they fail as malformed.
                Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                Message::Close(_) => break,
                Message::Ping(_) | Message::Pong(_) => continue,
            };
            if in_tx.send(text).await.is_err() {
                break;
            }
        }
    });
    let incoming = tokio_stream(in_rx);
    match handle_connection(incoming, out_tx, state.context(), state.shutdown.clone()).await {
        Ok(stats) => tracing::info!(?stats, "session closed"),
        Err(e) => tracing::warn!(error = %e, "session failed"),
    }
    reader.abort();
    let _ = writer.await;
}

fn tokio_stream(mut rx: mpsc::Receiver<String>) -> impl futures::Stream<Item = String> + Unpin {
    Box::pin(futures::stream::poll_fn(move |cx| rx.poll_recv(cx)))
}

/// Serves until `signal` resolves, then asks every session to stop and
/// waits for them (each finishes or abandons its in-flight frame within
/// the grace period).
pub async fn serve<F>(
    listener: TcpListener,
    state: AppState,
    shutdown_tx: watch::Sender<bool>,
    signal: F,
) -> Result<(), ServerError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let sessions = Arc::clone(&state.sessions);
    let app = router(state);
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let notify = tokio::spawn(async move {
        signal.await;
        let _ = shutdown_tx.send(true);
        let _ = stop_tx.send(());
    });
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            let _ = stop_rx.await;
        })
        .await
        .map_err(ServerError::Io)?;
    notify.abort();
    let mut set = sessions.lock().await;
    let drain = async {
        while set.join_next().await.is_some() {}
    };
    if tokio::time::timeout(SHUTDOWN_GRACE * 2, drain).await.is_err() {
        set.abort_all();
    }
    Ok(())
}

/// Binds `addr` and returns the listener with its actual address.
pub async fn bind(addr: &str) -> Result<(TcpListener, SocketAddr), ServerError> {
    let listener = TcpListener::bind(addr).await.map_err(|e| ServerError::Bind(addr.to_string(), e))?;
    let local = listener.local_addr().map_err(ServerError::Io)?;
    Ok((listener, local))
}
