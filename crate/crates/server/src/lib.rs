//! Pose streaming service: clients send frames over a WebSocket and get
//! detections with 6D poses back.
//!
//! Each connection keeps at most one undispatched frame (newer frames
//! replace it) and runs the estimator serially, no faster than `max_fps`.

pub mod app;
pub mod models;
pub mod payload;
pub mod protocol;
pub mod scheduler;
pub mod session;

use thiserror::Error;

pub use app::{bind, router, serve, AppState, ServerConfig, DEFAULT_BIND, DEFAULT_MAX_FPS};
pub use scheduler::{FrameScheduler, Next, Offer};
pub use session::{handle_connection, SessionContext, SessionStats};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loading models: {0}")]
    Models(String),
    #[error("cannot bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error(transparent)]
    Io(std::io::Error),
}
