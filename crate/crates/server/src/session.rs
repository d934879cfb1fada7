//! One client connection: handshake, frame validation, latest-wins
//! scheduling and serial estimator execution.

use std::sync::Arc;
use std::time::Duration;

use futures::{Stream, StreamExt};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::{sleep_until, timeout, Instant};

use flatpose_core::estimator::{Estimator, EstimatorError, EstimatorInput, EstimatorOutput};
use flatpose_core::Pose;

use crate::payload::decode_frame;
use crate::protocol::{
    ClientMessage, DetectionMessage, ErrorCode, ResultMessage, ServerMessage, PROTOCOL_VERSION,
};
use crate::scheduler::{FrameScheduler, Next};
use crate::ServerError;

/// In-flight work is given this long to finish on shutdown.
pub const SHUTDOWN_GRACE: Duration = Duration::from_secs(1);

#[derive(Clone)]
pub struct SessionContext {
    pub estimator: Arc<dyn Estimator>,
    pub max_fps: f64,
    /// Plane used for frames that do not carry one.
    pub default_plane: Option<Pose>,
}

/// Counters reported when a session ends.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub frames_received: u64,
    pub frames_dropped: u64,
    pub results_sent: u64,
    pub errors_sent: u64,
}

struct Job {
    input: EstimatorInput,
    received: Instant,
}

type Running = JoinHandle<(u64, Instant, Result<EstimatorOutput, EstimatorError>)>;

struct Session {
    ctx: SessionContext,
    out: mpsc::Sender<String>,
    scheduler: FrameScheduler<Job>,
    greeted: bool,
    last_frame_id: Option<u64>,
    stats: SessionStats,
}

impl Session {
    /// False once the client is gone.
    async fn send(&mut self, msg: ServerMessage) -> bool {
        match &msg {
            ServerMessage::Result(_) => self.stats.results_sent += 1,
            ServerMessage::Error(_) => self.stats.errors_sent += 1,
            ServerMessage::Hello { .. } => {}
        }
        self.out.send(msg.to_json()).await.is_ok()
    }

    async fn on_text(&mut self, text: &str) -> bool {
        let msg = match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => m,
            Err(e) => {
                let frame_id = serde_json::from_str::<serde_json::Value>(text)
                    .ok()
                    .and_then(|v| v.get("frame_id").and_then(serde_json::Value::as_u64));
                return self.send(ServerMessage::error(frame_id, ErrorCode::MalformedMessage, e.to_string())).await;
            }
        };
        match msg {
            ClientMessage::Hello { version } if version == PROTOCOL_VERSION => {
                self.greeted = true;
                self.send(ServerMessage::Hello { version: PROTOCOL_VERSION }).await
            }
            ClientMessage::Hello { version } => {
                let m = format!("protocol version {version} is not supported (server speaks {PROTOCOL_VERSION})");
                self.send(ServerMessage::error(None, ErrorCode::UnsupportedVersion, m)).await
            }
            ClientMessage::Frame(f) => {
                let id = f.frame_id;
                if !self.greeted {
                    let m = "send a hello message before frames";
                    return self.send(ServerMessage::error(Some(id), ErrorCode::HandshakeRequired, m)).await;
                }
                if let Some(last) = self.last_frame_id {
                    if id <= last {
                        let m = format!("frame_id {id} does not exceed the previous {last}");
                        return self.send(ServerMessage::error(Some(id), ErrorCode::FrameIdNotIncreasing, m)).await;
                    }
                }
                self.last_frame_id = Some(id);
                self.stats.frames_received += 1;
                match decode_frame(&f, self.ctx.default_plane) {
                    Ok(input) => {
                        self.scheduler.offer(id, Job { input, received: Instant::now() });
                        true
                    }
                    Err(e) => self.send(ServerMessage::error(Some(id), e.code, e.message)).await,
                }
            }
        }
    }

    fn dispatch(&mut self, job: Job) -> Running {
        let est = Arc::clone(&self.ctx.estimator);
        tokio::task::spawn_blocking(move || {
            let id = job.input.frame_id;
            (id, job.received, est.estimate(&job.input))
        })
    }

    async fn finish(&mut self, done: Result<(u64, Instant, Result<EstimatorOutput, EstimatorError>), tokio::task::JoinError>) -> bool {
        self.scheduler.complete();
        let msg = match done {
            Ok((id, received, Ok(out))) => ServerMessage::Result(ResultMessage {
                frame_id: id,
                server_latency_ms: received.elapsed().as_secs_f64() * 1e3,
                detections: out.detections.iter().filter_map(DetectionMessage::from_detection).collect(),
            }),
            Ok((id, _, Err(e))) => ServerMessage::error(Some(id), ErrorCode::EstimatorFailure, e.to_string()),
            Err(e) => ServerMessage::error(None, ErrorCode::EstimatorFailure, format!("estimator task failed: {e}")),
        };
        self.send(msg).await
    }
}

/// Runs one session until the client stream ends, the client stops
/// reading, or `shutdown` turns true. Text messages in, JSON text out.
///
/// Frames that arrive while one is being processed replace each other;
/// only the newest is processed next, and no faster than `max_fps`.
/// After the input ends the in-flight frame still gets its result; an
/// undispatched frame is dropped.
pub async fn handle_connection<S>(
    mut incoming: S,
    out: mpsc::Sender<String>,
    ctx: SessionContext,
    mut shutdown: watch::Receiver<bool>,
) -> Result<SessionStats, ServerError>
where
    S: Stream<Item = String> + Unpin,
{
    let epoch = Instant::now();
    let scheduler = FrameScheduler::new(ctx.max_fps)?;
    let mut s = Session { ctx, out, scheduler, greeted: false, last_frame_id: None, stats: SessionStats::default() };
    let mut running: Option<Running> = None;
    let mut input_open = true;
    let mut shutdown_live = true;
    loop {
        let mut wake = None;
        if running.is_none() {
            match s.scheduler.next(epoch.elapsed()) {
                Next::Dispatch(_, job) => running = Some(s.dispatch(job)),
                Next::WaitUntil(t) => wake = Some(epoch + t),
                Next::Idle => {}
            }
        }
        if !input_open && running.is_none() {
            break;
        }
        if *shutdown.borrow() {
            if let Some(task) = running.take() {
                if let Ok(done) = timeout(SHUTDOWN_GRACE, task).await {
                    s.finish(done).await;
                }
            }
            break;
        }
        tokio::select! {
            changed = shutdown.changed(), if shutdown_live => {
                // Sender gone: nobody can request shutdown any more.
                shutdown_live = changed.is_ok();
            }
            done = async { running.as_mut().expect("guarded").await }, if running.is_some() => {
                running = None;
                if !s.finish(done).await {
                    break;
                }
            }
            msg = incoming.next(), if input_open => match msg {
                Some(text) => {
                    if !s.on_text(&text).await {
                        break;
                    }
                }
                None => {
                    input_open = false;
                    s.scheduler.clear_pending();
                }
            },
            _ = sleep_until(wake.unwrap_or(epoch)), if wake.is_some() => {}
        }
    }
    s.stats.frames_dropped = s.scheduler.dropped();
    Ok(s.stats)
}
