//! End-to-end over real sockets.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use flatpose_core::docparse::parse_svg_path;
use flatpose_core::estimator::{Estimator, EstimatorError, EstimatorInput, EstimatorOutput};
use flatpose_core::geometry::{detect_symmetries, extrude};
use flatpose_core::metrics::Detection;
use flatpose_core::scenegen::{write_models, LoadedModels};
use flatpose_core::Pose;
use flatpose_server::models::{ModelEdges, ModelIndex};
use flatpose_server::payload::encode_mask_png_base64;
use flatpose_server::protocol::{ClientMessage, FrameMessage, ImageKind, Intrinsics, ServerMessage, ENCODING_PNG_BASE64};
use flatpose_server::{bind, serve, AppState, ServerConfig};
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;

/// Encodes the frame id in the returned translation.
struct Echo;

impl Estimator for Echo {
    fn name(&self) -> &'static str {
        "echo"
    }

    fn estimate(&self, input: &EstimatorInput) -> Result<EstimatorOutput, EstimatorError> {
        std::thread::sleep(Duration::from_millis(2));
        let pose = Pose::from_row_major(&Pose::identity().rotation_row_major(), &[0.0, 0.0, input.frame_id as f64]);
        Ok(EstimatorOutput {
            detections: vec![Detection { category_id: 1, score: 1.0, bbox: [0.0, 0.0, 2.0, 2.0], pose: Some(pose) }],
            ..EstimatorOutput::default()
        })
    }
}

struct Running {
    addr: SocketAddr,
    stop: oneshot::Sender<()>,
    handle: tokio::task::JoinHandle<()>,
}

async fn launch(state: AppState, shutdown: tokio::sync::watch::Sender<bool>) -> Running {
    let (listener, addr) = bind("127.0.0.1:0").await.unwrap();
    let (stop, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        serve(listener, state, shutdown, async move {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Running { addr, stop, handle }
}

fn frame(id: u64) -> String {
    serde_json::to_string(&ClientMessage::Frame(FrameMessage {
        frame_id: id,
        timestamp_ms: 0.0,
        width: 8,
        height: 8,
        intrinsics: Intrinsics { fx: 8.0, fy: 8.0, cx: 4.0, cy: 4.0 },
        encoding: ENCODING_PNG_BASE64.into(),
        data: encode_mask_png_base64(8, 8, &[0; 64]),
        plane: None,
        image_kind: ImageKind::Mask,
    }))
    .unwrap()
}

async fn client(addr: SocketAddr, base: u64, frames: u64) -> Vec<(u64, f64)> {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws.send(Message::Text(r#"{"type":"hello","version":1}"#.into())).await.unwrap();
    for i in 0..frames {
        ws.send(Message::Text(frame(base + i).into())).await.unwrap();
        // Wait for each answer so no frame is dropped.
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
            let Message::Text(t) = msg else { continue };
            match serde_json::from_str::<ServerMessage>(&t).unwrap() {
                ServerMessage::Hello { version } => assert_eq!(version, 1),
                ServerMessage::Result(r) => {
                    if r.frame_id == base + i {
                        break;
                    }
                    panic!("unexpected result {}", r.frame_id);
                }
                ServerMessage::Error(e) => panic!("error {e:?}"),
            }
        }
    }
    let mut out = Vec::new();
    ws.close(None).await.unwrap();
    while let Some(Ok(m)) = ws.next().await {
        if let Message::Text(t) = m {
            if let ServerMessage::Result(r) = serde_json::from_str(&t).unwrap() {
                out.push((r.frame_id, r.detections[0].translation_mm[2]));
            }
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clients_get_only_their_own_results() {
    let (state, sd) = AppState::new(Arc::new(Echo), 1000.0, None, &LoadedModels::default());
    let server = launch(state, sd).await;
    // Each client collects (frame_id, echoed id) for every result.
    let mut tasks = Vec::new();
    for k in 0..4u64 {
        let addr = server.addr;
        tasks.push(tokio::spawn(async move {
            let base = (k + 1) * 1000;
            let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
            ws.send(Message::Text(r#"{"type":"hello","version":1}"#.into())).await.unwrap();
            let mut seen = Vec::new();
            for i in 0..10 {
                ws.send(Message::Text(frame(base + i).into())).await.unwrap();
                loop {
                    let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
                    let Message::Text(t) = msg else { continue };
                    if let ServerMessage::Result(r) = serde_json::from_str::<ServerMessage>(&t).unwrap() {
                        seen.push((r.frame_id, r.detections[0].translation_mm[2]));
                        break;
                    }
                }
            }
            ws.close(None).await.unwrap();
            (base, seen)
        }));
    }
    for t in tasks {
        let (base, seen) = t.await.unwrap();
        let ids: Vec<u64> = seen.iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, (base..base + 10).collect::<Vec<_>>());
        assert!(seen.iter().all(|(id, echo)| *echo == *id as f64));
    }
    server.stop.send(()).unwrap();
    tokio::time::timeout(Duration::from_secs(3), server.handle).await.unwrap().unwrap();
}

#[tokio::test]
async fn idle_server_shuts_down_cleanly() {
    let (state, sd) = AppState::new(Arc::new(Echo), 5.0, None, &LoadedModels::default());
    let server = launch(state, sd).await;
    server.stop.send(()).unwrap();
    tokio::time::timeout(Duration::from_secs(1), server.handle).await.unwrap().unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn shutdown_closes_open_sessions() {
    let (state, sd) = AppState::new(Arc::new(Echo), 5.0, None, &LoadedModels::default());
    let server = launch(state, sd).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/ws", server.addr)).await.unwrap();
    ws.send(Message::Text(r#"{"type":"hello","version":1}"#.into())).await.unwrap();
    let first = ws.next().await.unwrap().unwrap();
    assert!(matches!(first, Message::Text(_)));
    server.stop.send(()).unwrap();
    // The server closes the socket on its own.
    let closed = tokio::time::timeout(Duration::from_secs(2), async {
        while let Some(Ok(m)) = ws.next().await {
            if let Message::Close(_) = m {
                return true;
            }
        }
        true
    })
    .await
    .unwrap();
    assert!(closed);
    tokio::time::timeout(Duration::from_secs(3), server.handle).await.unwrap().unwrap();
}

async fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let status = text[9..12].parse().unwrap();
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn model_edges_are_served_from_the_models_dir() {
    let dir = tempfile::tempdir().unwrap();
    let p = parse_svg_path("M 0 0 L 40 0 L 40 20 L 0 20 Z", 0.1).unwrap();
    let mut m = extrude(&p, 1.0).unwrap();
    m.category_id = 7;
    let sym = detect_symmetries(&m, 1.0, 0.05).unwrap();
    write_models(dir.path(), &[(m, Some(p), sym)]).unwrap();
    let config = ServerConfig { models_dir: Some(dir.path().to_path_buf()), estimator: "null".into(), ..ServerConfig::default() };
    let (state, sd) = AppState::from_config(&config).unwrap();
    let server = launch(state, sd).await;

    let (status, body) = http_get(server.addr, "/models/index.json").await;
    assert_eq!(status, 200);
    let index: ModelIndex = serde_json::from_str(&body).unwrap();
    assert_eq!(index.models.len(), 1);
    assert_eq!(index.models[0].category_id, 7);
    assert_eq!(index.models[0].edges_url, "/models/7/edges.json");

    let (status, body) = http_get(server.addr, "/models/7/edges.json").await;
    assert_eq!(status, 200);
    let edges: ModelEdges = serde_json::from_str(&body).unwrap();
    assert_eq!(edges.edges.len(), 12);
    assert!((edges.diameter - (40.0f64.powi(2) + 20.0f64.powi(2) + 1.0).sqrt()).abs() < 1e-9);

    assert_eq!(http_get(server.addr, "/models/8/edges.json").await.0, 404);
    server.stop.send(()).unwrap();
    server.handle.await.unwrap();
}

#[tokio::test]
async fn bad_configuration_is_rejected_at_startup() {
    let bad_name = ServerConfig { estimator: "yolo".into(), ..ServerConfig::default() };
    let err = AppState::from_config(&bad_name).err().unwrap().to_string();
    assert!(err.contains("contour") && err.contains("null"), "{err}");
    let bad_rate = ServerConfig { max_fps: -1.0, ..ServerConfig::default() };
    assert!(AppState::from_config(&bad_rate).is_err());
    let missing = ServerConfig { models_dir: Some("/nonexistent/models".into()), ..ServerConfig::default() };
    assert!(AppState::from_config(&missing).is_err());
    // Port already taken.
    let (_held, addr) = bind("127.0.0.1:0").await.unwrap();
    assert!(bind(&addr.to_string()).await.is_err());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sequential_client_helper_round_trips() {
    let (state, sd) = AppState::new(Arc::new(Echo), 1000.0, None, &LoadedModels::default());
    let server = launch(state, sd).await;
    let leftover = client(server.addr, 50, 3).await;
    assert!(leftover.is_empty());
    server.stop.send(()).unwrap();
    server.handle.await.unwrap();
}
