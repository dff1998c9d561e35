//! Websocket front end. Each connection gets its own session running on a
//! dedicated thread, paced against the connection's wall clock.
//!
//! Routes: `GET /ws` upgrades to the telemetry/command socket; everything
//! else is served from the static asset directory if one is configured.
//! The first message on a socket is `hello`, the last is `end`.

use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use sixbar_core::harness::ScenarioConfig;
use tower_http::services::ServeDir;

use crate::error::Result;
use crate::log::Driver;
use crate::outbox::Outbox;
use crate::protocol::{ClientMessage, RejectReason, Rejection, ServerMessage};
use crate::session::{Session, SessionOptions};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub scenario: ScenarioConfig,
    pub options: SessionOptions,
    /// Directory for per-connection session logs; no logs when `None`.
    pub log_dir: Option<PathBuf>,
    /// Telemetry frames buffered per client before the oldest are dropped.
    pub queue_capacity: usize,
    /// Pacing loop period.
    pub tick: Duration,
    /// Directory of static files (the operator UI) served under `/`.
    pub assets: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        ServerConfig {
            scenario,
            options: SessionOptions::default(),
            log_dir: None,
            queue_capacity: 64,
            tick: Duration::from_millis(5),
            assets: None,
        }
    }
}

struct AppState {
    config: ServerConfig,
    next_id: AtomicU64,
}

pub fn router(config: ServerConfig) -> Router {
    let assets = config.assets.clone();
    let state = Arc::new(AppState { config, next_id: AtomicU64::new(0) });
    let router = Router::new().route("/ws", get(upgrade));
    let router = match assets {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(index)),
    };
    router.with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(config: ServerConfig, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(config)).await?;
    Ok(())
}

async fn index() -> &'static str {
    "six-bar tensegrity teleoperation: connect a websocket to /ws\n"
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> impl IntoResponse {
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| connection(socket, app, id))
}

enum Incoming {
    Message(ClientMessage),
    Malformed(String),
    Closed,
}

async fn connection(socket: WebSocket, app: Arc<AppState>, id: u64) {
    let (mut sink, mut stream) = socket.split();
    let outbox = Arc::new(Outbox::new(app.config.queue_capacity));
    let (tx, rx) = mpsc::channel::<Incoming>();

    let sim_outbox = outbox.clone();
    let config = app.config.clone();
    std::thread::spawn(move || run_session(config, id, rx, &sim_outbox));

    let writer = tokio::spawn(async move {
        loop {
            let msg = outbox.next().await;
            let end = matches!(msg, ServerMessage::End { .. });
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() || end {
                break;
            }
        }
        let _ = sink.close().await;
    });

    while let Some(Ok(msg)) = stream.next().await {
        let incoming = match msg {
            Message::Text(text) => match serde_json::from_str(text.as_str()) {
                Ok(m) => Incoming::Message(m),
                Err(e) => Incoming::Malformed(e.to_string()),
            },
            Message::Close(_) => break,
            _ => continue,
        };
        if tx.send(incoming).is_err() {
            break;
        }
    }
    let _ = tx.send(Incoming::Closed);
    let _ = writer.await;
}

fn open_log(config: &ServerConfig, id: u64) -> std::io::Result<Option<BufWriter<File>>> {
    let Some(dir) = &config.log_dir else { return Ok(None) };
    std::fs::create_dir_all(dir)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    Ok(Some(BufWriter::new(File::create(dir.join(format!("session-{stamp}-{id}.jsonl")))?)))
}

/// Session thread: paces the simulation against the wall clock and applies
/// commands at the step boundary they arrive on.
fn run_session(config: ServerConfig, id: u64, rx: mpsc::Receiver<Incoming>, outbox: &Outbox) {
    let fail = |reason: RejectReason, e: &dyn std::fmt::Display| {
        outbox.push(ServerMessage::Error { rejection: Rejection::new(reason, e.to_string()) });
        outbox.push(ServerMessage::End { reason: "error".into() });
    };
    let session = match Session::new(config.scenario.clone(), config.options.clone()) {
        Ok(s) => s,
        Err(e) => return fail(RejectReason::SimulationFault, &e),
    };
    outbox.push(ServerMessage::Hello(Box::new(session.hello())));
    let log = match open_log(&config, id) {
        Ok(l) => l,
        Err(e) => return fail(RejectReason::SimulationFault, &e),
    };
    let mut driver = match Driver::new(session, log) {
        Ok(d) => d,
        Err(e) => return fail(RejectReason::SimulationFault, &e),
    };
    let start = Instant::now();
    let mut out = Vec::new();
    let reason = loop {
        let wall = start.elapsed().as_secs_f64();
        let mut step = driver.advance(wall, &mut out);
        let mut closed = false;
        while step.is_ok() {
            match rx.try_recv() {
                Ok(Incoming::Message(ClientMessage::Command { seq, command })) => {
                    step = driver.command(wall, seq, command, &mut out);
                }
                Ok(Incoming::Malformed(detail)) => out.push(ServerMessage::Error {
                    rejection: Rejection::new(RejectReason::Malformed, detail),
                }),
                Ok(Incoming::Closed) | Err(mpsc::TryRecvError::Disconnected) => {
                    closed = true;
                    break;
                }
                Err(mpsc::TryRecvError::Empty) => break,
            }
        }
        out.drain(..).for_each(|m| outbox.push(m));
        if let Err(e) = step {
            outbox.push(ServerMessage::Error { rejection: Rejection::new(RejectReason::SimulationFault, e.to_string()) });
            break "simulation_fault";
        }
        if closed {
            break "client_closed";
        }
        std::thread::sleep(config.tick);
    };
    let _ = driver.finish(driver.session().wall(), &mut out);
    outbox.push(ServerMessage::End { reason: reason.into() });
}
