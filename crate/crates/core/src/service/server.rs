//! Live operator socket. One WebSocket per console carries JSON text
//! messages both ways; see `docs/operator_api.md` for the schema.
//!
//! Three flows run independently: a producer thread captures and encodes
//! frames at the configured rate, one thread per console moves messages,
//! and a single actor thread owns the session and the slave link. Every
//! session mutation goes through the actor's queue, so a console waiting on
//! a slave acknowledgement never stalls the frame stream.

// tungstenite::Error is large but only travels up one console thread.
#![allow(clippy::result_large_err)]

use std::collections::BTreeSet;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use base64::Engine;
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tungstenite::{Message as WsMessage, WebSocket};

use super::action::Action;
use super::driver::{Outcome, Report, SessionDriver};
use super::{ServiceConfig, ServiceError};
use crate::geometry::RigidTransform;
use crate::protocol::{SlaveLink, SlaveStub, PROTOCOL_VERSION};
use crate::session::{FrameSource, HoverReadout, MonotonicClock, Session, SessionError, SessionState};
use crate::sim::encode_color_png;

/// Version of the operator socket schema.
pub const API_VERSION: u32 = 1;

const POLL: Duration = Duration::from_millis(4);
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Controller,
    Observer,
}

enum Request {
    Action {
        action: Action,
        reply: Sender<(Result<Outcome, SessionError>, SessionState)>,
    },
    Report {
        reply: Sender<Report>,
    },
    Halt,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ClientMessage {
    Action {
        #[serde(default)]
        id: Option<u64>,
        action: Action,
    },
    Report {
        #[serde(default)]
        id: Option<u64>,
    },
}

struct EncodedFrame {
    generation: u64,
    text: String,
}

#[derive(Default)]
struct Control {
    controller: Option<u64>,
    live: BTreeSet<u64>,
    next_id: u64,
}

struct Shared {
    frames: Arc<FrameSource>,
    mount: RigidTransform,
    latest: Mutex<Option<Arc<EncodedFrame>>>,
    control: Mutex<Control>,
    state: Mutex<SessionState>,
    stop: AtomicBool,
}

impl Shared {
    fn register(&self) -> u64 {
        let mut c = self.control.lock().expect("control lock");
        c.next_id += 1;
        let id = c.next_id;
        c.live.insert(id);
        if c.controller.is_none() {
            c.controller = Some(id);
        }
        id
    }

    /// Drops a console; control passes to the longest-connected observer.
    fn unregister(&self, id: u64) {
        let mut c = self.control.lock().expect("control lock");
        c.live.remove(&id);
        if c.controller == Some(id) {
            c.controller = c.live.iter().next().copied();
            if let Some(next) = c.controller {
                info!("console {id} left; console {next} now holds control");
            }
        }
    }

    fn role(&self, id: u64) -> Role {
        if self.control.lock().expect("control lock").controller == Some(id) {
            Role::Controller
        } else {
            Role::Observer
        }
    }

    fn state(&self) -> SessionState {
        *self.state.lock().expect("state lock")
    }
}

/// A running service. Dropping it shuts everything down.
pub struct ServiceHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    requests: Sender<Request>,
    threads: Vec<JoinHandle<()>>,
    connections: Arc<Mutex<Vec<JoinHandle<()>>>>,
    _stub: Option<SlaveStub>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn frames(&self) -> &Arc<FrameSource> {
        &self.shared.frames
    }

    /// Stops the session actor while leaving the socket up; later actions
    /// answer `SessionUnavailable`.
    #[doc(hidden)]
    pub fn halt_session(&self) {
        let _ = self.requests.send(Request::Halt);
    }

    /// Serves until the process is killed.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = self.requests.send(Request::Halt);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        for t in self.connections.lock().expect("connection lock").drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Loads the scene, binds the operator socket and starts streaming. Without
/// a slave address a local slave stub is started and owned by the handle.
pub fn serve(config: &ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    config.validate()?;
    let scene = Arc::new(config.load_scene()?);
    let listener = TcpListener::bind(&config.listen_address).map_err(|e| ServiceError::Bind {
        addr: config.listen_address.clone(),
        message: e.to_string(),
    })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Io(e.to_string()))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| ServiceError::Io(e.to_string()))?;

    let (stub, slave_address) = match &config.slave_address {
        Some(a) => (None, a.clone()),
        None => {
            let s = SlaveStub::bind("127.0.0.1:0")
                .map_err(|e| ServiceError::Io(format!("cannot start slave stub: {e}")))?;
            let a = s.addr().to_string();
            info!("no slave configured; local slave stub on {a}");
            (Some(s), a)
        }
    };

    let session_config = config.session_config();
    let driver = SessionDriver::new(Box::new(SlaveLink::new(slave_address)), |link| {
        Session::new(scene, session_config, Arc::new(MonotonicClock::new()), link)
    })?;
    let shared = Arc::new(Shared {
        frames: driver.session().frames().clone(),
        mount: session_config.mount,
        latest: Mutex::new(None),
        control: Mutex::new(Control::default()),
        state: Mutex::new(driver.state()),
        stop: AtomicBool::new(false),
    });

    let (tx, rx) = mpsc::channel();
    let spawn = |name: &str, f: Box<dyn FnOnce() + Send>| {
        thread::Builder::new()
            .name(name.into())
            .spawn(f)
            .map_err(|e| ServiceError::Io(e.to_string()))
    };
    let connections = Arc::new(Mutex::new(Vec::new()));
    let actor = {
        let shared = shared.clone();
        spawn("session-actor", Box::new(move || actor_loop(driver, rx, shared)))?
    };
    let producer = {
        let shared = shared.clone();
        let period = Duration::from_secs_f64(1.0 / config.frame_rate_hz as f64);
        spawn("frame-producer", Box::new(move || producer_loop(shared, period)))?
    };
    let acceptor = {
        let (shared, tx, connections) = (shared.clone(), tx.clone(), connections.clone());
        spawn(
            "operator-accept",
            Box::new(move || accept_loop(listener, shared, tx, connections)),
        )?
    };
    info!("operator socket on ws://{addr}");
    Ok(ServiceHandle {
        addr,
        shared,
        requests: tx,
        threads: vec![acceptor, producer, actor],
        connections,
        _stub: stub,
    })
}

fn actor_loop(mut driver: SessionDriver, rx: Receiver<Request>, shared: Arc<Shared>) {
    while let Ok(request) = rx.recv() {
        match request {
            Request::Action { action, reply } => {
                let result = driver.apply(&action);
                let state = driver.state();
                *shared.state.lock().expect("state lock") = state;
                let _ = reply.send((result, state));
            }
            Request::Report { reply } => {
                let _ = reply.send(driver.report());
            }
            Request::Halt => break,
        }
    }
    debug!("session actor stopped");
}

fn producer_loop(shared: Arc<Shared>, period: Duration) {
    let mut generation = 0u64;
    let mut next = Instant::now();
    while !shared.stop.load(Ordering::SeqCst) {
        let frame = shared.frames.capture();
        match encode_color_png(&frame) {
            Ok(png) => {
                generation += 1;
                let pose = shared.frames.pose();
                let text = json!({
                    "type": "frame",
                    "index": frame.index,
                    "timestamp_ms": frame.timestamp_ms,
                    "width": frame.width(),
                    "height": frame.height(),
                    "state": shared.state(),
                    "pose": pose,
                    "png_base64": base64::engine::general_purpose::STANDARD.encode(png),
                })
                .to_string();
                *shared.latest.lock().expect("frame slot lock") = Some(Arc::new(EncodedFrame { generation, text }));
            }
            Err(e) => warn!("frame encode failed: {e}"),
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    shared: Arc<Shared>,
    requests: Sender<Request>,
    connections: Arc<Mutex<Vec<JoinHandle<()>>>>,
) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (shared, requests) = (shared.clone(), requests.clone());
                let spawned =
                    thread::Builder::new()
                        .name("operator-conn".into())
                        .spawn(move || match handshake(stream) {
                            Ok(ws) => Console::new(ws, shared, requests).run(),
                            Err(e) => warn!("operator handshake with {peer} failed: {e}"),
                        });
                match spawned {
                    Ok(h) => connections.lock().expect("connection lock").push(h),
                    Err(e) => warn!("cannot spawn console thread: {e}"),
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>, String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    stream
        .set_read_timeout(Some(HANDSHAKE_TIMEOUT))
        .map_err(|e| e.to_string())?;
    let _ = stream.set_nodelay(true);
    let ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_ref().set_read_timeout(Some(POLL)).map_err(|e| e.to_string())?;
    Ok(ws)
}

type Pending = (
    Option<u64>,
    &'static str,
    Receiver<(Result<Outcome, SessionError>, SessionState)>,
);

struct Console {
    ws: WebSocket<TcpStream>,
    shared: Arc<Shared>,
    requests: Sender<Request>,
    id: u64,
    role: Role,
    last_generation: u64,
    pending: Vec<Pending>,
    reports: Vec<(Option<u64>, Receiver<Report>)>,
}

fn error_json(code: &str, message: impl Into<String>) -> Value {
    json!({ "code": code, "message": message.into() })
}

impl Console {
    fn new(ws: WebSocket<TcpStream>, shared: Arc<Shared>, requests: Sender<Request>) -> Self {
        let id = shared.register();
        let role = shared.role(id);
        Self {
            ws,
            shared,
            requests,
            id,
            role,
            last_generation: 0,
            pending: Vec::new(),
            reports: Vec::new(),
        }
    }

    fn send(&mut self, v: Value) -> Result<(), tungstenite::Error> {
        self.send_text(v.to_string())
    }

    fn send_text(&mut self, text: String) -> Result<(), tungstenite::Error> {
        self.ws.send(WsMessage::text(text))
    }

    fn run(mut self) {
        info!("console {} connected as {:?}", self.id, self.role);
        let k = self.shared.frames.scene().camera;
        let hello = json!({
            "type": "hello",
            "api_version": API_VERSION,
            "protocol_version": PROTOCOL_VERSION,
            "connection": self.id,
            "role": self.role,
            "state": self.shared.state(),
            "width": k.width,
            "height": k.height,
        });
        if let Err(e) = self.send(hello).and_then(|_| self.pump()) {
            debug!("console {} closed: {e}", self.id);
        }
        self.shared.unregister(self.id);
    }

    fn pump(&mut self) -> Result<(), tungstenite::Error> {
        while !self.shared.stop.load(Ordering::SeqCst) {
            match self.ws.read() {
                Ok(WsMessage::Text(t)) => self.handle(t.as_str())?,
                Ok(WsMessage::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
                Err(e) => return Err(e),
            }
            let role = self.shared.role(self.id);
            if role != self.role {
                self.role = role;
                self.send(json!({ "type": "role", "role": role }))?;
            }
            self.flush_replies()?;
            let latest = self.shared.latest.lock().expect("frame slot lock").clone();
            if let Some(f) = latest {
                if f.generation != self.last_generation {
                    self.last_generation = f.generation;
                    self.send_text(f.text.clone())?;
                }
            }
        }
        let _ = self.ws.close(None);
        Ok(())
    }

    fn handle(&mut self, text: &str) -> Result<(), tungstenite::Error> {
        let message: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                return self.send(json!({
                    "type": "result", "id": null, "ok": false,
                    "error": error_json("BadRequest", e.to_string()),
                    "state": self.shared.state(),
                }))
            }
        };
        match message {
            ClientMessage::Report { id } => {
                let (reply, rx) = mpsc::channel();
                if self.requests.send(Request::Report { reply }).is_err() {
                    return self.send(json!({
                        "type": "report", "id": id, "ok": false,
                        "error": error_json("SessionUnavailable", "the session has stopped"),
                    }));
                }
                self.reports.push((id, rx));
                Ok(())
            }
            ClientMessage::Action { id, action } => {
                let name = action.name();
                if self.shared.role(self.id) == Role::Observer {
                    return match action {
                        Action::Hover { u, v } => {
                            let frame = self.shared.frames.latest();
                            let result = HoverReadout::of(&frame, &self.shared.mount, u, v).map(Outcome::Hover);
                            let state = self.shared.state();
                            self.send(result_json(id, name, result, state))
                        }
                        _ => self.send(json!({
                            "type": "result", "id": id, "action": name, "ok": false,
                            "error": error_json("ReadOnly", "another console holds control; this one may only observe"),
                            "state": self.shared.state(),
                        })),
                    };
                }
                let (reply, rx) = mpsc::channel();
                if self.requests.send(Request::Action { action, reply }).is_err() {
                    return self.send(unavailable(id, name, self.shared.state()));
                }
                self.pending.push((id, name, rx));
                Ok(())
            }
        }
    }

    fn flush_replies(&mut self) -> Result<(), tungstenite::Error> {
        let mut i = 0;
        while i < self.pending.len() {
            let (id, name) = (self.pending[i].0, self.pending[i].1);
            let msg = match self.pending[i].2.try_recv() {
                Ok((result, state)) => result_json(id, name, result, state),
                Err(TryRecvError::Empty) => {
                    i += 1;
                    continue;
                }
                Err(TryRecvError::Disconnected) => unavailable(id, name, self.shared.state()),
            };
            self.pending.remove(i);
            self.send(msg)?;
        }
        let mut i = 0;
        while i < self.reports.len() {
            let id = self.reports[i].0;
            let msg = match self.reports[i].1.try_recv() {
                Ok(report) => json!({ "type": "report", "id": id, "ok": true, "report": report }),
                Err(TryRecvError::Empty) => {
                    i += 1;
                    continue;
                }
                Err(TryRecvError::Disconnected) => json!({
                    "type": "report", "id": id, "ok": false,
                    "error": error_json("SessionUnavailable", "the session has stopped"),
                }),
            };
            self.reports.remove(i);
            self.send(msg)?;
        }
        Ok(())
    }
}

fn unavailable(id: Option<u64>, name: &str, state: SessionState) -> Value {
    json!({
        "type": "result", "id": id, "action": name, "ok": false,
        "error": error_json("SessionUnavailable", "the session has stopped"),
        "state": state,
    })
}

fn result_json(id: Option<u64>, name: &str, result: Result<Outcome, SessionError>, state: SessionState) -> Value {
    match result {
        Ok(outcome) => json!({
            "type": "result", "id": id, "action": name, "ok": true, "outcome": outcome, "state": state,
        }),
        Err(e) => json!({
            "type": "result", "id": id, "action": name, "ok": false,
            "error": error_json(e.code(), e.to_string()), "state": state,
        }),
    }
}
