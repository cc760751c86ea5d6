use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};

use super::codec::{encode, FrameDecoder};
use super::message::{ErrorReport, Message, MessageBody};
use super::ProtocolError;

/// Stand-in for the motion-control computer. Logs every decoded message in
/// arrival order and acknowledges each valid frame.
pub struct SlaveStub {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<Message>>>,
    stop: Arc<AtomicBool>,
    peers: Arc<Mutex<Vec<TcpStream>>>,
    accept: Option<JoinHandle<()>>,
}

impl SlaveStub {
    pub fn bind(addr: impl ToSocketAddrs) -> io::Result<Self> {
        Self::spawn(TcpListener::bind(addr)?)
    }

    pub fn spawn(listener: TcpListener) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let log = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let peers = Arc::new(Mutex::new(Vec::new()));
        let accept = {
            let (log, stop, peers) = (log.clone(), stop.clone(), peers.clone());
            thread::Builder::new()
                .name("slave-stub-accept".into())
                .spawn(move || accept_loop(listener, log, stop, peers))?
        };
        Ok(Self {
            addr,
            log,
            stop,
            peers,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn log(&self) -> Vec<Message> {
        self.log.lock().expect("log lock").clone()
    }

    /// Stops accepting and severs every open connection.
    pub fn kill(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for peer in self.peers.lock().expect("peer lock").drain(..) {
            let _ = peer.shutdown(Shutdown::Both);
        }
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for SlaveStub {
    fn drop(&mut self) {
        self.kill();
    }
}

fn accept_loop(
    listener: TcpListener,
    log: Arc<Mutex<Vec<Message>>>,
    stop: Arc<AtomicBool>,
    peers: Arc<Mutex<Vec<TcpStream>>>,
) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("slave stub: connection from {peer}");
                let _ = stream.set_nonblocking(false);
                if let Ok(clone) = stream.try_clone() {
                    peers.lock().expect("peer lock").push(clone);
                }
                let (log, stop) = (log.clone(), stop.clone());
                let _ = thread::Builder::new()
                    .name("slave-stub-conn".into())
                    .spawn(move || serve_connection(stream, log, stop));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                warn!("slave stub: accept failed: {e}");
                thread::sleep(Duration::from_millis(5));
            }
        }
    }
}

fn reply(stream: &mut TcpStream, m: &Message) -> io::Result<()> {
    let bytes = encode(m).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    stream.write_all(&bytes)
}

fn error_reply(sequence: u64, code: &str, text: String) -> Message {
    Message::new(
        sequence,
        MessageBody::Error(ErrorReport {
            code: code.into(),
            text,
        }),
    )
}

fn serve_connection(mut stream: TcpStream, log: Arc<Mutex<Vec<Message>>>, stop: Arc<AtomicBool>) {
    let mut decoder = FrameDecoder::new();
    let mut last_sequence = 0u64;
    let mut chunk = [0u8; 8192];
    let _ = stream.set_read_timeout(Some(Duration::from_millis(50)));
    while !stop.load(Ordering::SeqCst) {
        match stream.read(&mut chunk) {
            Ok(0) => return,
            Ok(n) => decoder.push(&chunk[..n]),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted
                ) =>
            {
                continue
            }
            Err(_) => return,
        }
        loop {
            let outcome = match decoder.next_message() {
                Ok(None) => break,
                Ok(Some(m)) if m.sequence <= last_sequence => reply(
                    &mut stream,
                    &error_reply(
                        m.sequence,
                        "sequence",
                        format!("sequence {} does not follow {last_sequence}", m.sequence),
                    ),
                ),
                Ok(Some(m)) => {
                    last_sequence = m.sequence;
                    let ack = Message::ack(m.sequence);
                    log.lock().expect("log lock").push(m);
                    reply(&mut stream, &ack)
                }
                Err(e @ ProtocolError::FrameTooLarge(_)) => {
                    let _ = reply(&mut stream, &error_reply(0, "frame_too_large", e.to_string()));
                    let _ = stream.shutdown(Shutdown::Both);
                    return;
                }
                Err(e) => reply(&mut stream, &error_reply(0, "decode", e.to_string())),
            };
            if outcome.is_err() {
                return;
            }
        }
    }
}
