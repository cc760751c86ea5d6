use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::codec::{decode, encode, FrameDecoder};
use super::message::{Hello, Message, MessageBody, PROTOCOL_VERSION};
use super::LinkError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);

/// Acknowledgement of a delivered command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub sequence: u64,
}

/// Anything that can carry commands to the slave and report the matching Ack.
pub trait CommandLink: Send {
    fn deliver(&mut self, body: MessageBody) -> Result<Ack, LinkError>;
}

fn classify_io(e: io::Error) -> LinkError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => LinkError::TransportTimeout,
        io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe
        | io::ErrorKind::UnexpectedEof
        | io::ErrorKind::NotConnected => LinkError::TransportClosed,
        _ => LinkError::Io(e.to_string()),
    }
}

/// Framed message stream over TCP with a per-connection sequence counter.
pub struct Connection {
    stream: TcpStream,
    decoder: FrameDecoder,
    last_sequence: u64,
}

impl Connection {
    pub fn connect(addr: SocketAddr, timeout: Duration) -> Result<Self, LinkError> {
        let stream =
            TcpStream::connect_timeout(&addr, timeout).map_err(|e| LinkError::Connect(format!("{addr}: {e}")))?;
        Ok(Self::from_stream(stream))
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        let _ = stream.set_nodelay(true);
        Self {
            stream,
            decoder: FrameDecoder::new(),
            last_sequence: 0,
        }
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }

    /// Sends `body` under the next sequence number and returns that number.
    pub fn send(&mut self, body: MessageBody) -> Result<u64, LinkError> {
        let sequence = self.last_sequence + 1;
        self.send_message(&Message::new(sequence, body))?;
        self.last_sequence = sequence;
        Ok(sequence)
    }

    pub fn send_message(&mut self, m: &Message) -> Result<(), LinkError> {
        let bytes = encode(m)?;
        self.stream.write_all(&bytes).map_err(classify_io)?;
        self.stream.flush().map_err(classify_io)
    }

    pub fn recv(&mut self, timeout: Duration) -> Result<Message, LinkError> {
        let deadline = Instant::now() + timeout;
        let mut chunk = [0u8; 8192];
        loop {
            if let Some(m) = self.decoder.next_message()? {
                return Ok(m);
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(LinkError::TransportTimeout);
            }
            self.stream.set_read_timeout(Some(remaining)).map_err(classify_io)?;
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(LinkError::TransportClosed),
                Ok(n) => self.decoder.push(&chunk[..n]),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(classify_io(e)),
            }
        }
    }

    /// Sends `body` and waits for the Ack echoing its sequence.
    pub fn request(&mut self, body: MessageBody, timeout: Duration) -> Result<Ack, LinkError> {
        let deadline = Instant::now() + timeout;
        let sequence = self.send(body)?;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let reply = self.recv(remaining)?;
            match reply.body {
                MessageBody::Ack if reply.sequence == sequence => return Ok(Ack { sequence }),
                MessageBody::Ack if reply.sequence < sequence => continue,
                MessageBody::Ack => {
                    return Err(LinkError::SequenceMismatch {
                        sent: sequence,
                        got: reply.sequence,
                    })
                }
                MessageBody::Error(e) => {
                    return Err(LinkError::Rejected {
                        code: e.code,
                        text: e.text,
                    })
                }
                other => return Err(LinkError::Unexpected(format!("{:?}", other.kind()))),
            }
        }
    }

    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Client side of the slave link. Connects lazily, greets with `Hello`, and
/// drops the connection on any transport failure so the next explicit
/// delivery reconnects. It never retries on its own.
pub struct SlaveLink {
    addr: String,
    timeout: Duration,
    conn: Option<Connection>,
}

impl SlaveLink {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout: DEFAULT_TIMEOUT,
            conn: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn is_connected(&self) -> bool {
        self.conn.is_some()
    }

    fn connection(&mut self) -> Result<&mut Connection, LinkError> {
        if self.conn.is_none() {
            let addr = self
                .addr
                .to_socket_addrs()
                .map_err(|e| LinkError::Connect(format!("{}: {e}", self.addr)))?
                .next()
                .ok_or_else(|| LinkError::Connect(format!("{}: no address", self.addr)))?;
            let mut conn = Connection::connect(addr, self.timeout)?;
            conn.request(
                MessageBody::Hello(Hello {
                    peer: "doorpick-host".into(),
                    protocol_version: PROTOCOL_VERSION,
                }),
                self.timeout,
            )?;
            self.conn = Some(conn);
        }
        Ok(self.conn.as_mut().expect("connected above"))
    }
}

impl CommandLink for SlaveLink {
    fn deliver(&mut self, body: MessageBody) -> Result<Ack, LinkError> {
        let timeout = self.timeout;
        let result = self.connection().and_then(|c| c.request(body, timeout));
        if matches!(
            result,
            Err(LinkError::TransportClosed | LinkError::TransportTimeout | LinkError::Io(_) | LinkError::Protocol(_))
        ) {
            if let Some(c) = self.conn.take() {
                c.shutdown();
            }
        }
        result
    }
}

/// In-process link: every command goes through the wire codec and lands in
/// a shared log.
#[derive(Clone, Default)]
pub struct LoopbackLink {
    log: Arc<Mutex<Vec<Message>>>,
    last_sequence: u64,
}

impl LoopbackLink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn log(&self) -> Vec<Message> {
        self.log.lock().expect("log lock").clone()
    }
}

impl CommandLink for LoopbackLink {
    fn deliver(&mut self, body: MessageBody) -> Result<Ack, LinkError> {
        let sequence = self.last_sequence + 1;
        let delivered = decode(&encode(&Message::new(sequence, body))?)?;
        self.log.lock().expect("log lock").push(delivered);
        self.last_sequence = sequence;
        Ok(Ack { sequence })
    }
}
