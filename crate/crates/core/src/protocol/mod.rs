//! Host-to-slave wire protocol: length-prefixed JSON frames over TCP, plus
//! a recording slave stub.

mod codec;
mod link;
mod message;
mod stub;

use thiserror::Error;

pub use codec::{decode, decode_payload, encode, encode_payload, FrameDecoder, HEADER_LEN, MAX_FRAME_LEN};
pub use link::{Ack, CommandLink, Connection, LoopbackLink, SlaveLink, DEFAULT_TIMEOUT};
pub use message::{
    DriveCommand, ErrorReport, Hello, Message, MessageBody, MessageType, OrientCommand, ParameterSet, PROTOCOL_VERSION,
};
pub use stub::SlaveStub;

/// Default TCP port of the slave endpoint.
pub const DEFAULT_SLAVE_PORT: u16 = 7401;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("frame payload of {0} bytes exceeds the 1 MiB limit")]
    FrameTooLarge(usize),
    #[error("need {needed} more bytes")]
    Incomplete { needed: usize },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("encode error: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("timed out waiting for the slave")]
    TransportTimeout,
    #[error("slave connection closed")]
    TransportClosed,
    #[error("cannot reach slave at {0}")]
    Connect(String),
    #[error("slave rejected the command ({code}): {text}")]
    Rejected { code: String, text: String },
    #[error("slave acknowledged sequence {got}, expected {sent}")]
    SequenceMismatch { sent: u64, got: u64 },
    #[error("unexpected {0} reply from slave")]
    Unexpected(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o error: {0}")]
    Io(String),
}
