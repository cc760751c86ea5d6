//! Frame = 4-byte big-endian payload length, then a UTF-8 JSON object
//! `{"type": .., "sequence": .., "payload": ..}`. `payload` is omitted for
//! `Ack`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::message::{Message, MessageBody, MessageType};
use super::ProtocolError;

pub const MAX_FRAME_LEN: usize = 1 << 20;
pub const HEADER_LEN: usize = 4;

#[derive(Serialize)]
struct WireOut<'a, P: Serialize> {
    #[serde(rename = "type")]
    kind: MessageType,
    sequence: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload: Option<&'a P>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireIn {
    #[serde(rename = "type")]
    kind: String,
    sequence: u64,
    #[serde(default)]
    payload: Option<Value>,
}

fn payload_json<P: Serialize>(kind: MessageType, sequence: u64, payload: Option<&P>) -> Result<Vec<u8>, ProtocolError> {
    serde_json::to_vec(&WireOut {
        kind,
        sequence,
        payload,
    })
    .map_err(|e| ProtocolError::Encode(e.to_string()))
}

fn check_finite(values: &[f64]) -> Result<(), ProtocolError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ProtocolError::Encode("non-finite number in payload".into()))
    }
}

/// JSON payload of a message, without the length prefix.
pub fn encode_payload(m: &Message) -> Result<Vec<u8>, ProtocolError> {
    let kind = m.body.kind();
    match &m.body {
        MessageBody::Hello(h) => payload_json(kind, m.sequence, Some(h)),
        MessageBody::ParamSet(p) => {
            p.validate().map_err(ProtocolError::Encode)?;
            payload_json(kind, m.sequence, Some(p))
        }
        MessageBody::Orient(o) => {
            check_finite(&[o.theta_diff, o.wheels.left_rotation, o.wheels.right_rotation])?;
            payload_json(kind, m.sequence, Some(o))
        }
        MessageBody::Drive(d) => {
            check_finite(&[d.distance])?;
            payload_json(kind, m.sequence, Some(d))
        }
        MessageBody::Ack => payload_json::<()>(kind, m.sequence, None),
        MessageBody::Error(e) => payload_json(kind, m.sequence, Some(e)),
    }
}

pub fn encode(m: &Message) -> Result<Vec<u8>, ProtocolError> {
    let payload = encode_payload(m)?;
    if payload.len() > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

fn from_payload<T: for<'de> Deserialize<'de>>(kind: &str, payload: Option<Value>) -> Result<T, ProtocolError> {
    let value = payload.ok_or_else(|| ProtocolError::Decode(format!("{kind} requires a payload")))?;
    serde_json::from_value(value).map_err(|e| ProtocolError::Decode(format!("{kind} payload: {e}")))
}

pub fn decode_payload(bytes: &[u8]) -> Result<Message, ProtocolError> {
    if bytes.is_empty() {
        return Err(ProtocolError::Decode("empty payload".into()));
    }
    let wire: WireIn = serde_json::from_slice(bytes).map_err(|e| ProtocolError::Decode(e.to_string()))?;
    let body = match wire.kind.as_str() {
        "Hello" => MessageBody::Hello(from_payload(&wire.kind, wire.payload)?),
        "ParamSet" => MessageBody::ParamSet(from_payload(&wire.kind, wire.payload)?),
        "Orient" => MessageBody::Orient(from_payload(&wire.kind, wire.payload)?),
        "Drive" => MessageBody::Drive(from_payload(&wire.kind, wire.payload)?),
        "Error" => MessageBody::Error(from_payload(&wire.kind, wire.payload)?),
        "Ack" => {
            if wire.payload.as_ref().is_some_and(|v| !v.is_null()) {
                return Err(ProtocolError::Decode("Ack carries no payload".into()));
            }
            MessageBody::Ack
        }
        other => return Err(ProtocolError::Decode(format!("unknown message type {other:?}"))),
    };
    Ok(Message {
        sequence: wire.sequence,
        body,
    })
}

fn frame_len(header: &[u8]) -> Result<usize, ProtocolError> {
    let len = u32::from_be_bytes([header[0], header[1], header[2], header[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge(len));
    }
    if len == 0 {
        return Err(ProtocolError::Decode("zero-length payload".into()));
    }
    Ok(len)
}

/// Decodes exactly one complete frame.
pub fn decode(bytes: &[u8]) -> Result<Message, ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Incomplete {
            needed: HEADER_LEN - bytes.len(),
        });
    }
    let len = frame_len(&bytes[..HEADER_LEN])?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(ProtocolError::Incomplete {
            needed: total - bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(ProtocolError::Decode(format!(
            "{} trailing bytes after frame",
            bytes.len() - total
        )));
    }
    decode_payload(&bytes[HEADER_LEN..])
}

/// Incremental decoder for a byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete message, `Ok(None)` when more bytes are needed.
    ///
    /// A malformed payload is consumed before its error is returned, so the
    /// stream stays in sync. An oversized length prefix is not recoverable.
    pub fn next_message(&mut self) -> Result<Option<Message>, ProtocolError> {
        if self.buf.len() < HEADER_LEN {
            return Ok(None);
        }
        let len = match frame_len(&self.buf[..HEADER_LEN]) {
            Ok(len) => len,
            Err(ProtocolError::FrameTooLarge(n)) => return Err(ProtocolError::FrameTooLarge(n)),
            Err(e) => {
                self.buf.drain(..HEADER_LEN);
                return Err(e);
            }
        };
        let total = HEADER_LEN + len;
        if self.buf.len() < total {
            return Ok(None);
        }
        let result = decode_payload(&self.buf[HEADER_LEN..total]);
        self.buf.drain(..total);
        result.map(Some)
    }
}
