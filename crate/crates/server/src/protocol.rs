//! Wire frames: a 4-byte big-endian length followed by a UTF-8 JSON body
//! `{"kind", "name", "id"?, "payload"}`.
//!
//! Bodies are written canonically (no whitespace, object keys sorted inside
//! payloads, the four frame fields in the order above) so a decoded frame
//! re-encodes to the same bytes.

use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Bodies longer than this are refused; the stream cannot be resynchronized
/// after one.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Topic,
    Request,
    Response,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub kind: FrameKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN} byte limit")]
    TooLong(usize),
    #[error("connection closed inside a frame")]
    Truncated,
    #[error("malformed body: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0:?} frame without a correlation id")]
    MissingId(FrameKind),
    #[error("payload does not match '{name}': {source}")]
    Payload { name: String, source: serde_json::Error },
}

impl Frame {
    pub fn topic<T: Serialize + ?Sized>(name: &str, payload: &T) -> Frame {
        Frame { kind: FrameKind::Topic, name: name.into(), id: None, payload: to_value(payload) }
    }

    pub fn request<T: Serialize + ?Sized>(name: &str, id: u64, payload: &T) -> Frame {
        Frame { kind: FrameKind::Request, name: name.into(), id: Some(id), payload: to_value(payload) }
    }

    pub fn response<T: Serialize + ?Sized>(name: &str, id: Option<u64>, payload: &T) -> Frame {
        Frame { kind: FrameKind::Response, name: name.into(), id, payload: to_value(payload) }
    }

    pub fn error(name: &str, id: Option<u64>, message: impl Into<String>) -> Frame {
        Frame {
            kind: FrameKind::Error,
            name: name.into(),
            id,
            payload: serde_json::json!({ "message": message.into() }),
        }
    }

    /// Typed view of the payload. `null` reads as an empty object so
    /// requests without arguments may omit the payload.
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, ProtocolError> {
        let v = match &self.payload {
            Value::Null => Value::Object(Default::default()),
            v => v.clone(),
        };
        serde_json::from_value(v).map_err(|source| ProtocolError::Payload { name: self.name.clone(), source })
    }

    /// Message carried by an error frame.
    pub fn error_message(&self) -> Option<&str> {
        (self.kind == FrameKind::Error).then(|| self.payload.get("message").and_then(Value::as_str).unwrap_or(""))
    }
}

fn to_value<T: Serialize + ?Sized>(payload: &T) -> Value {
    // payload types are plain data; failure means a non-string map key
    serde_json::to_value(payload).expect("payload serializes to JSON")
}

pub fn encode_body(frame: &Frame) -> Vec<u8> {
    serde_json::to_vec(frame).expect("frames serialize")
}

/// Length prefix plus body.
pub fn encode(frame: &Frame) -> Vec<u8> {
    let body = encode_body(frame);
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_body(body: &[u8]) -> Result<Frame, ProtocolError> {
    let frame: Frame = serde_json::from_slice(body)?;
    match frame.kind {
        FrameKind::Request | FrameKind::Response if frame.id.is_none() => Err(ProtocolError::MissingId(frame.kind)),
        _ => Ok(frame),
    }
}

/// Decodes one complete prefixed frame; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<Frame, ProtocolError> {
    let mut r = bytes;
    let body = read_body(&mut r)?.ok_or(ProtocolError::Truncated)?;
    if !r.is_empty() {
        return Err(ProtocolError::Json(serde::de::Error::custom("trailing bytes after frame")));
    }
    decode_body(&body)
}

/// Best-effort name and id of an undecodable body, for the error reply.
pub fn salvage(body: &[u8]) -> (String, Option<u64>) {
    let v: Value = serde_json::from_slice(body).unwrap_or(Value::Null);
    let name = v.get("name").and_then(Value::as_str).unwrap_or("").to_string();
    (name, v.get("id").and_then(Value::as_u64))
}

/// Reads one body. `Ok(None)` on a clean end of stream between frames.
pub fn read_body<R: Read + ?Sized>(r: &mut R) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_LEN {
        return Err(ProtocolError::TooLong(n));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Truncated,
        _ => ProtocolError::Io(e),
    })?;
    Ok(Some(body))
}

pub fn write_body<W: Write + ?Sized>(w: &mut W, body: &[u8]) -> io::Result<()> {
    if body.len() > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too long"));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, frame: &Frame) -> io::Result<()> {
    write_body(w, &encode_body(frame))
}
