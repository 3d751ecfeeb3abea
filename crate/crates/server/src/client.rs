//! Blocking client for the TCP protocol.

use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::messages::{services, TopicRequest};
use crate::protocol::{decode_body, read_body, write_frame, Frame, FrameKind, ProtocolError};

const BACKLOG_LIMIT: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{name}: {message}")]
    Service { name: String, message: String },
    #[error("server closed the connection")]
    Closed,
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    next_id: u64,
    backlog: VecDeque<Frame>,
    /// Error frames that answer no request, such as rejected publications.
    pub stray_errors: Vec<Frame>,
    call_timeout: Duration,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            next_id: 1,
            backlog: VecDeque::new(),
            stray_errors: Vec::new(),
            call_timeout: Duration::from_secs(600),
        })
    }

    pub fn set_call_timeout(&mut self, t: Duration) {
        self.call_timeout = t;
    }

    /// Sends a request and waits for its reply. Topic frames that arrive in
    /// the meantime are kept for `next_topic`.
    pub fn call<Req: Serialize + ?Sized, Resp: DeserializeOwned>(&mut self, name: &str, req: &Req) -> Result<Resp, ClientError> {
        let v = self.call_value(name, req)?;
        let tmp = Frame { kind: FrameKind::Response, name: name.into(), id: None, payload: v };
        Ok(tmp.payload_as()?)
    }

    pub fn call_value<Req: Serialize + ?Sized>(&mut self, name: &str, req: &Req) -> Result<Value, ClientError> {
        let id = self.next_id;
        self.next_id += 1;
        write_frame(&mut self.writer, &Frame::request(name, id, req))?;
        loop {
            let f = self.read_frame(self.call_timeout)?.ok_or_else(|| {
                ClientError::Io(io::Error::new(io::ErrorKind::TimedOut, format!("{name}: no reply")))
            })?;
            match f.kind {
                FrameKind::Topic => self.keep(f),
                FrameKind::Response if f.id == Some(id) => return Ok(f.payload),
                FrameKind::Error if f.id == Some(id) => {
                    let message = f.error_message().unwrap_or("").to_string();
                    return Err(ClientError::Service { name: name.into(), message });
                }
                _ => self.stray_errors.push(f),
            }
        }
    }

    pub fn publish<T: Serialize + ?Sized>(&mut self, topic: &str, payload: &T) -> Result<(), ClientError> {
        write_frame(&mut self.writer, &Frame::topic(topic, payload))?;
        Ok(())
    }

    pub fn subscribe(&mut self, topic: &str) -> Result<(), ClientError> {
        self.call_value(services::SUBSCRIBE, &TopicRequest { topic: topic.into() }).map(|_| ())
    }

    pub fn unsubscribe(&mut self, topic: &str) -> Result<(), ClientError> {
        self.call_value(services::UNSUBSCRIBE, &TopicRequest { topic: topic.into() }).map(|_| ())
    }

    /// Next buffered or incoming topic frame; `None` after `timeout`.
    pub fn next_topic(&mut self, timeout: Duration) -> Result<Option<Frame>, ClientError> {
        if let Some(f) = self.backlog.pop_front() {
            return Ok(Some(f));
        }
        loop {
            match self.read_frame(timeout)? {
                None => return Ok(None),
                Some(f) if f.kind == FrameKind::Topic => return Ok(Some(f)),
                Some(f) => self.stray_errors.push(f),
            }
        }
    }

    /// Everything already received, without waiting.
    pub fn drain_topics(&mut self) -> Result<Vec<Frame>, ClientError> {
        while let Some(f) = self.read_frame(Duration::from_millis(1))? {
            match f.kind {
                FrameKind::Topic => self.keep(f),
                _ => self.stray_errors.push(f),
            }
        }
        Ok(self.backlog.drain(..).collect())
    }

    fn keep(&mut self, f: Frame) {
        if self.backlog.len() == BACKLOG_LIMIT {
            self.backlog.pop_front();
        }
        self.backlog.push_back(f);
    }

    /// Waits up to `timeout` for the start of a frame, then reads it whole.
    fn read_frame(&mut self, timeout: Duration) -> Result<Option<Frame>, ClientError> {
        if self.reader.buffer().is_empty() {
            self.reader.get_ref().set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
            match self.reader.fill_buf() {
                Ok([]) => return Err(ClientError::Closed),
                Ok(_) => {}
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
        self.reader.get_ref().set_read_timeout(Some(Duration::from_secs(30)))?;
        let body = read_body(&mut self.reader)?.ok_or(ClientError::Closed)?;
        Ok(Some(decode_body(&body)?))
    }

    /// Raw access for protocol tests.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.writer.write_all(bytes)?;
        self.writer.flush()
    }

    pub fn recv_any(&mut self, timeout: Duration) -> Result<Option<Frame>, ClientError> {
        if let Some(f) = self.backlog.pop_front() {
            return Ok(Some(f));
        }
        self.read_frame(timeout)
    }
}
