//! Topic fan-out. Each connection registers one outbound channel; a
//! publication is encoded once and the same bytes go to every subscriber.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::protocol::{encode_body, Frame};

/// Encoded frame body, shared between subscribers.
pub type Body = Arc<Vec<u8>>;

struct Subscriber {
    conn: u64,
    topics: BTreeSet<String>,
    tx: Sender<Body>,
}

#[derive(Default)]
pub struct Hub {
    subs: Mutex<Vec<Subscriber>>,
    next_conn: AtomicU64,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a connection and returns its id.
    pub fn register(&self, tx: Sender<Body>) -> u64 {
        let conn = self.next_conn.fetch_add(1, Ordering::Relaxed);
        self.subs.lock().unwrap().push(Subscriber { conn, topics: BTreeSet::new(), tx });
        conn
    }

    pub fn unregister(&self, conn: u64) {
        self.subs.lock().unwrap().retain(|s| s.conn != conn);
    }

    pub fn subscribe(&self, conn: u64, topic: &str) {
        if let Some(s) = self.subs.lock().unwrap().iter_mut().find(|s| s.conn == conn) {
            s.topics.insert(topic.to_string());
        }
    }

    pub fn unsubscribe(&self, conn: u64, topic: &str) {
        if let Some(s) = self.subs.lock().unwrap().iter_mut().find(|s| s.conn == conn) {
            s.topics.remove(topic);
        }
    }

    pub fn subscribers(&self, topic: &str) -> usize {
        self.subs.lock().unwrap().iter().filter(|s| s.topics.contains(topic)).count()
    }

    /// Sends to every subscriber of `topic`; connections whose channel is
    /// gone are dropped.
    pub fn publish<T: Serialize + ?Sized>(&self, topic: &str, payload: &T) {
        let mut subs = self.subs.lock().unwrap();
        if !subs.iter().any(|s| s.topics.contains(topic)) {
            return;
        }
        let body: Body = Arc::new(encode_body(&Frame::topic(topic, payload)));
        subs.retain(|s| !s.topics.contains(topic) || s.tx.send(body.clone()).is_ok());
    }
}
