//! Fan-out of calibrated readings from the active device session.
//!
//! A subscriber that joins mid-session first receives everything published so
//! far, then follows the broadcast. Both happen under one lock so nothing is
//! missed or duplicated at the seam.

use std::sync::Mutex;

use serde::Serialize;
use sts_core::ChannelId;
use tokio::sync::broadcast;

const CHANNEL_CAPACITY: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiveEvent {
    pub t_ms: u64,
    pub channel: ChannelId,
    pub kg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LiveMessage {
    Sample(LiveEvent),
    /// Terminal message; the stream closes after it.
    End(String),
}

struct Feed {
    session_id: u64,
    backlog: Vec<LiveEvent>,
    tx: broadcast::Sender<LiveMessage>,
}

#[derive(Default)]
pub struct LiveHub {
    feed: Mutex<Option<Feed>>,
}

pub enum Subscription {
    NoSession,
    Active {
        backlog: Vec<LiveEvent>,
        rx: broadcast::Receiver<LiveMessage>,
    },
}

impl LiveHub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a feed. Any previous feed is ended first.
    pub fn begin(&self, session_id: u64) {
        let mut feed = self.feed.lock().expect("live hub poisoned");
        if let Some(old) = feed.take() {
            let _ = old.tx.send(LiveMessage::End("superseded".into()));
        }
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        *feed = Some(Feed {
            session_id,
            backlog: Vec::new(),
            tx,
        });
    }

    pub fn publish(&self, session_id: u64, event: LiveEvent) {
        let mut feed = self.feed.lock().expect("live hub poisoned");
        if let Some(f) = feed.as_mut().filter(|f| f.session_id == session_id) {
            f.backlog.push(event);
            let _ = f.tx.send(LiveMessage::Sample(event));
        }
    }

    pub fn end(&self, session_id: u64, reason: &str) {
        let mut feed = self.feed.lock().expect("live hub poisoned");
        if feed.as_ref().is_some_and(|f| f.session_id == session_id) {
            let f = feed.take().expect("checked");
            let _ = f.tx.send(LiveMessage::End(reason.into()));
        }
    }

    pub fn is_active(&self) -> bool {
        self.feed.lock().expect("live hub poisoned").is_some()
    }

    pub fn subscribe(&self) -> Subscription {
        let feed = self.feed.lock().expect("live hub poisoned");
        match feed.as_ref() {
            None => Subscription::NoSession,
            Some(f) => Subscription::Active {
                backlog: f.backlog.clone(),
                rx: f.tx.subscribe(),
            },
        }
    }
}
