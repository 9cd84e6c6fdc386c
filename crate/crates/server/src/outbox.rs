//! Per-connection outbound queue.
//!
//! Frames are capped at [`FRAME_CAP`]; pushing onto a full queue discards the
//! oldest frame so a slow reader never holds back the room. Control messages
//! are never dropped.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use axum::extract::ws::Utf8Bytes;
use tokio::sync::Notify;

pub const FRAME_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Frame(Utf8Bytes),
    Control(Utf8Bytes),
}

impl Outgoing {
    pub fn text(&self) -> &Utf8Bytes {
        match self {
            Outgoing::Frame(t) | Outgoing::Control(t) => t,
        }
    }
}

#[derive(Default)]
struct Queue {
    items: VecDeque<Outgoing>,
    frames: usize,
    closed: bool,
}

/// Single-consumer queue; the consumer is the connection's writer task.
#[derive(Default)]
pub struct Outbox {
    queue: Mutex<Queue>,
    notify: Notify,
    dropped: AtomicU64,
}

impl Outbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_frame(&self, text: Utf8Bytes) {
        let mut q = self.queue.lock().unwrap();
        if q.closed {
            return;
        }
        if q.frames == FRAME_CAP {
            let oldest = q.items.iter().position(|m| matches!(m, Outgoing::Frame(_)));
            if let Some(i) = oldest {
                q.items.remove(i);
                q.frames -= 1;
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        q.items.push_back(Outgoing::Frame(text));
        q.frames += 1;
        drop(q);
        self.notify.notify_one();
    }

    pub fn push_control(&self, text: impl Into<Utf8Bytes>) {
        let mut q = self.queue.lock().unwrap();
        if q.closed {
            return;
        }
        q.items.push_back(Outgoing::Control(text.into()));
        drop(q);
        self.notify.notify_one();
    }

    /// Stops accepting messages; already queued ones are still delivered.
    pub fn close(&self) {
        self.queue.lock().unwrap().closed = true;
        self.notify.notify_one();
    }

    pub fn close_with(&self, text: impl Into<Utf8Bytes>) {
        self.push_control(text);
        self.close();
    }

    pub fn is_closed(&self) -> bool {
        self.queue.lock().unwrap().closed
    }

    pub fn frames_dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    fn pop(&self) -> Option<Option<Outgoing>> {
        let mut q = self.queue.lock().unwrap();
        match q.items.pop_front() {
            Some(m) => {
                if matches!(m, Outgoing::Frame(_)) {
                    q.frames -= 1;
                }
                Some(Some(m))
            }
            None if q.closed => Some(None),
            None => None,
        }
    }

    /// Next message, or `None` once closed and drained.
    pub async fn recv(&self) -> Option<Outgoing> {
        loop {
            if let Some(next) = self.pop() {
                return next;
            }
            // notify_one stores a permit, so a push between pop and here is not lost
            self.notify.notified().await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn drops_oldest_frame_but_keeps_control() {
        let ob = Outbox::new();
        ob.push_control("info");
        for k in 0..12 {
            ob.push_frame(format!("f{k}").into());
        }
        ob.close_with("bye");
        let mut got = Vec::new();
        while let Some(m) = ob.recv().await {
            got.push(m.text().as_str().to_owned());
        }
        assert_eq!(got, ["info", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11", "bye"]);
        assert_eq!(ob.frames_dropped(), 4);
        ob.push_frame("late".into());
        assert!(ob.recv().await.is_none());
    }

    #[tokio::test]
    async fn wakes_a_waiting_consumer() {
        let ob = std::sync::Arc::new(Outbox::new());
        let consumer = tokio::spawn({
            let ob = ob.clone();
            async move { ob.recv().await }
        });
        tokio::task::yield_now().await;
        ob.push_frame("x".into());
        assert_eq!(consumer.await.unwrap(), Some(Outgoing::Frame("x".into())));
    }
}
