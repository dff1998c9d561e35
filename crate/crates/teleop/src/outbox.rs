//! Per-connection send queue. Telemetry lives in a bounded lane that drops
//! its oldest frame when a slow client falls behind; replies and the end
//! marker live in an unbounded lane and are never dropped.

use std::collections::VecDeque;
use std::sync::{Mutex, PoisonError};

use tokio::sync::Notify;

use crate::protocol::{ServerMessage, TelemetryFrame};

#[derive(Default)]
struct Lanes {
    control: VecDeque<ServerMessage>,
    frames: VecDeque<TelemetryFrame>,
    dropped: u64,
}

pub struct Outbox {
    capacity: usize,
    lanes: Mutex<Lanes>,
    ready: Notify,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Outbox { capacity: capacity.max(1), lanes: Mutex::default(), ready: Notify::new() }
    }

    fn lanes(&self) -> std::sync::MutexGuard<'_, Lanes> {
        self.lanes.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn push(&self, msg: ServerMessage) {
        {
            let mut lanes = self.lanes();
            match msg {
                ServerMessage::Telemetry(frame) => {
                    if lanes.frames.len() == self.capacity {
                        lanes.frames.pop_front();
                        lanes.dropped += 1;
                    }
                    lanes.frames.push_back(*frame);
                }
                other => lanes.control.push_back(other),
            }
        }
        self.ready.notify_one();
    }

    /// Next message to send. Replies go first, but the end marker waits
    /// until the queued frames are out.
    pub fn pop(&self) -> Option<ServerMessage> {
        let mut lanes = self.lanes();
        let end_next = matches!(lanes.control.front(), Some(ServerMessage::End { .. }));
        if !end_next || lanes.frames.is_empty() {
            if let Some(m) = lanes.control.pop_front() {
                return Some(m);
            }
        }
        lanes.frames.pop_front().map(|f| ServerMessage::Telemetry(Box::new(f)))
    }

    /// Waits for the next message.
    pub async fn next(&self) -> ServerMessage {
        loop {
            let notified = self.ready.notified();
            if let Some(m) = self.pop() {
                return m;
            }
            notified.await;
        }
    }

    /// Frames discarded so far because the client fell behind.
    pub fn dropped(&self) -> u64 {
        self.lanes().dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{Session, SessionOptions};
    use sixbar_core::harness::ScenarioConfig;

    fn frames(n: usize) -> Vec<TelemetryFrame> {
        let mut s = Session::new(ScenarioConfig::default(), SessionOptions::default()).unwrap();
        (0..n).map(|i| s.frame(i as f64)).collect()
    }

    #[test]
    fn drops_oldest_frames_only() {
        let outbox = Outbox::new(3);
        outbox.push(ServerMessage::Ack { seq: 1, t: 0.0 });
        for f in frames(5) {
            outbox.push(ServerMessage::Telemetry(Box::new(f)));
        }
        outbox.push(ServerMessage::Ack { seq: 2, t: 0.0 });
        outbox.push(ServerMessage::End { reason: "done".into() });
        assert_eq!(outbox.dropped(), 2);
        let mut kinds = Vec::new();
        while let Some(m) = outbox.pop() {
            kinds.push(match m {
                ServerMessage::Ack { seq, .. } => format!("ack{seq}"),
                ServerMessage::Telemetry(f) => format!("f{}", f.seq),
                ServerMessage::End { .. } => "end".into(),
                _ => unreachable!(),
            });
        }
        assert_eq!(kinds, ["ack1", "ack2", "f2", "f3", "f4", "end"]);
    }
}
