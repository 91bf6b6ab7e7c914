use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    ServiceStart,
    ServiceEnd,
    SessionStep,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::ServiceStart => "service_start",
            EventKind::ServiceEnd => "service_end",
            EventKind::SessionStep => "session_step",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    Start,
    Finish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subject {
    Message(u64),
    Session(u64, SessionPhase),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
    pub subject: Subject,
    pub node: NodeId,
}

// Min-heap order on (time, seq); seq is unique so this is total.
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Eq for SimEvent {}

/// Pending events, popped in `(time, seq)` order. Sequence numbers are
/// handed out at scheduling time.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn schedule(&mut self, time: f64, kind: EventKind, subject: Subject, node: NodeId) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent {
            time,
            seq,
            kind,
            subject,
            node,
        });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_by_time_then_seq() {
        let mut q = EventQueue::default();
        let s = Subject::Message(0);
        q.schedule(2.0, EventKind::Arrival, s, NodeId(0));
        q.schedule(1.0, EventKind::ServiceEnd, s, NodeId(1));
        q.schedule(1.0, EventKind::ServiceStart, s, NodeId(2));
        q.schedule(0.5, EventKind::Arrival, s, NodeId(3));
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.seq))
            .collect();
        assert_eq!(order, vec![(0.5, 3), (1.0, 1), (1.0, 2), (2.0, 0)]);
    }
}
