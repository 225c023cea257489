//! Event queue with a total processing order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SimTime;

/// Event kinds, declared in tie-breaking rank order: at equal timestamps,
/// injection boundaries apply before activity, pushes land before the
/// barrier releases, detection and evaluation run after state updates, and
/// switches act last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    InjectionStart,
    InjectionEnd,
    PullArrives,
    ComputeDone,
    PushArrives,
    BarrierRelease,
    DetectTick,
    EvalTick,
    SwitchBegin,
    SwitchEnd,
}

/// Subject value for cluster-wide events.
pub const CLUSTER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    /// Worker id, or [`CLUSTER`] for cluster-wide events.
    pub subject: u32,
    /// Cancellation generation; events from an older generation of their
    /// subject are dropped on pop.
    pub generation: u32,
    seq: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.subject.cmp(&other.subject))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap over the event total order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<Event>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, kind: EventKind, subject: u32, generation: u32) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(std::cmp::Reverse(Event { time, kind, subject, generation, seq }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|r| r.0)
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
