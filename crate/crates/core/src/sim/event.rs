use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Index into the trace.
    Arrival(usize),
    LaneIdle {
        batch_id: u64,
        lane: usize,
    },
    BatchLayerComplete {
        batch_id: u64,
        layer: usize,
    },
    /// Carries the generation of the timer that armed it; stale timers are ignored.
    TimeoutExpired(u64),
    SimulationEnd,
}

impl EventKind {
    /// Tie-break order for simultaneous events.
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::Arrival(_) => 0,
            EventKind::LaneIdle { .. } => 1,
            EventKind::BatchLayerComplete { .. } => 2,
            EventKind::TimeoutExpired(_) => 3,
            EventKind::SimulationEnd => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Earliest first: reversed so that `BinaryHeap` pops the minimum.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Time-ordered event queue with deterministic tie-breaking by kind, then by
/// insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Event {
            time,
            kind,
            seq: self.seq,
        });
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<Event> {
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
