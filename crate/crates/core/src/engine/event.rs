use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::cluster::InstanceId;
use crate::workflow::{FunctionId, Millis, RequestId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    IntervalTick {
        index: u64,
    },
    KeepAliveExpire {
        instance: InstanceId,
    },
    CreationComplete {
        instance: InstanceId,
    },
    FunctionComplete {
        instance: InstanceId,
        request: RequestId,
        function: FunctionId,
    },
    DataArrival {
        request: RequestId,
        function: FunctionId,
    },
    WorkflowArrival {
        request: RequestId,
    },
}

impl EventKind {
    /// Tie-break among events sharing a timestamp; lower runs first.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::IntervalTick { .. } => 0,
            EventKind::KeepAliveExpire { .. } => 1,
            EventKind::CreationComplete { .. } => 2,
            EventKind::FunctionComplete { .. } => 3,
            EventKind::DataArrival { .. } => 4,
            EventKind::WorkflowArrival { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub time: Millis,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    fn key(&self) -> (Millis, u8, u64) {
        (self.time, self.kind.priority(), self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue ordered by `(time, kind priority, seq)` with a virtual clock
/// that never moves backwards.
#[derive(Debug, Default, Clone)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    clock: Millis,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> Millis {
        self.clock
    }

    pub fn schedule(&mut self, time: Millis, kind: EventKind) -> Result<u64, EngineError> {
        if time < self.clock {
            return Err(EngineError::PastEvent { time, clock: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, seq, kind }));
        Ok(seq)
    }

    /// Removes the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(ev) = self.heap.pop()?;
        self.clock = ev.time;
        Some(ev)
    }

    pub fn peek(&self) -> Option<&Event> {
        self.heap.peek().map(|r| &r.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
