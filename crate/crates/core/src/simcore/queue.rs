use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::SimError;
use crate::identity::NodeId;

use super::Time;

#[derive(Debug, Clone)]
pub enum EventKind<M, A> {
    Deliver {
        to: NodeId,
        from: NodeId,
        msg: M,
        addressed: bool,
    },
    LinkChange {
        a: NodeId,
        b: NodeId,
        up: bool,
    },
    TimerFire {
        node: NodeId,
        token: u64,
    },
    NodeAction {
        node: NodeId,
        action: A,
    },
}

#[derive(Debug, Clone)]
pub struct Event<M, A> {
    pub time: Time,
    pub seq: u64,
    pub kind: EventKind<M, A>,
}

struct Slot<M, A>(Event<M, A>);

impl<M, A> PartialEq for Slot<M, A> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.seq) == (other.0.time, other.0.seq)
    }
}

impl<M, A> Eq for Slot<M, A> {}

impl<M, A> PartialOrd for Slot<M, A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M, A> Ord for Slot<M, A> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// Min-queue ordered by `(time, seq)`; `seq` grows in scheduling order.
pub struct EventQueue<M, A> {
    heap: BinaryHeap<Slot<M, A>>,
    next_seq: u64,
    now: Time,
}

impl<M, A> Default for EventQueue<M, A> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }
}

impl<M, A> EventQueue<M, A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: Time, kind: EventKind<M, A>) -> Result<u64, SimError> {
        if time < self.now {
            return Err(SimError::Ordering {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Slot(Event { time, seq, kind }));
        Ok(seq)
    }

    pub fn pop(&mut self) -> Option<Event<M, A>> {
        let Slot(ev) = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<Time> {
        self.heap.peek().map(|s| s.0.time)
    }
}
