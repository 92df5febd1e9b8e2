//! Deterministic discrete-event scheduler.
//!
//! Events are ordered by `(fire_time, seq)` where `seq` is a global insertion
//! counter, so two events scheduled for the same instant always run in the
//! order they were scheduled.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("cannot schedule at {fire_time} (clock is at {clock})")]
    PastTime { fire_time: SimTime, clock: SimTime },
}

/// Handle returned by [`EventQueue::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

impl EventId {
    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug)]
struct Entry<A> {
    fire_time: SimTime,
    seq: u64,
    action: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.seq == other.seq
    }
}

impl<A> Eq for Entry<A> {}

impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Entry<A> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_time, self.seq).cmp(&(other.fire_time, other.seq))
    }
}

/// Priority queue of timestamped actions plus the simulation clock.
#[derive(Debug)]
pub struct EventQueue<A> {
    clock: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<A>>>,
    cancelled: HashSet<u64>,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        EventQueue {
            clock: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn schedule(&mut self, fire_time: SimTime, action: A) -> Result<EventId, EngineError> {
        if fire_time < self.clock {
            return Err(EngineError::PastTime {
                fire_time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry {
            fire_time,
            seq,
            action,
        }));
        Ok(EventId(seq))
    }

    /// Schedules `action` `delay` microseconds from now. Never fails.
    pub fn schedule_in(&mut self, delay: u64, action: A) -> EventId {
        let at = self.clock + delay;
        self.schedule(at, action)
            .expect("relative schedule is never in the past")
    }

    /// Cancels a pending event. Returns false if it already fired or was
    /// cancelled before.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq {
            return false;
        }
        let pending = self.heap.iter().any(|Reverse(e)| e.seq == id.0);
        pending && self.cancelled.insert(id.0)
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    /// Pops the next live event with `fire_time <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, EventId, A)> {
        loop {
            let head = self.heap.peek()?;
            if head.0.fire_time > t_end {
                return None;
            }
            let Reverse(entry) = self.heap.pop()?;
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.clock = entry.fire_time;
            return Some((entry.fire_time, EventId(entry.seq), entry.action));
        }
    }

    /// Executes every event with `fire_time <= t_end` in `(time, seq)` order.
    /// The handler may schedule further events, including ones that fire
    /// within the same call. Leaves the clock at `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Self, SimTime, A),
    {
        let mut executed = 0;
        while let Some((at, _, action)) = self.pop_until(t_end) {
            handler(self, at, action);
            executed += 1;
        }
        if t_end > self.clock {
            self.clock = t_end;
        }
        executed
    }
}
