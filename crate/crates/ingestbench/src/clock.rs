//! Simulation clock and the ordered event queue that drives it.
//!
//! Exactly one driver advances the clock: the event loop in virtual time, or
//! the OS clock pacing that same loop in real time. Two runs with equal
//! config and seed pop events in the same order, which is what makes whole
//! runs byte-deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::Nanos;

/// How the clock advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeMode {
    /// Event-driven; a 600 s run takes wall time proportional to event count.
    #[default]
    VirtualTime,
    /// The same event schedule paced against the OS monotonic clock.
    RealTime,
}

impl TimeMode {
    pub fn parse(s: &str) -> Option<TimeMode> {
        match s {
            "virtual" => Some(TimeMode::VirtualTime),
            "realtime" => Some(TimeMode::RealTime),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TimeMode::VirtualTime => "virtual",
            TimeMode::RealTime => "realtime",
        }
    }
}

/// Monotonically non-decreasing simulation clock.
#[derive(Debug)]
pub struct SimClock {
    now: Nanos,
    mode: TimeMode,
}

impl SimClock {
    pub fn new(mode: TimeMode) -> Self {
        SimClock { now: 0, mode }
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn mode(&self) -> TimeMode {
        self.mode
    }

    /// Advance to `t`. Regressions are a logic error in the driver.
    pub fn advance_to(&mut self, t: Nanos) {
        assert!(t >= self.now, "clock regression: {} -> {}", self.now, t);
        self.now = t;
    }
}

/// Tie-break class for events scheduled at the same instant. Completions
/// run before ticks, ticks before new sends, so releases are visible to
/// whoever wakes next at that time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventClass {
    LinkDone = 0,
    ReplicaArrive = 1,
    DiskDone = 2,
    Tick = 3,
    SenderWake = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct EventKey {
    at: Nanos,
    class: EventClass,
    /// Actor index within the class (sender index, link id, broker id).
    /// Lower sender index fires first among equal-time wakeups.
    actor: u32,
    seq: u64,
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.class, self.actor, self.seq).cmp(&(
            other.at,
            other.class,
            other.actor,
            other.seq,
        ))
    }
}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Scheduled<E> {
    key: EventKey,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<E> Eq for Scheduled<E> {}
impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Scheduled<E> {
    // Reversed: BinaryHeap is a max-heap, we want the earliest key first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

/// Time-ordered event queue with a deterministic total order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    seq: u64,
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            seq: 0,
        }
    }

    pub fn push(&mut self, at: Nanos, class: EventClass, actor: u32, event: E) {
        let key = EventKey {
            at,
            class,
            actor,
            seq: self.seq,
        };
        self.seq += 1;
        self.heap.push(Scheduled { key, event });
    }

    pub fn pop(&mut self) -> Option<(Nanos, E)> {
        self.heap.pop().map(|s| (s.key.at, s.event))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clock_is_monotone() {
        let mut c = SimClock::new(TimeMode::VirtualTime);
        c.advance_to(5);
        c.advance_to(5);
        c.advance_to(9);
        assert_eq!(c.now(), 9);
    }

    #[test]
    #[should_panic(expected = "clock regression")]
    fn clock_rejects_regression() {
        let mut c = SimClock::new(TimeMode::VirtualTime);
        c.advance_to(10);
        c.advance_to(9);
    }

    #[test]
    fn queue_orders_by_time_then_class_then_actor() {
        let mut q = EventQueue::new();
        q.push(10, EventClass::SenderWake, 1, "wake1");
        q.push(10, EventClass::SenderWake, 0, "wake0");
        q.push(10, EventClass::DiskDone, 7, "disk");
        q.push(5, EventClass::Tick, 0, "tick");

        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|(_, e)| e).collect();
        assert_eq!(order, vec!["tick", "disk", "wake0", "wake1"]);
    }

    #[test]
    fn equal_keys_pop_in_push_order() {
        let mut q = EventQueue::new();
        for i in 0..10 {
            q.push(1, EventClass::LinkDone, 0, i);
        }
        let popped: Vec<_> = std::iter::from_fn(|| q.pop()).map(|(_, e)| e).collect();
        assert_eq!(popped, (0..10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn pop_times_never_decrease(times in proptest::collection::vec(0u64..1000, 1..200)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.push(*t, EventClass::SenderWake, i as u32 % 4, i);
            }
            let mut last = 0;
            while let Some((t, _)) = q.pop() {
                prop_assert!(t >= last);
                last = t;
            }
        }
    }
}
