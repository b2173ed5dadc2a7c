//! Discrete-event queue.
//!
//! Events are processed in (fire_at, sequence) order. The sequence number is
//! assigned at insertion, so ties at the same timestamp resolve in scheduling
//! order and traces stay stable under refactoring.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::mac::FlowId;
use crate::mac::TransportBlock;
use crate::time::SimTime;

#[derive(Debug)]
pub enum EventKind {
    PacketArrival { flow: FlowId },
    BsrTimer { flow: FlowId },
    SubframeBoundary,
    TbDelivery { flow: FlowId, tb: TransportBlock },
    MobilityTick,
}

/// Handle returned by `schedule`, usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventHandle(u64);

struct QueuedEvent {
    fire_at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<QueuedEvent>,
    cancelled: HashSet<u64>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.heap.len() == self.cancelled.len()
    }

    /// Scheduling in the past is a programming error and aborts the run.
    pub fn schedule(&mut self, fire_at: SimTime, kind: EventKind) -> EventHandle {
        assert!(
            fire_at >= self.now,
            "event scheduled in the past: fire_at={} now={}",
            fire_at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(QueuedEvent { fire_at, seq, kind });
        EventHandle(seq)
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pops the next non-cancelled event with fire_at <= t_end, advancing the
    /// clock to its timestamp.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, EventKind)> {
        loop {
            let fire_at = self.heap.peek()?.fire_at;
            if fire_at > t_end {
                return None;
            }
            let ev = self.heap.pop().unwrap();
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now, "non-monotone event order");
            self.now = ev.fire_at;
            return Some((ev.fire_at, ev.kind));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(q: &mut EventQueue, t_end: SimTime) -> Vec<(SimTime, EventKind)> {
        let mut out = Vec::new();
        while let Some(ev) = q.pop_until(t_end) {
            out.push(ev);
        }
        out
    }

    #[test]
    fn boundary_event_at_zero_fires_first() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(3), EventKind::MobilityTick);
        q.schedule(SimTime::ZERO, EventKind::SubframeBoundary);
        let evs = drain(&mut q, SimTime::from_millis(10));
        assert!(matches!(evs[0].1, EventKind::SubframeBoundary));
        assert_eq!(evs[0].0, SimTime::ZERO);
        assert_eq!(evs.len(), 2);
    }

    #[test]
    fn equal_fire_at_processed_in_sequence_order() {
        let mut q = EventQueue::new();
        let t = SimTime::from_millis(5);
        q.schedule(t, EventKind::BsrTimer { flow: 7 });
        q.schedule(t, EventKind::BsrTimer { flow: 8 });
        let evs = drain(&mut q, t);
        let flows: Vec<_> = evs
            .iter()
            .map(|(_, k)| match k {
                EventKind::BsrTimer { flow } => *flow,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(flows, vec![7, 8]);
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn scheduling_in_the_past_is_fatal() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_millis(2), EventKind::MobilityTick);
        q.pop_until(SimTime::from_millis(2));
        q.schedule(SimTime::from_nanos(2_000_000 - 1), EventKind::MobilityTick);
    }

    #[test]
    fn events_after_t_end_not_processed() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs_f64(3.0), EventKind::MobilityTick);
        assert!(q.pop_until(SimTime::from_secs_f64(2.0)).is_none());
        assert!(!q.is_empty());
    }

    #[test]
    fn cancelled_events_are_skipped() {
        let mut q = EventQueue::new();
        let h = q.schedule(SimTime::from_millis(1), EventKind::MobilityTick);
        q.schedule(SimTime::from_millis(2), EventKind::SubframeBoundary);
        q.cancel(h);
        let evs = drain(&mut q, SimTime::from_millis(10));
        assert_eq!(evs.len(), 1);
        assert!(matches!(evs[0].1, EventKind::SubframeBoundary));
    }

    #[test]
    fn processing_order_is_total() {
        // Random-ish schedule, verify (fire_at, seq) is non-decreasing.
        let mut q = EventQueue::new();
        for i in 0..100u64 {
            let t = SimTime::from_nanos((i * 7919) % 50);
            q.schedule(t, EventKind::BsrTimer { flow: i as usize });
        }
        let evs = drain(&mut q, SimTime::from_millis(1));
        assert_eq!(evs.len(), 100);
        for w in evs.windows(2) {
            assert!(w[0].0 <= w[1].0);
        }
    }
}
