//! Bottleneck link and droptail queue.

use std::collections::VecDeque;
use std::time::Duration;

use serde::Serialize;

use super::transport::Packet;
use crate::error::{LabError, Result};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkSpec {
    /// `(from, bits per second)`, strictly increasing in time, first at zero.
    pub rate_schedule: Vec<(SimTime, f64)>,
    pub prop_delay_one_way: Duration,
    pub mtu: u32,
}

impl LinkSpec {
    pub fn new(rate_schedule: Vec<(SimTime, f64)>, prop_delay_one_way: Duration, mtu: u32) -> Result<Self> {
        let bad = |m: String| Err(LabError::Validation(m));
        match rate_schedule.first() {
            Some((t, _)) if *t == SimTime::ZERO => {}
            _ => return bad("link rate schedule must start at t = 0".into()),
        }
        if rate_schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("link rate schedule times must be strictly increasing".into());
        }
        if let Some((_, r)) = rate_schedule.iter().find(|(_, r)| !(r.is_finite() && *r > 0.0)) {
            return bad(format!("link rates must be > 0, got {r} bit/s"));
        }
        if mtu < 64 {
            return bad(format!("mtu must be >= 64 bytes, got {mtu}"));
        }
        Ok(LinkSpec {
            rate_schedule,
            prop_delay_one_way,
            mtu,
        })
    }

    pub fn constant(rate_bps: f64, rtt: Duration) -> Result<Self> {
        Self::new(vec![(SimTime::ZERO, rate_bps)], rtt / 2, 1500)
    }

    pub fn initial_rate(&self) -> f64 {
        self.rate_schedule[0].1
    }

    pub fn base_rtt(&self) -> Duration {
        self.prop_delay_one_way * 2
    }

    /// Packets in flight that fill the pipe at the initial rate.
    pub fn bdp_packets(&self) -> f64 {
        self.initial_rate() * self.base_rtt().as_secs_f64() / (f64::from(self.mtu) * 8.0)
    }
}

/// Serialization time of `bytes` at `rate_bps`, rounded to the microsecond
/// and never zero.
pub fn service_time(bytes: u32, rate_bps: f64) -> Duration {
    let us = (f64::from(bytes) * 8.0 * 1e6 / rate_bps).round();
    Duration::from_micros((us as u64).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Accepted,
    Dropped,
}

/// Droptail FIFO. `capacity` counts waiting packets; the one being
/// serialized is held by [`Bottleneck`].
#[derive(Debug, Clone)]
pub struct QueueState {
    pub capacity: usize,
    waiting: VecDeque<Packet>,
    pub drops: u64,
}

impl QueueState {
    pub fn new(capacity: usize) -> Self {
        QueueState {
            capacity,
            waiting: VecDeque::with_capacity(capacity.min(1 << 16)),
            drops: 0,
        }
    }

    pub fn occupancy(&self) -> usize {
        self.waiting.len()
    }

    pub fn pop(&mut self) -> Option<Packet> {
        self.waiting.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.waiting.iter()
    }
}

pub fn enqueue(queue: &mut QueueState, pkt: Packet) -> EnqueueOutcome {
    if queue.waiting.len() >= queue.capacity {
        queue.drops += 1;
        EnqueueOutcome::Dropped
    } else {
        queue.waiting.push_back(pkt);
        EnqueueOutcome::Accepted
    }
}

/// Queue plus the serializer draining it.
#[derive(Debug, Clone)]
pub struct Bottleneck {
    pub queue: QueueState,
    pub in_service: Option<Packet>,
    pub rate_bps: f64,
}

impl Bottleneck {
    pub fn new(capacity: usize, rate_bps: f64) -> Self {
        Bottleneck {
            queue: QueueState::new(capacity),
            in_service: None,
            rate_bps,
        }
    }

    /// Packets held at the bottleneck, including the one in service.
    pub fn occupancy(&self) -> usize {
        self.queue.occupancy() + usize::from(self.in_service.is_some())
    }

    /// Time to serialize everything held, counting the packet in service
    /// in full.
    pub fn backlog_delay(&self) -> Duration {
        self.in_service
            .iter()
            .chain(self.queue.iter())
            .map(|p| service_time(p.size, self.rate_bps))
            .sum()
    }

    /// Offers a packet. Returns the service time when it goes straight
    /// onto an idle serializer.
    pub fn arrive(&mut self, pkt: Packet) -> (EnqueueOutcome, Option<Duration>) {
        if self.in_service.is_none() {
            let t = service_time(pkt.size, self.rate_bps);
            self.in_service = Some(pkt);
            return (EnqueueOutcome::Accepted, Some(t));
        }
        (enqueue(&mut self.queue, pkt), None)
    }

    /// Finishes the packet in service and starts the next one at the
    /// current rate.
    pub fn complete(&mut self) -> (Packet, Option<Duration>) {
        let done = self.in_service.take().expect("completion without a packet in service");
        let next = self.queue.pop().map(|p| {
            let t = service_time(p.size, self.rate_bps);
            self.in_service = Some(p);
            t
        });
        (done, next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(seq: u64) -> Packet {
        Packet::probe(0, seq, 1500)
    }

    #[test]
    fn droptail_accepts_until_full() {
        let mut q = QueueState::new(2);
        assert_eq!(enqueue(&mut q, pkt(0)), EnqueueOutcome::Accepted);
        assert_eq!(enqueue(&mut q, pkt(1)), EnqueueOutcome::Accepted);
        assert_eq!(enqueue(&mut q, pkt(2)), EnqueueOutcome::Dropped);
        assert_eq!(q.occupancy(), 2);
        assert_eq!(q.drops, 1);
    }

    #[test]
    fn burst_overflow_drops_exactly_excess() {
        for (cap, k) in [(5usize, 3usize), (1, 10), (64, 0), (10, 1)] {
            let mut q = QueueState::new(cap);
            let dropped = (0..cap + k)
                .filter(|&i| enqueue(&mut q, pkt(i as u64)) == EnqueueOutcome::Dropped)
                .count();
            assert_eq!(dropped, k);
        }
    }

    #[test]
    fn service_time_matches_rate() {
        assert_eq!(service_time(1500, 50e6), Duration::from_micros(240));
        assert_eq!(service_time(1500, 25e6), Duration::from_micros(480));
        assert_eq!(service_time(1500, 10e6), Duration::from_micros(1200));
        assert_eq!(service_time(1, 1e12), Duration::from_micros(1));
    }

    #[test]
    fn bdp_of_reference_links() {
        let l = LinkSpec::constant(10e6, Duration::from_millis(40)).unwrap();
        assert!((l.bdp_packets() - 10e6 * 0.04 / 12_000.0).abs() < 1e-9);
        let l = LinkSpec::constant(50e6, Duration::from_millis(30)).unwrap();
        assert!((l.bdp_packets() - 125.0).abs() < 1e-9);
    }

    #[test]
    fn schedule_validation() {
        let d = Duration::from_millis(20);
        assert!(LinkSpec::new(vec![], d, 1500).is_err());
        assert!(LinkSpec::new(vec![(SimTime::from_secs(1), 1e6)], d, 1500).is_err());
        assert!(LinkSpec::new(vec![(SimTime::ZERO, 1e6), (SimTime::ZERO, 2e6)], d, 1500).is_err());
        assert!(LinkSpec::new(vec![(SimTime::ZERO, 0.0)], d, 1500).is_err());
    }

    #[test]
    fn serializer_is_fifo() {
        let mut b = Bottleneck::new(4, 10e6);
        assert!(b.arrive(pkt(0)).1.is_some());
        for s in 1..4 {
            assert_eq!(b.arrive(pkt(s)), (EnqueueOutcome::Accepted, None));
        }
        let order: Vec<u64> = (0..4).map(|_| b.complete().0.seq).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert_eq!(b.occupancy(), 0);
    }
}
