//! Event loop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::link::{service_time, Bottleneck, EnqueueOutcome};
use super::trace::{DropCause, DropRecord, FlowAudit, FlowTrace, Sample, TraceSet};
use super::transport::{Ack, Packet, Receiver, ReceiverAction, Sender};
use crate::cc::build_controller;
use crate::error::Result;
use crate::harness::scenario::{FlowSpec, ScenarioSpec};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Handshake(u32),
    FlowStart(u32),
    SourceStop(u32),
    DequeueComplete,
    Deliver(Packet),
    AckDeliver(Ack),
    RtoFire(u32),
    Wake(u32),
    DelayedAck { flow: u32, generation: u64 },
    RateChange(f64),
    Sample,
}

#[derive(Debug, Clone, Copy)]
pub struct SimEvent {
    pub at: SimTime,
    /// Insertion order; breaks ties between events at the same instant.
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct FlowState {
    spec: FlowSpec,
    sender: Sender,
    receiver: Receiver,
    started: bool,
    stop_at: Option<SimTime>,
    dropped: u64,
    propagating: u64,
    wake_scheduled: Option<SimTime>,
    rto_scheduled: Option<SimTime>,
    last_acked_bytes: u64,
    handshake_rtt: Option<Duration>,
}

struct Sim {
    now: SimTime,
    seq: u64,
    heap: BinaryHeap<SimEvent>,
    bottleneck: Bottleneck,
    prop: Duration,
    mtu: u32,
    flows: Vec<FlowState>,
    injector: crate::harness::scenario::InjectorConfig,
    delayed_ack_timeout: Duration,
    rng: ChaCha8Rng,
    samples: Vec<Sample>,
    drops: Vec<DropRecord>,
    sample_interval: Duration,
    last_sample_at: SimTime,
    processed: u64,
    outbox: Vec<Packet>,
}

impl Sim {
    fn schedule(&mut self, at: SimTime, kind: EventKind) {
        self.heap.push(SimEvent {
            at,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    /// Hands freshly sent packets to the bottleneck and re-arms timers.
    fn flush(&mut self, flow: usize) {
        let mut out = std::mem::take(&mut self.outbox);
        for pkt in out.drain(..) {
            match self.bottleneck.arrive(pkt) {
                (EnqueueOutcome::Accepted, Some(service)) => {
                    self.schedule(self.now + service, EventKind::DequeueComplete)
                }
                (EnqueueOutcome::Accepted, None) => {}
                (EnqueueOutcome::Dropped, _) => {
                    self.flows[pkt.flow_id as usize].dropped += 1;
                    self.drops.push(DropRecord {
                        at: self.now,
                        flow_id: pkt.flow_id,
                        seq: pkt.seq,
                        cause: DropCause::Droptail,
                    });
                }
            }
        }
        self.outbox = out;

        let f = &self.flows[flow];
        let (wake, rto) = (f.sender.wake_at(), f.sender.rto_deadline());
        if let Some(w) = wake {
            if f.wake_scheduled.is_none_or(|s| w < s) {
                self.flows[flow].wake_scheduled = Some(w);
                self.schedule(w, EventKind::Wake(flow as u32));
            }
        }
        if let Some(d) = rto {
            if self.flows[flow].rto_scheduled.is_none_or(|s| d < s) {
                self.flows[flow].rto_scheduled = Some(d);
                self.schedule(d, EventKind::RtoFire(flow as u32));
            }
        }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Handshake(id) => {
                // The handshake is modeled as one full-sized segment queued
                // behind the current backlog; the reply returns on the
                // uncongested reverse path.
                let own = service_time(self.mtu, self.bottleneck.rate_bps);
                let rtt = self.prop * 2 + self.bottleneck.backlog_delay() + own;
                self.flows[id as usize].handshake_rtt = Some(rtt);
            }
            EventKind::FlowStart(id) => {
                let f = &mut self.flows[id as usize];
                f.started = true;
                if let Some(rtt) = f.handshake_rtt.take() {
                    f.sender.on_handshake(self.now, rtt);
                }
                f.sender.on_start(self.now, &mut self.outbox);
                self.flush(id as usize);
            }
            EventKind::SourceStop(id) => {
                self.flows[id as usize].sender.on_stop(self.now);
            }
            EventKind::DequeueComplete => {
                let (pkt, next) = self.bottleneck.complete();
                if let Some(service) = next {
                    self.schedule(self.now + service, EventKind::DequeueComplete);
                }
                let mut delay = self.prop;
                if self.injector.is_active() && self.injector.covers(self.now) {
                    if self.injector.loss_prob > 0.0 && self.rng.gen_bool(self.injector.loss_prob) {
                        self.flows[pkt.flow_id as usize].dropped += 1;
                        self.drops.push(DropRecord {
                            at: self.now,
                            flow_id: pkt.flow_id,
                            seq: pkt.seq,
                            cause: DropCause::Injected,
                        });
                        return;
                    }
                    let j = self.injector.jitter.as_micros() as u64;
                    let p = self.injector.jitter_prob;
                    if j > 0 && (p >= 1.0 || self.rng.gen_bool(p)) {
                        delay += Duration::from_micros(self.rng.gen_range(0..=j));
                    }
                }
                self.flows[pkt.flow_id as usize].propagating += 1;
                self.schedule(self.now + delay, EventKind::Deliver(pkt));
            }
            EventKind::Deliver(pkt) => {
                let id = pkt.flow_id as usize;
                self.flows[id].propagating -= 1;
                match self.flows[id].receiver.on_packet(pkt) {
                    ReceiverAction::AckNow(ack) => {
                        self.schedule(self.now + self.prop, EventKind::AckDeliver(ack))
                    }
                    ReceiverAction::Hold(generation) => self.schedule(
                        self.now + self.delayed_ack_timeout,
                        EventKind::DelayedAck {
                            flow: pkt.flow_id,
                            generation,
                        },
                    ),
                }
            }
            EventKind::DelayedAck { flow, generation } => {
                if let Some(ack) = self.flows[flow as usize].receiver.on_timer(generation) {
                    self.schedule(self.now + self.prop, EventKind::AckDeliver(ack));
                }
            }
            EventKind::AckDeliver(ack) => {
                let id = ack.flow_id as usize;
                self.flows[id].sender.on_ack(self.now, &ack, &mut self.outbox);
                self.flush(id);
            }
            EventKind::RtoFire(id) => {
                let f = &mut self.flows[id as usize];
                if f.rto_scheduled == Some(self.now) {
                    f.rto_scheduled = None;
                    if f.sender.rto_deadline().is_some_and(|d| d <= self.now) {
                        f.sender.on_rto(self.now, &mut self.outbox);
                    }
                    self.flush(id as usize);
                }
            }
            EventKind::Wake(id) => {
                let f = &mut self.flows[id as usize];
                if f.wake_scheduled == Some(self.now) {
                    f.wake_scheduled = None;
                    f.sender.on_wake(self.now, &mut self.outbox);
                    self.flush(id as usize);
                }
            }
            EventKind::RateChange(rate) => {
                // The packet in service keeps its old completion time.
                self.bottleneck.rate_bps = rate;
            }
            EventKind::Sample => {
                self.take_samples();
                self.schedule(self.now + self.sample_interval, EventKind::Sample);
            }
        }
    }

    fn take_samples(&mut self) {
        let queue = self.bottleneck.occupancy();
        let secs = self.now.saturating_since(self.last_sample_at).as_secs_f64();
        self.last_sample_at = self.now;
        for f in self.flows.iter_mut().filter(|f| f.started) {
            let acked = f.sender.acked_bytes();
            let goodput = (acked - f.last_acked_bytes) as f64 * 8.0 / secs / 1e6;
            f.last_acked_bytes = acked;
            let cc = f.sender.cc();
            self.samples.push(Sample {
                time: self.now,
                flow_id: f.spec.id,
                cwnd: cc.cwnd(),
                srtt_ms: f.sender.srtt().map(|d| d.as_secs_f64() * 1e3),
                goodput_mbps: goodput,
                queue_seg: queue,
                acked_bytes: acked,
                phase: cc.state().phase,
                srrtt: cc.roccet().map(|r| r.srrtt),
            });
        }
    }
}

/// Executes a validated scenario to its horizon.
pub fn run(scenario: &ScenarioSpec) -> Result<TraceSet> {
    scenario.validate_network()?;
    let link = scenario.link_spec()?;
    let capacity = scenario.queue_capacity()?;
    let horizon = SimTime::ZERO + scenario.horizon;
    let specs = scenario.expand_flows();

    let mut sim = Sim {
        now: SimTime::ZERO,
        seq: 0,
        heap: BinaryHeap::new(),
        bottleneck: Bottleneck::new(capacity, link.initial_rate()),
        prop: link.prop_delay_one_way,
        mtu: link.mtu,
        flows: Vec::with_capacity(specs.len()),
        injector: scenario.injector,
        delayed_ack_timeout: scenario.transport.delayed_ack_timeout,
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        samples: Vec::new(),
        drops: Vec::new(),
        sample_interval: scenario.sampling.interval,
        last_sample_at: SimTime::ZERO,
        processed: 0,
        outbox: Vec::new(),
    };

    for spec in specs {
        let cc = build_controller(spec.algo, &spec.controller);
        let sender = Sender::new(
            spec.id,
            link.mtu,
            cc,
            spec.source,
            spec.send_buffer_bytes,
            scenario.transport,
        );
        let stop_at = spec.source.duration.map(|d| spec.source.start_at + d);
        // Connection setup takes one base RTT before the first data segment.
        let syn_at = spec.source.start_at.saturating_sub(sim.prop * 2);
        sim.schedule(syn_at, EventKind::Handshake(spec.id));
        if let Some(t) = stop_at {
            sim.schedule(t, EventKind::SourceStop(spec.id));
        }
        sim.flows.push(FlowState {
            spec,
            sender,
            receiver: Receiver::new(scenario.transport.delayed_ack),
            started: false,
            stop_at,
            dropped: 0,
            propagating: 0,
            wake_scheduled: None,
            rto_scheduled: None,
            last_acked_bytes: 0,
            handshake_rtt: None,
        });
    }
    // Scheduled after every SYN, so handshakes win ties with data starts.
    let starts: Vec<_> = sim.flows.iter().map(|f| (f.spec.source.start_at, f.spec.id)).collect();
    for (at, id) in starts {
        sim.schedule(at, EventKind::FlowStart(id));
    }
    if !sim.flows.is_empty() {
        for &(at, rate) in &link.rate_schedule[1..] {
            sim.schedule(at, EventKind::RateChange(rate));
        }
        sim.schedule(SimTime::ZERO + sim.sample_interval, EventKind::Sample);
    }

    while let Some(ev) = sim.heap.peek() {
        if ev.at > horizon {
            break;
        }
        let ev = sim.heap.pop().expect("peeked");
        sim.now = ev.at;
        sim.processed += 1;
        sim.handle(ev.kind);
    }
    // Close the last partial interval so totals are exact.
    let interval_us = sim.sample_interval.as_micros() as u64;
    if !sim.flows.is_empty() && !horizon.as_micros().is_multiple_of(interval_us) {
        sim.now = horizon;
        sim.take_samples();
    }

    let mut in_queue = vec![0u64; sim.flows.len()];
    for p in sim.bottleneck.queue.iter().chain(sim.bottleneck.in_service.iter()) {
        in_queue[p.flow_id as usize] += 1;
    }
    let flows = sim
        .flows
        .iter()
        .map(|f| FlowTrace {
            flow_id: f.spec.id,
            algo: f.spec.algo,
            start_at: f.spec.source.start_at,
            stop_at: f.stop_at,
            ce_log: f.sender.ce_log.clone(),
            acked_bytes: f.sender.acked_bytes(),
            stats: f.sender.stats.clone(),
            audit: FlowAudit {
                sent: f.sender.stats.sent,
                delivered: f.receiver.received,
                dropped: f.dropped,
                in_queue: in_queue[f.spec.id as usize],
                in_flight: f.propagating,
            },
        })
        .collect();

    Ok(TraceSet {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        config: scenario.to_toml_string(),
        sample_interval: sim.sample_interval,
        horizon,
        link_rate_bps: link.initial_rate(),
        queue_capacity: capacity,
        flows,
        samples: sim.samples,
        drops: sim.drops,
        events_processed: sim.processed,
    })
}
