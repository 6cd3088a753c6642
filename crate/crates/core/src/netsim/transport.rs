//! Simplified reliable transport: cumulative ACKs, NewReno fast recovery
//! without SACK, RFC 6298 retransmission timer with Karn's rule, and
//! go-back-N after a timeout.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::Serialize;

use super::{SourceKind, SourceSpec};
use crate::cc::{AckInfo, CeRecord, CongestionControl, LossSignal, RateSample};
use crate::harness::scenario::TransportConfig;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub flow_id: u32,
    /// Segment index within the flow.
    pub seq: u64,
    pub size: u32,
    pub sent_at: SimTime,
    pub is_retransmit: bool,
    /// Unique per (flow, transmission).
    pub tx_id: u64,
    /// Sender's delivered count and its timestamp when this was sent.
    pub delivered_at_send: u64,
    pub delivered_time_at_send: SimTime,
    pub app_limited_at_send: bool,
}

impl Packet {
    /// A bare packet for queue tests.
    pub fn probe(flow_id: u32, seq: u64, size: u32) -> Packet {
        Packet {
            flow_id,
            seq,
            size,
            sent_at: SimTime::ZERO,
            is_retransmit: false,
            tx_id: seq,
            delivered_at_send: 0,
            delivered_time_at_send: SimTime::ZERO,
            app_limited_at_send: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ack {
    pub flow_id: u32,
    /// Next segment the receiver expects.
    pub cum: u64,
    /// The data packet that triggered this ACK.
    pub echo: Packet,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SenderStats {
    pub sent: u64,
    pub retransmits: u64,
    pub fast_retransmits: u64,
    pub timeouts: u64,
    /// New-data sends that left more segments in flight than the window.
    pub window_violations: u64,
    pub acked_segments: u64,
}

pub struct Sender {
    pub flow_id: u32,
    mss: u32,
    cc: Box<dyn CongestionControl>,
    source: SourceSpec,
    send_buffer_segs: Option<u64>,
    cfg: TransportConfig,
    stopped_limit: Option<u64>,
    /// Segments a rate-limited writer has handed to a bounded socket
    /// buffer, and when that was last brought up to date. The writer
    /// blocks while the buffer is full and does not make up the lost time.
    written: f64,
    written_at: SimTime,
    snd_una: u64,
    snd_nxt: u64,
    high_water: u64,
    dupacks: u32,
    in_recovery: bool,
    /// Recovery ends once everything below this is acknowledged.
    recover: Option<u64>,
    inflation: u64,
    /// A partial ACK has already restarted the timer in this recovery.
    partial_acked: bool,
    srtt: Option<Duration>,
    rttvar: Duration,
    rto: Duration,
    backoff: u32,
    rto_deadline: Option<SimTime>,
    app_limited: bool,
    delivered: u64,
    delivered_time: SimTime,
    next_send_at: SimTime,
    wake_at: Option<SimTime>,
    next_tx_id: u64,
    pub stats: SenderStats,
    pub ce_log: Vec<CeRecord>,
}

impl Sender {
    pub fn new(
        flow_id: u32,
        mss: u32,
        cc: Box<dyn CongestionControl>,
        source: SourceSpec,
        send_buffer_bytes: Option<u64>,
        cfg: TransportConfig,
    ) -> Self {
        Sender {
            flow_id,
            mss,
            cc,
            source,
            send_buffer_segs: send_buffer_bytes.map(|b| (b / u64::from(mss)).max(1)),
            cfg,
            stopped_limit: None,
            written: 0.0,
            written_at: source.start_at,
            snd_una: 0,
            snd_nxt: 0,
            high_water: 0,
            dupacks: 0,
            in_recovery: false,
            recover: None,
            inflation: 0,
            partial_acked: false,
            srtt: None,
            rttvar: Duration::ZERO,
            rto: cfg.initial_rto,
            backoff: 0,
            rto_deadline: None,
            app_limited: false,
            delivered: 0,
            delivered_time: source.start_at,
            next_send_at: SimTime::ZERO,
            wake_at: None,
            next_tx_id: 0,
            stats: SenderStats::default(),
            ce_log: Vec::new(),
        }
    }

    pub fn cc(&self) -> &dyn CongestionControl {
        self.cc.as_ref()
    }

    pub fn srtt(&self) -> Option<Duration> {
        self.srtt
    }

    pub fn rto(&self) -> Duration {
        self.rto
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn outstanding(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    /// Segments believed to be in the network: outstanding minus those the
    /// dup-ACKs report as having left it.
    pub fn in_flight(&self) -> u64 {
        self.outstanding().saturating_sub(self.inflation)
    }

    pub fn is_app_limited(&self) -> bool {
        self.app_limited
    }

    pub fn in_recovery(&self) -> bool {
        self.in_recovery
    }

    pub fn acked_bytes(&self) -> u64 {
        self.snd_una * u64::from(self.mss)
    }

    /// Earliest time the sender wants to be woken for pacing or new
    /// application data.
    pub fn wake_at(&self) -> Option<SimTime> {
        self.wake_at
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    fn app_rate_segs(&self) -> Option<f64> {
        match self.source.kind {
            SourceKind::AppLimited { rate_bps } => Some(rate_bps / (f64::from(self.mss) * 8.0)),
            SourceKind::Greedy => None,
        }
    }

    fn source_end(&self) -> SimTime {
        self.source
            .duration
            .map_or(SimTime::MAX, |d| self.source.start_at + d)
    }

    /// Brings a blocking writer up to `now`. Only used with a bounded send
    /// buffer; unbounded writers are evaluated in closed form.
    fn advance_writer(&mut self, now: SimTime) {
        let (Some(rate), Some(buf)) = (self.app_rate_segs(), self.send_buffer_segs) else {
            return;
        };
        if self.stopped_limit.is_some() || now <= self.written_at {
            return;
        }
        let until = now.min(self.source_end());
        let dt = until.saturating_since(self.written_at).as_secs_f64();
        let cap = (self.snd_una + buf) as f64;
        if self.written < cap {
            self.written = (self.written + rate * dt).min(cap);
        }
        self.written_at = now;
    }

    /// Segments the application has handed over by `now`.
    fn app_limit(&self, now: SimTime) -> u64 {
        if let Some(l) = self.stopped_limit {
            return l;
        }
        let Some(rate) = self.app_rate_segs() else {
            return u64::MAX;
        };
        if self.send_buffer_segs.is_some() {
            return self.written.floor() as u64;
        }
        let until = now.min(self.source_end());
        let secs = until.saturating_since(self.source.start_at).as_secs_f64();
        (secs * rate).floor() as u64
    }

    fn data_limit(&self, now: SimTime) -> u64 {
        let app = self.app_limit(now);
        match self.send_buffer_segs {
            Some(buf) => app.min(self.snd_una + buf),
            None => app,
        }
    }

    /// When the application will next hand over segment `n` (0-based), or
    /// `None` if only an ACK can unblock it.
    fn app_data_time(&self, n: u64) -> Option<SimTime> {
        if self.stopped_limit.is_some() {
            return None;
        }
        let rate = self.app_rate_segs()?;
        let t = match self.send_buffer_segs {
            None => {
                let secs = (n + 1) as f64 / rate;
                self.source.start_at + Duration::from_secs_f64(secs)
            }
            Some(buf) => {
                if self.written >= (self.snd_una + buf) as f64 {
                    return None;
                }
                let missing = (self.written.floor() + 1.0 - self.written).max(0.0);
                self.written_at + Duration::from_secs_f64(missing / rate)
            }
        };
        // Guard against the floor in `app_limit` rounding just short.
        Some(t + Duration::from_micros(1))
    }

    pub fn on_start(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        self.delivered_time = now;
        self.written_at = now;
        self.try_send(now, out);
    }

    /// Seeds the RTT estimators with the connection-setup round trip.
    pub fn on_handshake(&mut self, now: SimTime, rtt: Duration) {
        if rtt.is_zero() {
            return;
        }
        self.update_rtt(rtt);
        self.cc.on_rtt_sample(now, rtt);
    }

    /// The application stops producing data.
    pub fn on_stop(&mut self, now: SimTime) {
        self.advance_writer(now);
        let limit = match self.source.kind {
            SourceKind::Greedy => self.high_water,
            SourceKind::AppLimited { .. } => self.app_limit(now),
        };
        self.stopped_limit = Some(limit);
        self.wake_at = None;
    }

    pub fn on_wake(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        self.advance_writer(now);
        self.try_send(now, out);
    }

    fn transmit(&mut self, seq: u64, now: SimTime, out: &mut Vec<Packet>) {
        let is_retransmit = seq < self.high_water;
        let pkt = Packet {
            flow_id: self.flow_id,
            seq,
            size: self.mss,
            sent_at: now,
            is_retransmit,
            tx_id: self.next_tx_id,
            delivered_at_send: self.delivered,
            delivered_time_at_send: self.delivered_time,
            app_limited_at_send: self.app_limited,
        };
        self.next_tx_id += 1;
        self.stats.sent += 1;
        if is_retransmit {
            self.stats.retransmits += 1;
        }
        self.high_water = self.high_water.max(seq + 1);
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
        out.push(pkt);
    }

    fn try_send(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        self.wake_at = None;
        loop {
            let window = (self.cc.cwnd().floor() as u64).max(1) + self.inflation;
            if self.outstanding() >= window {
                self.app_limited = false;
                return;
            }
            let limit = self.data_limit(now);
            if self.snd_nxt >= limit {
                self.app_limited = true;
                if self.snd_nxt >= self.app_limit(now) {
                    self.wake_at = self.app_data_time(self.snd_nxt);
                }
                return;
            }
            let pacing = self.cc.pacing_rate().filter(|r| *r > 0.0);
            if pacing.is_some() && now < self.next_send_at {
                self.wake_at = Some(self.next_send_at);
                return;
            }
            let seq = self.snd_nxt;
            self.snd_nxt += 1;
            self.transmit(seq, now, out);
            if self.in_flight() > self.cc.cwnd().floor().max(1.0) as u64 {
                self.stats.window_violations += 1;
            }
            if let Some(rate) = pacing {
                let gap = Duration::from_secs_f64(f64::from(self.mss) * 8.0 / rate);
                self.next_send_at = self.next_send_at.max(now) + gap;
            }
        }
    }

    fn record(&mut self, rec: Option<CeRecord>) {
        if let Some(r) = rec {
            self.ce_log.push(r);
        }
    }

    fn update_rtt(&mut self, r: Duration) {
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = r / 2;
            }
            Some(s) => {
                let err = s.abs_diff(r);
                self.rttvar = (self.rttvar * 3 + err) / 4;
                self.srtt = Some((s * 7 + r) / 8);
            }
        }
        self.recompute_rto();
    }

    fn recompute_rto(&mut self) {
        if let Some(s) = self.srtt {
            self.rto = (s + self.rttvar * 4).clamp(self.cfg.min_rto, self.cfg.max_rto);
        }
    }

    pub fn on_ack(&mut self, now: SimTime, ack: &Ack, out: &mut Vec<Packet>) {
        self.advance_writer(now);
        if ack.cum > self.snd_una {
            self.on_new_ack(now, ack, out);
        } else if ack.cum == self.snd_una && self.snd_nxt > self.snd_una {
            self.on_dupack(now, out);
        }
        self.try_send(now, out);
    }

    fn on_new_ack(&mut self, now: SimTime, ack: &Ack, out: &mut Vec<Packet>) {
        let newly = ack.cum - self.snd_una;
        // Karn: only unambiguous transmissions give RTT samples.
        let sample = (!ack.echo.is_retransmit)
            .then(|| now.saturating_since(ack.echo.sent_at))
            .filter(|d| !d.is_zero());
        if let Some(r) = sample {
            self.update_rtt(r);
        }
        self.backoff = 0;
        self.recompute_rto();
        self.snd_una = ack.cum;
        self.snd_nxt = self.snd_nxt.max(self.snd_una);
        self.delivered += newly;
        self.delivered_time = now;
        self.stats.acked_segments += newly;
        self.dupacks = 0;

        let mut exited = false;
        let mut restart_timer = true;
        if self.in_recovery {
            if self.recover.is_some_and(|r| ack.cum >= r) {
                self.in_recovery = false;
                self.inflation = 0;
                exited = true;
            } else {
                // Partial ACK: repair the next hole straight away. Only the
                // first one restarts the timer, so a burst of losses falls
                // back to a timeout instead of one hole per round trip.
                restart_timer = !self.partial_acked;
                self.partial_acked = true;
                let una = self.snd_una;
                self.transmit(una, now, out);
                self.inflation = (self.inflation + 1).saturating_sub(newly);
            }
        }
        if self.snd_nxt == self.snd_una {
            self.rto_deadline = None;
        } else if restart_timer {
            self.rto_deadline = Some(now + self.rto);
        }

        let elapsed = now.saturating_since(ack.echo.delivered_time_at_send);
        let rate = (!elapsed.is_zero()).then(|| RateSample {
            delivery_rate: (self.delivered - ack.echo.delivered_at_send) as f64
                * f64::from(self.mss)
                * 8.0
                / elapsed.as_secs_f64(),
            prior_delivered: ack.echo.delivered_at_send,
            is_app_limited: ack.echo.app_limited_at_send,
        });
        if exited {
            self.cc.on_recovery_exit(now);
        }
        let info = AckInfo {
            now,
            newly_acked: newly as f64,
            rtt_sample: sample,
            srtt: self.srtt,
            is_app_limited: self.app_limited,
            in_recovery: self.in_recovery,
            in_flight: self.in_flight(),
            delivered: self.delivered,
            rate,
        };
        let rec = self.cc.on_ack(&info);
        self.record(rec);
    }

    fn on_dupack(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        self.dupacks += 1;
        if self.in_recovery {
            self.inflation += 1;
            return;
        }
        // Dup-ACKs that do not cover more than `recover` may be echoes of
        // our own retransmissions; they must not start a new episode.
        let eligible = self.recover.is_none_or(|r| self.snd_una > r);
        if self.dupacks == 3 && eligible {
            self.in_recovery = true;
            self.partial_acked = false;
            self.recover = Some(self.snd_nxt);
            self.inflation = 3;
            self.stats.fast_retransmits += 1;
            let una = self.snd_una;
            self.transmit(una, now, out);
            let rec = self.cc.on_loss(now, LossSignal::FastRetransmit);
            self.record(rec);
        }
    }

    pub fn on_rto(&mut self, now: SimTime, out: &mut Vec<Packet>) {
        match self.rto_deadline {
            Some(d) if d <= now => {}
            _ => return,
        }
        if self.snd_nxt == self.snd_una {
            self.rto_deadline = None;
            return;
        }
        self.advance_writer(now);
        self.stats.timeouts += 1;
        let rec = self.cc.on_loss(now, LossSignal::Timeout { backoff: self.backoff });
        self.record(rec);
        self.backoff += 1;
        self.rto = (self.rto * 2).min(self.cfg.max_rto);
        self.recover = Some(self.high_water);
        self.in_recovery = false;
        self.inflation = 0;
        self.dupacks = 0;
        self.snd_nxt = self.snd_una + 1;
        let una = self.snd_una;
        self.rto_deadline = None;
        self.transmit(una, now, out);
        self.rto_deadline = Some(now + self.rto);
        self.try_send(now, out);
    }
}

/// Cumulative-ACK receiver with an out-of-order buffer.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    rcv_nxt: u64,
    ooo: BTreeSet<u64>,
    /// Every data packet that reached the receiver, duplicates included.
    pub received: u64,
    pub duplicates: u64,
    delayed: bool,
    held: Option<Packet>,
    hold_generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiverAction {
    AckNow(Ack),
    /// Hold the ACK; flush it at the delayed-ACK timeout unless another
    /// segment arrives first. Carries the timer generation.
    Hold(u64),
}

impl Receiver {
    pub fn new(delayed_ack: bool) -> Self {
        Receiver {
            delayed: delayed_ack,
            ..Receiver::default()
        }
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn on_packet(&mut self, pkt: Packet) -> ReceiverAction {
        self.received += 1;
        let in_order = pkt.seq == self.rcv_nxt;
        if in_order {
            self.rcv_nxt += 1;
            while self.ooo.remove(&self.rcv_nxt) {
                self.rcv_nxt += 1;
            }
        } else if pkt.seq > self.rcv_nxt {
            if !self.ooo.insert(pkt.seq) {
                self.duplicates += 1;
            }
        } else {
            self.duplicates += 1;
        }
        let ack = Ack {
            flow_id: pkt.flow_id,
            cum: self.rcv_nxt,
            echo: pkt,
        };
        if self.delayed && in_order && self.ooo.is_empty() && self.held.is_none() {
            self.held = Some(pkt);
            self.hold_generation += 1;
            return ReceiverAction::Hold(self.hold_generation);
        }
        self.held = None;
        ReceiverAction::AckNow(ack)
    }

    /// Delayed-ACK timer expiry.
    pub fn on_timer(&mut self, generation: u64) -> Option<Ack> {
        if generation != self.hold_generation {
            return None;
        }
        self.held.take().map(|pkt| Ack {
            flow_id: pkt.flow_id,
            cum: self.rcv_nxt,
            echo: pkt,
        })
    }
}
