//! Simplified model-based rate prober.
//!
//! A small startup / drain / bandwidth-probe / RTT-probe state machine in
//! the style of BBR, used as a rate-based comparator. It keeps a windowed
//! maximum of delivery-rate samples and a windowed minimum RTT, paces at a
//! cycling gain over the bandwidth estimate, and caps the window at twice
//! the estimated BDP. It is intentionally not a faithful BBRv3: there are no
//! ProbeBW UP/DOWN sub-states, no loss or ECN response, and no inflight
//! bounds.

use std::collections::VecDeque;
use std::time::Duration;

use super::{
    AckInfo, Algorithm, CcState, CeKind, CeRecord, CongestionControl, LossSignal, Phase, SegCount,
    INITIAL_CWND,
};
use crate::time::SimTime;

pub const PACING_GAIN_CYCLE: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
/// 2/ln(2): the smallest gain that doubles delivery every round.
pub const STARTUP_GAIN: f64 = 2.885;
pub const CWND_GAIN: f64 = 2.0;
pub const PROBE_RTT_CWND: SegCount = 4.0;
pub const PROBE_RTT_DURATION: Duration = Duration::from_millis(200);
pub const MIN_RTT_WINDOW: Duration = Duration::from_secs(10);
pub const BW_WINDOW_ROUNDS: u64 = 10;
const FULL_BW_GROWTH: f64 = 1.25;
const FULL_BW_ROUNDS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeMode {
    Startup,
    Drain,
    ProbeBw { cycle_index: usize, cycle_start: SimTime },
    ProbeRtt { done_at: Option<SimTime> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRateModel {
    pub mode: ProbeMode,
    /// (round, rate in bit/s) samples still inside the max filter window.
    bw_samples: VecDeque<(u64, f64)>,
    pub min_rtt: Option<Duration>,
    pub min_rtt_stamp: SimTime,
    pub round_count: u64,
    next_round_delivered: u64,
    full_bw: f64,
    full_bw_count: u32,
    pub filled_pipe: bool,
    prior_cwnd: SegCount,
    mss_bits: f64,
}

impl ProbeRateModel {
    pub fn new(mss_bytes: u32) -> Self {
        ProbeRateModel {
            mode: ProbeMode::Startup,
            bw_samples: VecDeque::new(),
            min_rtt: None,
            min_rtt_stamp: SimTime::ZERO,
            round_count: 0,
            next_round_delivered: 0,
            full_bw: 0.0,
            full_bw_count: 0,
            filled_pipe: false,
            prior_cwnd: INITIAL_CWND,
            mss_bits: f64::from(mss_bytes) * 8.0,
        }
    }

    /// Windowed maximum delivery rate, in bit/s.
    pub fn max_bw(&self) -> f64 {
        self.bw_samples.iter().map(|&(_, b)| b).fold(0.0, f64::max)
    }

    /// Estimated bandwidth-delay product in segments.
    pub fn bdp(&self) -> Option<SegCount> {
        let bw = self.max_bw();
        let rtt = self.min_rtt?;
        (bw > 0.0).then(|| bw * rtt.as_secs_f64() / self.mss_bits)
    }

    pub fn pacing_gain(&self) -> f64 {
        match self.mode {
            ProbeMode::Startup => STARTUP_GAIN,
            ProbeMode::Drain => 1.0 / STARTUP_GAIN,
            ProbeMode::ProbeBw { cycle_index, .. } => PACING_GAIN_CYCLE[cycle_index],
            ProbeMode::ProbeRtt { .. } => 1.0,
        }
    }

    fn cwnd_gain(&self) -> f64 {
        match self.mode {
            ProbeMode::Startup | ProbeMode::Drain => STARTUP_GAIN,
            _ => CWND_GAIN,
        }
    }
}

/// One ACK's worth of model update. Returns the new window state, model and
/// pacing rate in bit/s.
pub fn probe_rate_on_ack(
    mut cc: CcState,
    mut m: ProbeRateModel,
    ack: &AckInfo,
) -> (CcState, ProbeRateModel, f64) {
    let now = ack.now;

    // Round accounting and bandwidth filter.
    if let Some(rs) = ack.rate {
        if rs.prior_delivered >= m.next_round_delivered {
            m.next_round_delivered = ack.delivered;
            m.round_count += 1;
            if !m.filled_pipe {
                let bw = m.max_bw();
                if bw >= m.full_bw * FULL_BW_GROWTH {
                    m.full_bw = bw;
                    m.full_bw_count = 0;
                } else {
                    m.full_bw_count += 1;
                    if m.full_bw_count >= FULL_BW_ROUNDS {
                        m.filled_pipe = true;
                    }
                }
            }
        }
        if !rs.is_app_limited || rs.delivery_rate >= m.max_bw() {
            m.bw_samples.push_back((m.round_count, rs.delivery_rate));
        }
        while let Some(&(r, _)) = m.bw_samples.front() {
            if r + BW_WINDOW_ROUNDS <= m.round_count && m.bw_samples.len() > 1 {
                m.bw_samples.pop_front();
            } else {
                break;
            }
        }
    }

    // Min-RTT filter; an expired estimate accepts the next sample.
    let expired = m.min_rtt.is_some() && now.saturating_since(m.min_rtt_stamp) > MIN_RTT_WINDOW;
    if let Some(rtt) = ack.rtt_sample {
        if m.min_rtt.is_none_or(|cur| rtt <= cur) || expired {
            m.min_rtt = Some(rtt);
            m.min_rtt_stamp = now;
        }
    }

    // State machine.
    match m.mode {
        ProbeMode::Startup if m.filled_pipe => m.mode = ProbeMode::Drain,
        ProbeMode::Drain => {
            if m.bdp().is_some_and(|bdp| ack.in_flight as f64 <= bdp) {
                m.mode = ProbeMode::ProbeBw {
                    cycle_index: 0,
                    cycle_start: now,
                };
            }
        }
        ProbeMode::ProbeBw {
            cycle_index,
            cycle_start,
        } => {
            let period = m.min_rtt.unwrap_or(Duration::from_millis(100));
            if now.saturating_since(cycle_start) > period {
                m.mode = ProbeMode::ProbeBw {
                    cycle_index: (cycle_index + 1) % PACING_GAIN_CYCLE.len(),
                    cycle_start: now,
                };
            }
        }
        _ => {}
    }
    if expired && !matches!(m.mode, ProbeMode::ProbeRtt { .. }) {
        m.prior_cwnd = cc.cwnd;
        m.mode = ProbeMode::ProbeRtt { done_at: None };
    }
    if let ProbeMode::ProbeRtt { done_at } = m.mode {
        match done_at {
            None if ack.in_flight as f64 <= PROBE_RTT_CWND => {
                m.mode = ProbeMode::ProbeRtt {
                    done_at: Some(now + PROBE_RTT_DURATION),
                };
            }
            Some(t) if now >= t => {
                m.min_rtt_stamp = now;
                cc.cwnd = cc.cwnd.max(m.prior_cwnd);
                m.mode = if m.filled_pipe {
                    ProbeMode::ProbeBw {
                        cycle_index: 0,
                        cycle_start: now,
                    }
                } else {
                    ProbeMode::Startup
                };
            }
            _ => {}
        }
    }

    // Window.
    if let ProbeMode::ProbeRtt { .. } = m.mode {
        cc.cwnd = cc.cwnd.min(PROBE_RTT_CWND);
    } else {
        let grown = cc.cwnd + ack.newly_acked.max(0.0);
        cc.cwnd = match m.bdp() {
            Some(bdp) if m.filled_pipe => grown.min(m.cwnd_gain() * bdp),
            Some(bdp) => {
                if cc.cwnd < m.cwnd_gain() * bdp {
                    grown
                } else {
                    cc.cwnd
                }
            }
            None => grown,
        }
        .max(PROBE_RTT_CWND);
    }
    cc.phase = match m.mode {
        ProbeMode::Startup => Phase::SlowStart,
        _ => Phase::CongestionAvoidance,
    };

    let bw = m.max_bw();
    let pacing = if bw > 0.0 {
        m.pacing_gain() * bw
    } else {
        let rtt = ack
            .srtt
            .or(ack.rtt_sample)
            .unwrap_or(Duration::from_millis(1))
            .as_secs_f64()
            .max(1e-6);
        STARTUP_GAIN * cc.cwnd * m.mss_bits / rtt
    };
    (cc, m, pacing)
}

#[derive(Debug, Clone)]
pub struct ProbeRateController {
    state: CcState,
    model: ProbeRateModel,
    pacing: Option<f64>,
}

impl ProbeRateController {
    pub fn new(mss_bytes: u32) -> Self {
        ProbeRateController {
            state: CcState::new(Algorithm::ProbeRate),
            model: ProbeRateModel::new(mss_bytes),
            pacing: None,
        }
    }

    pub fn model(&self) -> &ProbeRateModel {
        &self.model
    }
}

impl CongestionControl for ProbeRateController {
    fn algorithm(&self) -> Algorithm {
        Algorithm::ProbeRate
    }

    fn state(&self) -> &CcState {
        &self.state
    }

    fn pacing_rate(&self) -> Option<f64> {
        self.pacing
    }

    fn on_ack(&mut self, ack: &AckInfo) -> Option<CeRecord> {
        let model = std::mem::replace(&mut self.model, ProbeRateModel::new(1));
        let (state, model, pacing) = probe_rate_on_ack(self.state, model, ack);
        self.state = state;
        self.model = model;
        self.pacing = Some(pacing);
        None
    }

    fn on_loss(&mut self, now: SimTime, signal: LossSignal) -> Option<CeRecord> {
        // Model-based: losses only matter when the timer fires.
        match signal {
            LossSignal::FastRetransmit => None,
            LossSignal::Timeout { .. } => {
                let before = self.state.cwnd;
                self.model.prior_cwnd = before.max(self.model.prior_cwnd);
                self.state.cwnd = PROBE_RTT_CWND;
                Some(CeRecord {
                    at: now,
                    kind: CeKind::LossCe,
                    cwnd_before: before,
                    cwnd_after: self.state.cwnd,
                })
            }
        }
    }

    fn on_recovery_exit(&mut self, _now: SimTime) {}
}
