//! ROCCET: delay-based congestion detection layered on CUBIC.
//!
//! Two signals drive it. The smoothed relative RTT (`srrtt`) is an EWMA of
//! the relative inflation of the transport's smoothed RTT over the minimum
//! raw RTT. The ACK deficit compares segments acknowledged during an
//! interval with `cum_cwnd`, the sum of the window sampled once per round.
//!
//! In slow start (LAUNCH) the two are checked every `launch_interval`; in
//! congestion avoidance (ORBITER) every `orbiter_interval_rtts` rounds.
//! A round is one `rtt_min` of elapsed time, so a flow whose ACKs return
//! slower than the base RTT accumulates a deficit.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cc::cubic::{cubic_on_ack, cubic_on_congestion_event, cubic_on_timeout};
use crate::cc::{
    AckInfo, Algorithm, CcState, CeKind, CeRecord, CongestionControl, CubicParams, LossSignal,
    Phase, SegCount, Ssthresh, MIN_CWND,
};
use crate::error::{LabError, Result};
use crate::time::{serde_millis, serde_secs, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoccetParams {
    /// EWMA weight of the newest inflation sample.
    pub alpha: f64,
    /// srRTT bound; 1.0 means the RTT has doubled.
    pub srrtt_threshold: f64,
    pub launch_ack_margin: SegCount,
    #[serde(rename = "launch_interval_ms", with = "serde_millis")]
    pub launch_interval: Duration,
    pub orbiter_interval_rtts: u32,
    pub orbiter_deviation: f64,
    #[serde(rename = "drain_ms", with = "serde_millis")]
    pub drain_duration: Duration,
    pub ignore_loss: bool,
    pub rtt_min_refresh: bool,
    #[serde(rename = "rtt_min_refresh_age_s", with = "serde_secs")]
    pub rtt_min_refresh_age: Duration,
    pub rtt_min_refresh_alpha: f64,
}

impl Default for RoccetParams {
    fn default() -> Self {
        RoccetParams {
            alpha: 0.25,
            srrtt_threshold: 1.0,
            launch_ack_margin: 10.0,
            launch_interval: Duration::from_millis(100),
            orbiter_interval_rtts: 5,
            orbiter_deviation: 0.20,
            drain_duration: Duration::from_millis(100),
            ignore_loss: false,
            rtt_min_refresh: false,
            rtt_min_refresh_age: Duration::from_secs(10),
            rtt_min_refresh_alpha: 0.25,
        }
    }
}

impl RoccetParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Validation(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("roccet.alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.srrtt_threshold.is_finite() && self.srrtt_threshold > 0.0) {
            return bad(format!(
                "roccet.srrtt_threshold must be > 0, got {}",
                self.srrtt_threshold
            ));
        }
        if !(self.launch_ack_margin.is_finite() && self.launch_ack_margin >= 0.0) {
            return bad(format!(
                "roccet.launch_ack_margin must be >= 0, got {}",
                self.launch_ack_margin
            ));
        }
        if self.orbiter_interval_rtts == 0 {
            return bad("roccet.orbiter_interval_rtts must be >= 1".into());
        }
        if !(self.orbiter_deviation > 0.0 && self.orbiter_deviation < 1.0) {
            return bad(format!(
                "roccet.orbiter_deviation must lie in (0, 1), got {}",
                self.orbiter_deviation
            ));
        }
        for (name, d) in [
            ("launch_interval_ms", self.launch_interval),
            ("drain_ms", self.drain_duration),
            ("rtt_min_refresh_age_s", self.rtt_min_refresh_age),
        ] {
            if d.is_zero() {
                return bad(format!("roccet.{name} must be > 0"));
            }
        }
        if !(self.rtt_min_refresh_alpha > 0.0 && self.rtt_min_refresh_alpha <= 1.0) {
            return bad(format!(
                "roccet.rtt_min_refresh_alpha must lie in (0, 1], got {}",
                self.rtt_min_refresh_alpha
            ));
        }
        Ok(())
    }

    fn in_drain(&self, s: &RoccetState, now: SimTime) -> bool {
        s.drain_until.is_some_and(|t| now < t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoccetState {
    pub srrtt: f64,
    pub rtt_min: Option<Duration>,
    pub rtt_min_updated_at: SimTime,
    pub interval_start: SimTime,
    pub acks_in_interval: SegCount,
    pub cum_cwnd_in_interval: SegCount,
    pub rtts_elapsed_in_interval: u32,
    /// Next round boundary, once `rtt_min` is known.
    pub next_round_at: Option<SimTime>,
    pub drain_until: Option<SimTime>,
    pub is_initial_slow_start: bool,
    pub ce_log: Vec<CeRecord>,
}

impl Default for RoccetState {
    fn default() -> Self {
        RoccetState {
            srrtt: 0.0,
            rtt_min: None,
            rtt_min_updated_at: SimTime::ZERO,
            interval_start: SimTime::ZERO,
            acks_in_interval: 0.0,
            cum_cwnd_in_interval: 0.0,
            rtts_elapsed_in_interval: 0,
            next_round_at: None,
            drain_until: None,
            is_initial_slow_start: true,
            ce_log: Vec::new(),
        }
    }
}

impl RoccetState {
    pub fn reset_interval(&mut self, now: SimTime) {
        self.interval_start = now;
        self.acks_in_interval = 0.0;
        self.cum_cwnd_in_interval = 0.0;
        self.rtts_elapsed_in_interval = 0;
    }

    /// Round boundaries passed by `now`. Advances `next_round_at`.
    pub fn rounds_crossed(&mut self, now: SimTime) -> u32 {
        let Some(rtt_min) = self.rtt_min.filter(|d| !d.is_zero()) else {
            return 0;
        };
        let next = *self.next_round_at.get_or_insert(now + rtt_min);
        if now < next {
            return 0;
        }
        let step = rtt_min.as_micros() as u64;
        let n = (now - next).as_micros() as u64 / step + 1;
        self.next_round_at = Some(next + Duration::from_micros(n * step));
        u32::try_from(n).unwrap_or(u32::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaunchDecision {
    Stay,
    ExitInitial,
    ExitLater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbiterDecision {
    None,
    RoccetCe,
}

pub fn update_rtt_min(
    mut s: RoccetState,
    sample: Duration,
    now: SimTime,
    p: &RoccetParams,
) -> RoccetState {
    match s.rtt_min {
        Some(cur) if sample >= cur => {
            if p.rtt_min_refresh && now.saturating_since(s.rtt_min_updated_at) > p.rtt_min_refresh_age
            {
                let a = p.rtt_min_refresh_alpha;
                let mixed = a * sample.as_secs_f64() + (1.0 - a) * cur.as_secs_f64();
                s.rtt_min = Some(Duration::from_secs_f64(mixed));
                s.rtt_min_updated_at = now;
            }
        }
        _ => {
            s.rtt_min = Some(sample);
            s.rtt_min_updated_at = now;
        }
    }
    s
}

/// Relative inflation of `srtt` over `rtt_min`, never negative.
pub fn inflation(srtt: Duration, rtt_min: Duration) -> f64 {
    let base = rtt_min.as_secs_f64();
    ((srtt.as_secs_f64() - base) / base).max(0.0)
}

pub fn update_srrtt(mut s: RoccetState, srtt_now: Duration, p: &RoccetParams) -> Result<RoccetState> {
    let rtt_min = s
        .rtt_min
        .ok_or(LabError::Misuse("srRTT update before any RTT sample"))?;
    let x = inflation(srtt_now, rtt_min);
    s.srrtt = p.alpha * x + (1.0 - p.alpha) * s.srrtt;
    Ok(s)
}

pub fn accumulate_interval(
    mut s: RoccetState,
    newly_acked: SegCount,
    current_cwnd: SegCount,
    rtt_boundary_crossed: bool,
) -> RoccetState {
    s.acks_in_interval += newly_acked.max(0.0);
    if rtt_boundary_crossed {
        s.cum_cwnd_in_interval += current_cwnd;
        s.rtts_elapsed_in_interval += 1;
    }
    s
}

/// LAUNCH exit test. Resets the interval whatever the outcome.
pub fn launch_check(
    mut s: RoccetState,
    now: SimTime,
    p: &RoccetParams,
) -> (RoccetState, LaunchDecision) {
    let deficit = (s.acks_in_interval - s.cum_cwnd_in_interval).abs();
    let decision = if deficit >= p.launch_ack_margin && s.srrtt >= p.srrtt_threshold {
        if s.is_initial_slow_start {
            LaunchDecision::ExitInitial
        } else {
            LaunchDecision::ExitLater
        }
    } else {
        LaunchDecision::Stay
    };
    s.reset_interval(now);
    (s, decision)
}

/// Halves the window and hands over to congestion avoidance.
pub fn launch_exit_initial(mut cc: CcState) -> CcState {
    cc.cwnd = (cc.cwnd / 2.0).max(MIN_CWND);
    cc.ssthresh = Ssthresh::Segments(cc.cwnd);
    cc.epoch = None;
    cc.phase = Phase::CongestionAvoidance;
    cc
}

/// Loss in slow start leaves the window alone. `ssthresh` is pinned to the
/// current window so the flow moves to congestion avoidance once the loss
/// is repaired, as Linux does when a module's `ssthresh` hook returns the
/// current window.
pub fn launch_on_loss(s: &RoccetState, mut cc: CcState, p: &RoccetParams) -> CcState {
    let _ = s;
    if !p.ignore_loss {
        cc.ssthresh = Ssthresh::Segments(cc.cwnd);
    }
    cc
}

/// ORBITER congestion test. Resets the interval whatever the outcome.
pub fn orbiter_check(
    mut s: RoccetState,
    now: SimTime,
    p: &RoccetParams,
) -> (RoccetState, OrbiterDecision) {
    if p.in_drain(&s, now) {
        s.reset_interval(now);
        return (s, OrbiterDecision::None);
    }
    let cum = s.cum_cwnd_in_interval;
    let decision = if cum - s.acks_in_interval > p.orbiter_deviation * cum
        && s.srrtt >= p.srrtt_threshold
    {
        OrbiterDecision::RoccetCe
    } else {
        OrbiterDecision::None
    };
    s.reset_interval(now);
    (s, decision)
}

pub fn apply_roccet_ce(
    mut s: RoccetState,
    mut cc: CcState,
    now: SimTime,
    p: &RoccetParams,
    cubic: &CubicParams,
) -> (RoccetState, CcState) {
    let before = cc.cwnd;
    if cc.cwnd > cc.w_max {
        cc.w_max = cc.cwnd;
    }
    cc.cwnd = (cc.cwnd * cubic.beta_mult).max(MIN_CWND);
    cc.ssthresh = Ssthresh::Segments(cc.cwnd);
    cc.epoch = Some(crate::cc::Epoch::begin(now, cc.w_max, cc.cwnd, cubic));
    cc.phase = Phase::CongestionAvoidance;
    s.drain_until = Some(now + p.drain_duration);
    s.reset_interval(now);
    s.ce_log.push(CeRecord {
        at: now,
        kind: CeKind::RoccetCe,
        cwnd_before: before,
        cwnd_after: cc.cwnd,
    });
    (s, cc)
}

/// Loss outside slow start: a CUBIC congestion event unless losses are
/// ignored altogether. The drain window does not suppress it.
pub fn orbiter_on_loss(
    cc: CcState,
    p: &RoccetParams,
    cubic: &CubicParams,
    now: SimTime,
) -> CcState {
    if p.ignore_loss {
        cc
    } else {
        cubic_on_congestion_event(cc, cubic, now)
    }
}

#[derive(Debug, Clone)]
pub struct RoccetController {
    cc: CcState,
    state: RoccetState,
    cubic: CubicParams,
    params: RoccetParams,
    freeze: bool,
    /// Phase seen on the previous ACK; a change restarts the interval.
    last_phase: Phase,
}

impl RoccetController {
    pub fn new(cubic: CubicParams, params: RoccetParams, freeze_when_app_limited: bool) -> Self {
        Self::with_state(
            CcState::new(Algorithm::Roccet),
            cubic,
            params,
            freeze_when_app_limited,
        )
    }

    pub fn with_state(
        cc: CcState,
        cubic: CubicParams,
        params: RoccetParams,
        freeze_when_app_limited: bool,
    ) -> Self {
        RoccetController {
            last_phase: cc.phase,
            cc,
            state: RoccetState::default(),
            cubic,
            params,
            freeze: freeze_when_app_limited,
        }
    }

    pub fn params(&self) -> &RoccetParams {
        &self.params
    }

    /// Raises a ROCCET congestion event immediately, bypassing the detector.
    pub fn force_roccet_ce(&mut self, now: SimTime) -> CeRecord {
        let s = std::mem::take(&mut self.state);
        let (s, cc) = apply_roccet_ce(s, self.cc, now, &self.params, &self.cubic);
        self.state = s;
        self.cc = cc;
        self.last_phase = cc.phase;
        *self.state.ce_log.last().expect("just logged")
    }

    fn log(&mut self, at: SimTime, kind: CeKind, before: SegCount) -> CeRecord {
        let rec = CeRecord {
            at,
            kind,
            cwnd_before: before,
            cwnd_after: self.cc.cwnd,
        };
        self.state.ce_log.push(rec);
        rec
    }
}

impl CongestionControl for RoccetController {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Roccet
    }

    fn state(&self) -> &CcState {
        &self.cc
    }

    fn roccet(&self) -> Option<&RoccetState> {
        Some(&self.state)
    }

    fn on_ack(&mut self, ack: &AckInfo) -> Option<CeRecord> {
        let now = ack.now;
        let p = self.params;
        let mut s = std::mem::take(&mut self.state);
        if let Some(sample) = ack.rtt_sample.filter(|d| !d.is_zero()) {
            s = update_rtt_min(s, sample, now, &p);
        }
        if let (Some(srtt), Some(_)) = (ack.srtt, s.rtt_min) {
            s = update_srrtt(s, srtt, &p).expect("rtt_min is set");
        }

        if p.in_drain(&s, now) {
            // Hold the window and keep the round clock in step.
            s.rounds_crossed(now);
            s.reset_interval(now);
            self.state = s;
            return None;
        }
        if s.drain_until.take().is_some() {
            s.reset_interval(now);
        }

        self.cc = cubic_on_ack(self.cc, ack, &self.cubic, self.freeze);
        if self.cc.phase != self.last_phase {
            s.reset_interval(now);
            self.last_phase = self.cc.phase;
        }

        let rounds = s.rounds_crossed(now);
        s = accumulate_interval(s, ack.newly_acked, self.cc.cwnd, false);
        for _ in 0..rounds {
            s = accumulate_interval(s, 0.0, self.cc.cwnd, true);
        }

        let repairing = ack.in_recovery || self.cc.phase == Phase::Recovery;
        if repairing || s.rtt_min.is_none() {
            self.state = s;
            return None;
        }

        let before = self.cc.cwnd;
        let record = match self.cc.phase {
            Phase::SlowStart if now.saturating_since(s.interval_start) >= p.launch_interval => {
                let (next, decision) = launch_check(s, now, &p);
                s = next;
                match decision {
                    LaunchDecision::Stay => None,
                    LaunchDecision::ExitInitial => {
                        self.cc = launch_exit_initial(self.cc);
                        s.is_initial_slow_start = false;
                        Some(CeKind::LaunchExit)
                    }
                    LaunchDecision::ExitLater => {
                        self.cc = cubic_on_congestion_event(self.cc, &self.cubic, now);
                        Some(CeKind::LaunchExit)
                    }
                }
            }
            Phase::CongestionAvoidance if s.rtts_elapsed_in_interval >= p.orbiter_interval_rtts => {
                let (next, decision) = orbiter_check(s, now, &p);
                s = next;
                match decision {
                    OrbiterDecision::None => None,
                    OrbiterDecision::RoccetCe => {
                        let (next, cc) = apply_roccet_ce(s, self.cc, now, &p, &self.cubic);
                        s = next;
                        self.cc = cc;
                        self.last_phase = cc.phase;
                        self.state = s;
                        return self.state.ce_log.last().copied();
                    }
                }
            }
            _ => None,
        };
        self.state = s;
        self.last_phase = self.cc.phase;
        record.map(|kind| {
            self.state.reset_interval(now);
            self.log(now, kind, before)
        })
    }

    fn on_rtt_sample(&mut self, now: SimTime, rtt: Duration) {
        let s = std::mem::take(&mut self.state);
        self.state = update_rtt_min(s, rtt, now, &self.params);
    }

    fn on_loss(&mut self, now: SimTime, signal: LossSignal) -> Option<CeRecord> {
        if self.params.ignore_loss {
            return None;
        }
        let before = self.cc.cwnd;
        if self.cc.phase == Phase::SlowStart {
            self.cc = launch_on_loss(&self.state, self.cc, &self.params);
            self.state.is_initial_slow_start = false;
            return None;
        }
        match signal {
            LossSignal::FastRetransmit => {
                if self.cc.phase == Phase::Recovery {
                    return None;
                }
                self.cc = orbiter_on_loss(self.cc, &self.params, &self.cubic, now);
                self.cc.phase = Phase::Recovery;
            }
            LossSignal::Timeout { backoff } => {
                self.cc = cubic_on_timeout(self.cc, &self.cubic, now, backoff);
                if backoff > 0 {
                    return None;
                }
            }
        }
        self.state.reset_interval(now);
        Some(self.log(now, CeKind::LossCe, before))
    }

    fn on_recovery_exit(&mut self, now: SimTime) {
        if self.cc.phase == Phase::Recovery {
            self.cc.phase = Phase::CongestionAvoidance;
            self.state.reset_interval(now);
            self.last_phase = self.cc.phase;
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::cc::cubic::cubic_on_congestion_event;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    fn p() -> RoccetParams {
        RoccetParams::default()
    }

    fn with_min(rtt_min: u64) -> RoccetState {
        update_rtt_min(RoccetState::default(), ms(rtt_min), SimTime::ZERO, &p())
    }

    fn ca(cwnd: f64, w_max: f64) -> CcState {
        CcState {
            cwnd,
            ssthresh: Ssthresh::Segments(cwnd),
            w_max,
            epoch: None,
            phase: Phase::CongestionAvoidance,
            algo: Algorithm::Roccet,
        }
    }

    #[test]
    fn rtt_min_first_sample_and_minimum() {
        let s = with_min(40);
        assert_eq!(s.rtt_min, Some(ms(40)));
        let s = update_rtt_min(s, ms(35), SimTime::from_secs(1), &p());
        assert_eq!(s.rtt_min, Some(ms(35)));
        assert_eq!(s.rtt_min_updated_at, SimTime::from_secs(1));
        let s = update_rtt_min(s, ms(90), SimTime::from_secs(30), &p());
        assert_eq!(s.rtt_min, Some(ms(35)));
    }

    #[test]
    fn rtt_min_refresh_blends_when_stale() {
        let params = RoccetParams {
            rtt_min_refresh: true,
            rtt_min_refresh_alpha: 0.5,
            ..p()
        };
        let s = with_min(40);
        let s = update_rtt_min(s, ms(60), SimTime::from_secs(11), &params);
        assert_eq!(s.rtt_min, Some(ms(50)));
        assert_eq!(s.rtt_min_updated_at, SimTime::from_secs(11));
        // Fresh again, so a second large sample is ignored.
        let s = update_rtt_min(s, ms(60), SimTime::from_secs(12), &params);
        assert_eq!(s.rtt_min, Some(ms(50)));
    }

    #[test]
    fn srrtt_zero_inflation_stays_zero() {
        let s = update_srrtt(with_min(40), ms(40), &p()).unwrap();
        assert_eq!(s.srrtt, 0.0);
    }

    #[test]
    fn srrtt_alpha_one_hits_threshold() {
        let params = RoccetParams { alpha: 1.0, ..p() };
        let s = update_srrtt(with_min(40), ms(80), &params).unwrap();
        assert_eq!(s.srrtt, 1.0);
    }

    #[test]
    fn srrtt_ewma_step() {
        let mut s = with_min(40);
        s.srrtt = 0.4;
        // x = (88 − 40)/40 = 1.2
        let s = update_srrtt(s, ms(88), &p()).unwrap();
        assert!((s.srrtt - 0.6).abs() < 1e-12);
    }

    #[test]
    fn srrtt_requires_rtt_min() {
        let err = update_srrtt(RoccetState::default(), ms(40), &p()).unwrap_err();
        assert_eq!(err.kind(), "misuse");
    }

    #[test]
    fn accumulate_without_and_with_boundary() {
        let s = accumulate_interval(RoccetState::default(), 10.0, 50.0, false);
        assert_eq!(s.acks_in_interval, 10.0);
        assert_eq!(s.cum_cwnd_in_interval, 0.0);
        let s = accumulate_interval(s, 0.0, 50.0, true);
        assert_eq!(s.cum_cwnd_in_interval, 50.0);
        assert_eq!(s.rtts_elapsed_in_interval, 1);
    }

    #[test]
    fn rounds_tick_once_per_rtt_min_with_catch_up() {
        let mut s = with_min(40);
        assert_eq!(s.rounds_crossed(SimTime::from_millis(10)), 0);
        assert_eq!(s.rounds_crossed(SimTime::from_millis(49)), 0);
        assert_eq!(s.rounds_crossed(SimTime::from_millis(50)), 1);
        assert_eq!(s.rounds_crossed(SimTime::from_millis(175)), 3);
        assert_eq!(s.next_round_at, Some(SimTime::from_millis(210)));
    }

    #[test]
    fn launch_exit_initial_halves() {
        let mut s = with_min(40);
        s.srrtt = 1.5;
        s.acks_in_interval = 100.0;
        s.cum_cwnd_in_interval = 125.0;
        let (s, d) = launch_check(s, SimTime::from_millis(100), &p());
        assert_eq!(d, LaunchDecision::ExitInitial);
        assert_eq!(s.acks_in_interval, 0.0);
        assert_eq!(s.cum_cwnd_in_interval, 0.0);
        let cc = launch_exit_initial(CcState::with_cwnd(Algorithm::Roccet, 200.0));
        assert_eq!(cc.cwnd, 100.0);
        assert_eq!(cc.ssthresh, Ssthresh::Segments(100.0));
        assert_eq!(cc.phase, Phase::CongestionAvoidance);
    }

    #[test]
    fn launch_stays_on_either_failed_conjunct() {
        let mut s = with_min(40);
        s.srrtt = 0.3;
        s.acks_in_interval = 0.0;
        s.cum_cwnd_in_interval = 500.0;
        assert_eq!(launch_check(s.clone(), SimTime::ZERO, &p()).1, LaunchDecision::Stay);
        s.srrtt = 1.2;
        s.cum_cwnd_in_interval = 4.0;
        assert_eq!(launch_check(s, SimTime::ZERO, &p()).1, LaunchDecision::Stay);
    }

    #[test]
    fn launch_later_exit_when_not_initial() {
        let mut s = with_min(40);
        s.is_initial_slow_start = false;
        s.srrtt = 2.0;
        s.acks_in_interval = 40.0;
        assert_eq!(launch_check(s, SimTime::ZERO, &p()).1, LaunchDecision::ExitLater);
    }

    #[test]
    fn slow_start_loss_keeps_window_unlike_cubic() {
        let mut c = RoccetController::with_state(
            CcState::with_cwnd(Algorithm::Roccet, 300.0),
            CubicParams::default(),
            p(),
            true,
        );
        assert!(c.on_loss(SimTime::ZERO, LossSignal::FastRetransmit).is_none());
        assert_eq!(c.cwnd(), 300.0);
        assert_eq!(c.state().phase, Phase::SlowStart);
        assert!(c
            .on_loss(SimTime::from_millis(1), LossSignal::Timeout { backoff: 0 })
            .is_none());
        assert_eq!(c.cwnd(), 300.0);

        let cubic = cubic_on_congestion_event(
            CcState::with_cwnd(Algorithm::Cubic, 300.0),
            &CubicParams::default(),
            SimTime::ZERO,
        );
        assert!((cubic.cwnd - 210.0).abs() < 1e-9);
    }

    #[test]
    fn orbiter_fires_on_deficit_and_inflation() {
        let mut s = with_min(40);
        s.srrtt = 1.4;
        s.cum_cwnd_in_interval = 500.0;
        s.acks_in_interval = 350.0;
        assert_eq!(orbiter_check(s.clone(), SimTime::ZERO, &p()).1, OrbiterDecision::RoccetCe);
        s.acks_in_interval = 450.0;
        assert_eq!(orbiter_check(s.clone(), SimTime::ZERO, &p()).1, OrbiterDecision::None);
        s.acks_in_interval = 350.0;
        s.drain_until = Some(SimTime::from_millis(50));
        assert_eq!(
            orbiter_check(s, SimTime::from_millis(10), &p()).1,
            OrbiterDecision::None
        );
    }

    #[test]
    fn roccet_ce_raises_w_max_only_upward() {
        let cubic = CubicParams::default();
        let (s, cc) = apply_roccet_ce(RoccetState::default(), ca(120.0, 100.0), SimTime::ZERO, &p(), &cubic);
        assert_eq!(cc.w_max, 120.0);
        assert!((cc.cwnd - 84.0).abs() < 1e-12);
        assert_eq!(s.drain_until, Some(SimTime::from_millis(100)));
        assert_eq!(s.ce_log.len(), 1);
        let (_, cc) = apply_roccet_ce(RoccetState::default(), ca(80.0, 100.0), SimTime::ZERO, &p(), &cubic);
        assert_eq!(cc.w_max, 100.0);
        assert!((cc.cwnd - 56.0).abs() < 1e-12);
    }

    #[test]
    fn drain_holds_window_for_every_ack() {
        let mut c = RoccetController::with_state(ca(120.0, 100.0), CubicParams::default(), p(), true);
        let t0 = SimTime::from_secs(5);
        c.on_ack(&AckInfo::simple(t0, 1.0, ms(40)));
        let rec = c.force_roccet_ce(t0);
        assert!((rec.cwnd_after - 84.0).abs() < 1e-9);
        for i in 1..100 {
            let now = t0 + Duration::from_micros(i * 1_000);
            c.on_ack(&AckInfo::simple(now, 3.0, ms(40)));
            assert_eq!(c.cwnd(), rec.cwnd_after);
        }
        // Growth resumes once the drain is over.
        let mut t = t0 + ms(100);
        for _ in 0..200 {
            t += ms(5);
            c.on_ack(&AckInfo::simple(t, 2.0, ms(40)));
        }
        assert!(c.cwnd() > rec.cwnd_after);
    }

    #[test]
    fn loss_during_drain_still_reduces() {
        let mut c = RoccetController::with_state(ca(120.0, 100.0), CubicParams::default(), p(), true);
        c.force_roccet_ce(SimTime::ZERO);
        let rec = c.on_loss(SimTime::from_millis(20), LossSignal::FastRetransmit).unwrap();
        assert_eq!(rec.kind, CeKind::LossCe);
        assert!((c.cwnd() - 84.0 * 0.7).abs() < 1e-9);
    }

    #[test]
    fn loss_in_avoidance_is_a_cubic_event() {
        let cubic = CubicParams::default();
        let cc = orbiter_on_loss(ca(100.0, 80.0), &p(), &cubic, SimTime::ZERO);
        assert!((cc.cwnd - 70.0).abs() < 1e-12);
        assert_eq!(cc.w_max, 100.0);
        let ignore = RoccetParams { ignore_loss: true, ..p() };
        assert_eq!(orbiter_on_loss(ca(100.0, 80.0), &ignore, &cubic, SimTime::ZERO), ca(100.0, 80.0));
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(p().validate().is_ok());
        assert!(RoccetParams { alpha: 0.0, ..p() }.validate().is_err());
        assert!(RoccetParams { orbiter_deviation: 1.0, ..p() }.validate().is_err());
        assert!(RoccetParams { drain_duration: Duration::ZERO, ..p() }.validate().is_err());
        assert!(RoccetParams { srrtt_threshold: 0.0, ..p() }.validate().is_err());
    }

    /// Drives a controller through a steady pipe: every ACK returns after
    /// `rtt`, acknowledging one segment, with the window full.
    fn steady_pipe(c: &mut RoccetController, rtt: Duration, secs: u64) {
        let mut t = SimTime::ZERO;
        let end = SimTime::from_secs(secs);
        while t < end {
            let per_ack = rtt.as_micros() as u64 / c.cwnd().max(1.0) as u64;
            t += Duration::from_micros(per_ack.max(1));
            c.on_ack(&AckInfo::simple(t, 1.0, rtt));
        }
    }

    #[test]
    fn no_delay_signal_no_roccet_ce() {
        let mut c = RoccetController::new(CubicParams::default(), p(), true);
        steady_pipe(&mut c, ms(40), 60);
        assert!(c
            .roccet()
            .unwrap()
            .ce_log
            .iter()
            .all(|r| r.kind != CeKind::RoccetCe));
    }

    proptest! {
        #[test]
        fn srrtt_never_negative(samples in proptest::collection::vec(1u64..500_000, 1..300)) {
            let params = p();
            let mut s = RoccetState::default();
            let mut srtt: Option<f64> = None;
            for (i, us) in samples.into_iter().enumerate() {
                let d = Duration::from_micros(us);
                s = update_rtt_min(s, d, SimTime::from_millis(i as u64), &params);
                let v = us as f64 * 1e-6;
                let sm = srtt.map_or(v, |o| 0.875 * o + 0.125 * v);
                srtt = Some(sm);
                s = update_srrtt(s, Duration::from_secs_f64(sm), &params).unwrap();
                prop_assert!(s.srrtt >= 0.0);
            }
        }

        #[test]
        fn no_ce_below_threshold(srrtt in 0.0f64..0.999, cum in 1.0f64..1e4, frac in 0.0f64..1.0) {
            let mut s = with_min(40);
            s.srrtt = srrtt;
            s.cum_cwnd_in_interval = cum;
            s.acks_in_interval = cum * frac;
            prop_assert_eq!(orbiter_check(s, SimTime::ZERO, &p()).1, OrbiterDecision::None);
        }

        #[test]
        fn no_ce_within_deviation(srrtt in 1.0f64..10.0, cum in 1.0f64..1e4, frac in 0.8f64..1.5) {
            let mut s = with_min(40);
            s.srrtt = srrtt;
            s.cum_cwnd_in_interval = cum;
            s.acks_in_interval = cum * frac;
            prop_assert_eq!(orbiter_check(s, SimTime::ZERO, &p()).1, OrbiterDecision::None);
        }

        #[test]
        fn launch_exit_is_exact_half(cwnd in 1.0f64..1e5) {
            let cc = launch_exit_initial(CcState::with_cwnd(Algorithm::Roccet, cwnd));
            prop_assert_eq!(cc.cwnd, (cwnd / 2.0).max(1.0));
            prop_assert_eq!(cc.ssthresh, Ssthresh::Segments(cc.cwnd));
        }

        #[test]
        fn roccet_ce_never_lowers_w_max(cwnd in 1.0f64..1e5, w_max in 0.0f64..1e5) {
            let (_, cc) = apply_roccet_ce(
                RoccetState::default(), ca(cwnd, w_max), SimTime::ZERO, &p(), &CubicParams::default());
            prop_assert!(cc.w_max >= w_max);
        }

        #[test]
        fn drain_constant_under_any_acks(
            acks in proptest::collection::vec((0u64..3_000, 0.0f64..20.0, 1u64..400), 1..100)
        ) {
            let mut c = RoccetController::with_state(ca(150.0, 100.0), CubicParams::default(), p(), true);
            let t0 = SimTime::from_secs(1);
            let rec = c.force_roccet_ce(t0);
            let mut offsets: Vec<_> = acks;
            offsets.sort_by_key(|a| a.0);
            for (off_100us, newly, rtt_ms) in offsets {
                let now = t0 + Duration::from_micros(off_100us * 33);
                if now >= t0 + ms(100) { break; }
                c.on_ack(&AckInfo::simple(now, newly, ms(rtt_ms)));
                prop_assert_eq!(c.cwnd(), rec.cwnd_after);
            }
        }
    }
}
