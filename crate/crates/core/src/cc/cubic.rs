//! CUBIC window growth and reduction.
//!
//! `beta_mult` is the fraction of the window that survives a congestion
//! event (0.7 in Linux). The saddle offset is computed from the decrease
//! fraction `1 − beta_mult`, so the curve passes through the reduced window
//! at the start of each epoch.

use serde::{Deserialize, Serialize};

use super::{
    AckInfo, Algorithm, CcState, CeKind, CeRecord, CongestionControl, Epoch, LossSignal, Phase,
    SegCount, Ssthresh, MIN_CWND,
};
use crate::error::{LabError, Result};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CubicParams {
    /// Scaling constant `C`, in segments per second cubed.
    pub c_scale: f64,
    /// Survivor fraction after a congestion event.
    pub beta_mult: f64,
    pub fast_convergence: bool,
}

impl Default for CubicParams {
    fn default() -> Self {
        CubicParams {
            c_scale: 0.4,
            beta_mult: 0.7,
            fast_convergence: true,
        }
    }
}

impl CubicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_scale.is_finite() && self.c_scale > 0.0) {
            return Err(LabError::Validation(format!(
                "cubic.c_scale must be > 0, got {}",
                self.c_scale
            )));
        }
        if !(self.beta_mult > 0.0 && self.beta_mult < 1.0) {
            return Err(LabError::Validation(format!(
                "cubic.beta_mult must lie in (0, 1), got {}",
                self.beta_mult
            )));
        }
        Ok(())
    }
}

/// Time, in seconds, for the curve to climb from the reduced window back to
/// `w_max`.
pub fn cubic_k(w_max: SegCount, params: &CubicParams) -> f64 {
    (w_max * (1.0 - params.beta_mult) / params.c_scale).cbrt()
}

/// Target window `t_secs` after the congestion event that set `w_max`.
pub fn cubic_window(t_secs: f64, w_max: SegCount, params: &CubicParams) -> SegCount {
    let d = t_secs - cubic_k(w_max, params);
    (params.c_scale * d * d * d + w_max).max(MIN_CWND)
}

impl Epoch {
    /// Opens an epoch at `now` for a flow whose window is `cwnd`.
    pub fn begin(now: SimTime, w_max: SegCount, cwnd: SegCount, params: &CubicParams) -> Epoch {
        if w_max > cwnd {
            Epoch {
                start: now,
                k_secs: ((w_max - cwnd) / params.c_scale).cbrt(),
                origin: w_max,
            }
        } else {
            Epoch {
                start: now,
                k_secs: 0.0,
                origin: cwnd,
            }
        }
    }

    pub fn target(&self, now: SimTime, params: &CubicParams) -> SegCount {
        let d = now.saturating_since(self.start).as_secs_f64() - self.k_secs;
        (params.c_scale * d * d * d + self.origin).max(MIN_CWND)
    }
}

/// Window update for one ACK.
///
/// Slow start adds one segment per acknowledged segment up to `ssthresh`.
/// Congestion avoidance closes `(target − cwnd)/cwnd` of the gap per acked
/// segment, and never more than half a segment per acked segment. With
/// `freeze` set, an ACK that arrives while the sender is application-limited
/// leaves the state untouched.
pub fn cubic_on_ack(
    mut state: CcState,
    ack: &AckInfo,
    params: &CubicParams,
    freeze: bool,
) -> CcState {
    if ack.newly_acked <= 0.0 || ack.in_recovery || state.phase == Phase::Recovery {
        return state;
    }
    if freeze && ack.is_app_limited {
        return state;
    }
    match state.phase {
        Phase::SlowStart => {
            let grow = ack.newly_acked.min(state.ssthresh.room_above(state.cwnd));
            state.cwnd += grow;
            if !state.ssthresh.is_above(state.cwnd) {
                state.phase = Phase::CongestionAvoidance;
                state.epoch = Some(Epoch::begin(ack.now, state.w_max, state.cwnd, params));
            }
        }
        Phase::CongestionAvoidance => {
            let epoch = *state
                .epoch
                .get_or_insert_with(|| Epoch::begin(ack.now, state.w_max, state.cwnd, params));
            let target = epoch.target(ack.now, params);
            if target > state.cwnd {
                let gap = target - state.cwnd;
                let step = (gap / state.cwnd * ack.newly_acked)
                    .min(0.5 * ack.newly_acked)
                    .min(gap);
                state.cwnd += step;
            }
        }
        Phase::Recovery => unreachable!(),
    }
    state
}

/// Multiplicative decrease with optional fast convergence.
///
/// A flow already in [`Phase::Recovery`] is returned unchanged so a single
/// loss episode is never reduced twice.
pub fn cubic_on_congestion_event(
    mut state: CcState,
    params: &CubicParams,
    now: SimTime,
) -> CcState {
    if state.phase == Phase::Recovery {
        return state;
    }
    let cwnd = state.cwnd;
    state.w_max = if cwnd < state.w_max && params.fast_convergence {
        cwnd * (2.0 - params.beta_mult) / 2.0
    } else {
        cwnd
    };
    state.cwnd = (cwnd * params.beta_mult).max(MIN_CWND);
    state.ssthresh = Ssthresh::Segments(state.cwnd);
    state.epoch = Some(Epoch::begin(now, state.w_max, state.cwnd, params));
    state.phase = Phase::CongestionAvoidance;
    state
}

/// Collapses the window after a retransmission timeout. The first expiry
/// of an episode also applies the CUBIC reduction to `ssthresh`/`w_max`.
pub(crate) fn cubic_on_timeout(
    state: CcState,
    params: &CubicParams,
    now: SimTime,
    backoff: u32,
) -> CcState {
    // A timeout inside a recovery episode already paid for its reduction.
    let mut s = if backoff == 0 && state.phase != Phase::Recovery {
        cubic_on_congestion_event(state, params, now)
    } else {
        state
    };
    s.cwnd = MIN_CWND;
    s.epoch = None;
    s.phase = Phase::SlowStart;
    s
}

#[derive(Debug, Clone)]
pub struct CubicController {
    state: CcState,
    params: CubicParams,
    freeze: bool,
}

impl CubicController {
    pub fn new(params: CubicParams, freeze_when_app_limited: bool) -> Self {
        CubicController {
            state: CcState::new(Algorithm::Cubic),
            params,
            freeze: freeze_when_app_limited,
        }
    }

    pub fn with_state(state: CcState, params: CubicParams, freeze_when_app_limited: bool) -> Self {
        CubicController {
            state,
            params,
            freeze: freeze_when_app_limited,
        }
    }
}

impl CongestionControl for CubicController {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Cubic
    }

    fn state(&self) -> &CcState {
        &self.state
    }

    fn on_ack(&mut self, ack: &AckInfo) -> Option<CeRecord> {
        self.state = cubic_on_ack(self.state, ack, &self.params, self.freeze);
        None
    }

    fn on_loss(&mut self, now: SimTime, signal: LossSignal) -> Option<CeRecord> {
        let before = self.state.cwnd;
        match signal {
            LossSignal::FastRetransmit => {
                if self.state.phase == Phase::Recovery {
                    return None;
                }
                self.state = cubic_on_congestion_event(self.state, &self.params, now);
                self.state.phase = Phase::Recovery;
            }
            LossSignal::Timeout { backoff } => {
                self.state = cubic_on_timeout(self.state, &self.params, now, backoff);
                if backoff > 0 {
                    return None;
                }
            }
        }
        Some(CeRecord {
            at: now,
            kind: CeKind::LossCe,
            cwnd_before: before,
            cwnd_after: self.state.cwnd,
        })
    }

    fn on_recovery_exit(&mut self, _now: SimTime) {
        if self.state.phase == Phase::Recovery {
            self.state.phase = Phase::CongestionAvoidance;
        }
    }
}
