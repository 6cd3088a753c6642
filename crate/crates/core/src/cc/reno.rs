//! Reno AIMD baseline.

use super::{
    AckInfo, Algorithm, CcState, CeKind, CeRecord, CongestionControl, LossSignal, Phase, Ssthresh,
    MIN_CWND,
};
use crate::time::SimTime;

/// Slow start adds a segment per acked segment; congestion avoidance adds
/// `1/cwnd` per acked segment.
pub fn reno_on_ack(mut state: CcState, ack: &AckInfo, freeze: bool) -> CcState {
    if ack.newly_acked <= 0.0 || ack.in_recovery || state.phase == Phase::Recovery {
        return state;
    }
    if freeze && ack.is_app_limited {
        return state;
    }
    match state.phase {
        Phase::SlowStart => {
            let room = state.ssthresh.room_above(state.cwnd);
            let grow = ack.newly_acked.min(room);
            state.cwnd += grow;
            let rest = ack.newly_acked - grow;
            if !state.ssthresh.is_above(state.cwnd) {
                state.phase = Phase::CongestionAvoidance;
                state.cwnd += rest / state.cwnd;
            }
        }
        Phase::CongestionAvoidance => state.cwnd += ack.newly_acked / state.cwnd,
        Phase::Recovery => unreachable!(),
    }
    state
}

/// Halves the window.
pub fn reno_on_congestion_event(mut state: CcState) -> CcState {
    if state.phase == Phase::Recovery {
        return state;
    }
    state.cwnd = (state.cwnd / 2.0).max(MIN_CWND);
    state.ssthresh = Ssthresh::Segments(state.cwnd);
    state.phase = Phase::CongestionAvoidance;
    state
}

#[derive(Debug, Clone)]
pub struct RenoController {
    state: CcState,
    freeze: bool,
}

impl RenoController {
    pub fn new(freeze_when_app_limited: bool) -> Self {
        RenoController {
            state: CcState::new(Algorithm::Reno),
            freeze: freeze_when_app_limited,
        }
    }

    pub fn with_state(state: CcState, freeze_when_app_limited: bool) -> Self {
        RenoController {
            state,
            freeze: freeze_when_app_limited,
        }
    }
}

impl CongestionControl for RenoController {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Reno
    }

    fn state(&self) -> &CcState {
        &self.state
    }

    fn on_ack(&mut self, ack: &AckInfo) -> Option<CeRecord> {
        self.state = reno_on_ack(self.state, ack, self.freeze);
        None
    }

    fn on_loss(&mut self, now: SimTime, signal: LossSignal) -> Option<CeRecord> {
        let before = self.state.cwnd;
        match signal {
            LossSignal::FastRetransmit => {
                if self.state.phase == Phase::Recovery {
                    return None;
                }
                self.state = reno_on_congestion_event(self.state);
                self.state.phase = Phase::Recovery;
            }
            LossSignal::Timeout { backoff } => {
                if backoff == 0 && self.state.phase != Phase::Recovery {
                    self.state = reno_on_congestion_event(self.state);
                }
                self.state.cwnd = MIN_CWND;
                self.state.phase = Phase::SlowStart;
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

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    fn ack(newly: f64) -> AckInfo {
        AckInfo::simple(SimTime::from_millis(1), newly, Duration::from_millis(40))
    }

    fn ca(cwnd: f64) -> CcState {
        CcState {
            ssthresh: Ssthresh::Segments(cwnd),
            phase: Phase::CongestionAvoidance,
            ..CcState::with_cwnd(Algorithm::Reno, cwnd)
        }
    }

    #[test]
    fn one_window_of_acks_adds_one_segment() {
        let mut s = ca(10.0);
        // Ten single-segment ACKs, each adding 1/cwnd of the window in force.
        for _ in 0..10 {
            s = reno_on_ack(s, &ack(1.0), false);
        }
        assert!((s.cwnd - 11.0).abs() < 0.05, "cwnd = {}", s.cwnd);
        let s = reno_on_ack(ca(10.0), &ack(10.0), false);
        assert!((s.cwnd - 11.0).abs() < 1e-12);
    }

    #[test]
    fn congestion_event_halves() {
        let s = reno_on_congestion_event(ca(20.0));
        assert_eq!(s.cwnd, 10.0);
        assert_eq!(s.ssthresh, Ssthresh::Segments(10.0));
    }

    #[test]
    fn slow_start_from_one() {
        let s = CcState::with_cwnd(Algorithm::Reno, 1.0);
        assert_eq!(reno_on_ack(s, &ack(1.0), false).cwnd, 2.0);
    }

    #[test]
    fn halving_floors_at_one() {
        assert_eq!(reno_on_congestion_event(ca(1.0)).cwnd, 1.0);
    }
}
