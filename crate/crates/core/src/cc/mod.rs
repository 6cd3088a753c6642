//! Pluggable congestion controllers.
//!
//! Each algorithm is written as a set of pure transition functions over an
//! explicit [`CcState`] value, plus a thin stateful wrapper implementing
//! [`CongestionControl`] that the simulator drives.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::roccet::{RoccetController, RoccetParams, RoccetState};
use crate::time::SimTime;

pub mod cubic;
pub mod probe_rate;
pub mod reno;

pub use cubic::{CubicController, CubicParams};
pub use probe_rate::ProbeRateController;
pub use reno::RenoController;

/// Window sizes, measured in MSS-sized segments.
pub type SegCount = f64;

/// Initial window for every algorithm (RFC 6928 / Linux default).
pub const INITIAL_CWND: SegCount = 10.0;

/// Smallest window any controller may hold.
pub const MIN_CWND: SegCount = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Reno,
    Cubic,
    Roccet,
    ProbeRate,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Reno,
        Algorithm::Cubic,
        Algorithm::Roccet,
        Algorithm::ProbeRate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Reno => "reno",
            Algorithm::Cubic => "cubic",
            Algorithm::Roccet => "roccet",
            Algorithm::ProbeRate => "probe_rate",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reno" => Ok(Algorithm::Reno),
            "cubic" => Ok(Algorithm::Cubic),
            "roccet" => Ok(Algorithm::Roccet),
            "probe_rate" | "probe-rate" => Ok(Algorithm::ProbeRate),
            other => Err(format!(
                "unknown algorithm '{other}' (expected reno, cubic, roccet or probe_rate)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    /// Loss recovery in progress; window growth is suspended until the
    /// transport reports the episode repaired.
    Recovery,
}

/// Slow-start threshold. Starts out unbounded, like Linux's `0x7fffffff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ssthresh {
    Infinite,
    Segments(SegCount),
}

impl Ssthresh {
    /// True while a window of `cwnd` segments is still below the threshold.
    pub fn is_above(self, cwnd: SegCount) -> bool {
        match self {
            Ssthresh::Infinite => true,
            Ssthresh::Segments(t) => cwnd < t,
        }
    }

    /// Headroom left before reaching the threshold.
    pub fn room_above(self, cwnd: SegCount) -> SegCount {
        match self {
            Ssthresh::Infinite => f64::INFINITY,
            Ssthresh::Segments(t) => (t - cwnd).max(0.0),
        }
    }

    pub fn segments(self) -> Option<SegCount> {
        match self {
            Ssthresh::Infinite => None,
            Ssthresh::Segments(t) => Some(t),
        }
    }
}

/// One cubic growth epoch, anchored at the congestion event that opened it.
///
/// The curve is `C·(t − k)³ + origin`. When the epoch opens below `w_max`,
/// `origin = w_max` and `k` is chosen so the curve starts at the current
/// window; otherwise growth starts convex from the current window (`k = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: SimTime,
    pub k_secs: f64,
    pub origin: SegCount,
}

/// Per-flow congestion controller state shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcState {
    pub cwnd: SegCount,
    pub ssthresh: Ssthresh,
    pub w_max: SegCount,
    pub epoch: Option<Epoch>,
    pub phase: Phase,
    pub algo: Algorithm,
}

impl CcState {
    pub fn new(algo: Algorithm) -> Self {
        Self::with_cwnd(algo, INITIAL_CWND)
    }

    pub fn with_cwnd(algo: Algorithm, cwnd: SegCount) -> Self {
        CcState {
            cwnd: cwnd.max(MIN_CWND),
            ssthresh: Ssthresh::Infinite,
            w_max: 0.0,
            epoch: None,
            phase: Phase::SlowStart,
            algo,
        }
    }

    pub fn epoch_start(&self) -> Option<SimTime> {
        self.epoch.map(|e| e.start)
    }
}

/// A delivery-rate sample taken when an ACK arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    /// Bits per second delivered over the sample interval.
    pub delivery_rate: f64,
    /// Cumulative delivered count when the acknowledged segment was sent.
    pub prior_delivered: u64,
    /// The acknowledged segment was sent while the flow was application-limited.
    pub is_app_limited: bool,
}

/// Everything a controller learns from one acknowledgement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckInfo {
    pub now: SimTime,
    /// Segments newly covered by the cumulative ACK.
    pub newly_acked: SegCount,
    /// Raw RTT of the segment that triggered this ACK. `None` when the
    /// sample is ambiguous (retransmitted data).
    pub rtt_sample: Option<Duration>,
    /// Transport-level smoothed RTT after folding in `rtt_sample`.
    pub srtt: Option<Duration>,
    /// The sender could not fill its window from application data before
    /// this ACK arrived.
    pub is_app_limited: bool,
    /// The transport is repairing a loss episode.
    pub in_recovery: bool,
    /// Segments in flight after this ACK was processed.
    pub in_flight: u64,
    /// Cumulative segments delivered to the receiver, as seen by the sender.
    pub delivered: u64,
    pub rate: Option<RateSample>,
}

impl AckInfo {
    /// Minimal ACK used by unit tests and examples.
    pub fn simple(now: SimTime, newly_acked: SegCount, rtt: Duration) -> Self {
        AckInfo {
            now,
            newly_acked,
            rtt_sample: Some(rtt),
            srtt: Some(rtt),
            is_app_limited: false,
            in_recovery: false,
            in_flight: 0,
            delivered: 0,
            rate: None,
        }
    }
}

/// How the transport discovered a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSignal {
    /// Third duplicate ACK; the sender enters fast recovery.
    FastRetransmit,
    /// Retransmission timer expiry. `backoff` counts consecutive expiries
    /// for the same outstanding data (0 for the first).
    Timeout { backoff: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeKind {
    /// Delay-based congestion event raised by the ROCCET detector.
    RoccetCe,
    /// Loss-driven reduction (dup-ACK or timeout).
    LossCe,
    /// ROCCET leaving slow start on its delay signal.
    LaunchExit,
}

impl CeKind {
    pub const ALL: [CeKind; 3] = [CeKind::RoccetCe, CeKind::LossCe, CeKind::LaunchExit];

    pub fn as_str(self) -> &'static str {
        match self {
            CeKind::RoccetCe => "roccet_ce",
            CeKind::LossCe => "loss_ce",
            CeKind::LaunchExit => "launch_exit",
        }
    }
}

/// A window reduction or phase exit produced by a controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeRecord {
    pub at: SimTime,
    pub kind: CeKind,
    pub cwnd_before: SegCount,
    pub cwnd_after: SegCount,
}

/// Contract between the transport and a congestion controller.
pub trait CongestionControl: Send {
    fn algorithm(&self) -> Algorithm;

    fn state(&self) -> &CcState;

    fn cwnd(&self) -> SegCount {
        self.state().cwnd
    }

    /// Pacing rate in bits per second, for rate-based controllers.
    fn pacing_rate(&self) -> Option<f64> {
        None
    }

    /// Processes an ACK that advanced the cumulative acknowledgement.
    fn on_ack(&mut self, ack: &AckInfo) -> Option<CeRecord>;

    /// Reacts to a detected loss. Returns the reduction applied, if any.
    fn on_loss(&mut self, now: SimTime, signal: LossSignal) -> Option<CeRecord>;

    /// The transport finished repairing the current loss episode.
    fn on_recovery_exit(&mut self, now: SimTime);

    /// An RTT measured outside the data exchange, such as the handshake.
    fn on_rtt_sample(&mut self, now: SimTime, rtt: Duration) {
        let _ = (now, rtt);
    }

    fn roccet(&self) -> Option<&RoccetState> {
        None
    }
}

/// Parameters needed to instantiate any controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub cubic: CubicParams,
    pub roccet: RoccetParams,
    /// Hold the window while the application cannot fill it (Linux
    /// `tcp_is_cwnd_limited` behavior).
    pub freeze_when_app_limited: bool,
    pub mss_bytes: u32,
}

pub fn build_controller(algo: Algorithm, cfg: &ControllerConfig) -> Box<dyn CongestionControl> {
    match algo {
        Algorithm::Reno => Box::new(RenoController::new(cfg.freeze_when_app_limited)),
        Algorithm::Cubic => Box::new(CubicController::new(
            cfg.cubic,
            cfg.freeze_when_app_limited,
        )),
        Algorithm::Roccet => Box::new(RoccetController::new(
            cfg.cubic,
            cfg.roccet,
            cfg.freeze_when_app_limited,
        )),
        Algorithm::ProbeRate => Box::new(ProbeRateController::new(cfg.mss_bytes)),
    }
}
