//! Named scenarios and sweeps.

use crate::error::{LabError, Result};

use super::scenario::ScenarioSpec;
use super::sweep::SweepSpec;

const STEADY: &str = r#"
name = "steady"
horizon_s = 60
buffer_bdp = 1

[link]
rate_mbps = 10
rtt_ms = 40

[[flows]]
algo = "cubic"
"#;

/// Halved link rate mid-run under a deep buffer. The 2 MiB socket buffer
/// bounds a greedy sender the way a default Linux `wmem` does.
const BW_HALVING: &str = r#"
name = "bw-halving"
horizon_s = 35
buffer_bdp = 16

[link]
rate_mbps = 50
rtt_ms = 40
schedule = [{ at_s = 15, rate_mbps = 25 }]

[transport]
send_buffer_bytes = 2097152

[[flows]]
algo = "roccet"
"#;

/// App-limited CUBIC over a deep buffer. During the first five seconds a
/// few packets are held back by 10 ms, as a link-layer retransmission
/// would; the reordering triggers spurious fast retransmits.
const FROZEN_CWND: &str = r#"
name = "frozen-cwnd"
horizon_s = 60
buffer_bdp = 16

[link]
rate_mbps = 50
rtt_ms = 40

[injector]
jitter_ms = 10
jitter_prob = 0.0002
start_s = 0
end_s = 5

[[flows]]
algo = "cubic"
source = { app_limited = { rate_mbps = 20 } }
"#;

const FAIRNESS_10X40: &str = r#"
name = "fairness-10x40"
horizon_s = 120
buffer_bdp = 1
repetitions = 5

[link]
rate_mbps = 10
rtt_ms = 40

[[flows]]
algo = "roccet"
count = 2
start_jitter_ms = 5
"#;

const FAIRNESS_50X30: &str = r#"
name = "fairness-50x30"
horizon_s = 120
buffer_bdp = 1
repetitions = 5

[link]
rate_mbps = 50
rtt_ms = 30

[[flows]]
algo = "roccet"
count = 2
start_jitter_ms = 5
"#;

/// Greedy flow with a 16-BDP buffer: slow start can fill the queue long
/// before it overflows.
const SLOW_START_DEEP: &str = r#"
name = "slow-start-deep"
horizon_s = 10
buffer_bdp = 16

[link]
rate_mbps = 50
rtt_ms = 40

[[flows]]
algo = "roccet"
"#;

pub const BUILTIN_SCENARIOS: [(&str, &str); 6] = [
    ("steady", STEADY),
    ("bw-halving", BW_HALVING),
    ("frozen-cwnd", FROZEN_CWND),
    ("fairness-10x40", FAIRNESS_10X40),
    ("fairness-50x30", FAIRNESS_50X30),
    ("slow-start-deep", SLOW_START_DEEP),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_SCENARIOS.iter().map(|(n, _)| *n)
}

/// Source text of a builtin scenario.
pub fn builtin_scenario_toml(name: &str) -> Result<&'static str> {
    BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| LabError::UnknownScenario(name.to_string()))
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioSpec> {
    ScenarioSpec::from_toml_str(builtin_scenario_toml(name)?)
}

/// Intra-ROCCET share: 2..8 flows over 1..8 BDP buffers.
const ROCCET_INTRA: &str = r#"
name = "roccet-intra"
repetitions = 5
base_builtin = "fairness-10x40"

[[axes]]
name = "n_flows"
path = "flows.0.count"
values = [2, 3, 4, 5, 6, 7, 8]

[[axes]]
name = "buffer"
path = "buffer_bdp"
values = [1, 2, 4, 8]
"#;

/// One CUBIC flow joined by one ROCCET flow a second later. Harm is the
/// CUBIC flow's goodput loss against running alone.
const DEFENSIVENESS: &str = r#"
name = "defensiveness"
repetitions = 5
harm_group = 0

[base]
name = "defensiveness"
horizon_s = 120

[base.link]
rate_mbps = 10
rtt_ms = 40

[[base.flows]]
algo = "cubic"
start_jitter_ms = 5

[[base.flows]]
algo = "roccet"
start_s = 1
start_jitter_ms = 5

[[axes]]
name = "buffer"
path = "buffer_bdp"
values = [1, 8]

[[axes]]
name = "competitor"
path = "flows.1.algo"
values = ["roccet", "cubic"]
"#;

/// 1 to 32 ROCCET flows against one competing flow of each kind.
const FAIRNESS_MATRIX: &str = r#"
name = "fairness-matrix"
repetitions = 5

[base]
name = "fairness-matrix"
horizon_s = 120

[base.link]
rate_mbps = 10
rtt_ms = 40

[[base.flows]]
algo = "roccet"
start_jitter_ms = 5

[[base.flows]]
algo = "cubic"
start_s = 1
start_jitter_ms = 5

[[axes]]
name = "n_flows"
path = "flows.0.count"
values = [1, 2, 4, 8, 16, 32]

[[axes]]
name = "competitor"
path = "flows.1.algo"
values = ["cubic", "roccet", "probe_rate"]

[[axes]]
name = "buffer"
path = "buffer_bdp"
values = [1, 2, 4, 8, 16, 32]
"#;

pub const BUILTIN_SWEEPS: [(&str, &str); 3] = [
    ("roccet-intra", ROCCET_INTRA),
    ("defensiveness", DEFENSIVENESS),
    ("fairness-matrix", FAIRNESS_MATRIX),
];

pub fn builtin_sweep_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_SWEEPS.iter().map(|(n, _)| *n)
}

pub fn builtin_sweep(name: &str) -> Result<SweepSpec> {
    let text = BUILTIN_SWEEPS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| LabError::UnknownScenario(name.to_string()))?;
    SweepSpec::from_toml_str(text)
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::cc::Algorithm;
    use crate::time::SimTime;

    #[test]
    fn every_builtin_validates() {
        for name in builtin_names() {
            let s = builtin_scenario(name).unwrap();
            assert_eq!(s.name, name);
        }
        for name in builtin_sweep_names() {
            builtin_sweep(name).unwrap();
        }
    }

    #[test]
    fn bw_halving_schedule() {
        let s = builtin_scenario("bw-halving").unwrap();
        let link = s.link_spec().unwrap();
        assert_eq!(
            link.rate_schedule,
            vec![(SimTime::ZERO, 50e6), (SimTime::from_secs(15), 25e6)]
        );
        assert_eq!(link.base_rtt(), Duration::from_millis(40));
        assert_eq!(s.buffer_bdp, 16.0);
        assert_eq!(s.horizon, Duration::from_secs(35));
    }

    #[test]
    fn steady_is_one_greedy_flow_one_bdp() {
        let s = builtin_scenario("steady").unwrap();
        assert_eq!(s.total_flows(), 1);
        assert_eq!(s.buffer_bdp, 1.0);
    }

    #[test]
    fn fairness_10x40_shape() {
        let s = builtin_scenario("fairness-10x40").unwrap();
        assert_eq!(s.link.rate_mbps, 10.0);
        assert_eq!(s.link.rtt, Duration::from_millis(40));
        assert_eq!(s.horizon, Duration::from_secs(120));
        assert_eq!(s.repetitions, 5);
        assert!(s.flows.iter().all(|g| g.algo == Algorithm::Roccet));
    }

    #[test]
    fn unknown_name_is_reported() {
        let err = builtin_scenario("nope").unwrap_err();
        assert_eq!(err.kind(), "unknown-scenario");
        assert!(err.to_string().contains("unknown scenario"));
    }
}
