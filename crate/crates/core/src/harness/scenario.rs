//! Scenario files.
//!
//! A scenario is a TOML document describing one dumbbell run. Every table
//! rejects unknown keys. Durations carry their unit in the key name
//! (`_ms`, `_s`), rates are in Mbit/s.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cc::{Algorithm, ControllerConfig, CubicParams};
use crate::error::{LabError, Result};
use crate::netsim::{LinkSpec, SourceKind, SourceSpec};
use crate::roccet::RoccetParams;
use crate::time::{serde_millis, serde_secs, SimTime};

/// Smallest permitted buffer, as a multiple of the BDP.
pub const MIN_BUFFER_BDP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(rename = "horizon_s", with = "serde_secs")]
    pub horizon: Duration,
    /// Bottleneck buffer in multiples of the initial-rate BDP.
    #[serde(default = "one_f64")]
    pub buffer_bdp: f64,
    /// Repetitions used when the scenario seeds a sweep.
    #[serde(default = "one_u32")]
    pub repetitions: u32,
    #[serde(default)]
    pub sampling: Sampling,
    pub link: LinkConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub injector: InjectorConfig,
    #[serde(default)]
    pub cubic: CubicParams,
    #[serde(default)]
    pub roccet: RoccetParams,
    pub flows: Vec<FlowGroup>,
}

fn default_seed() -> u64 {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    #[serde(rename = "interval_ms", with = "serde_millis")]
    pub interval: Duration,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            interval: Duration::from_millis(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub rate_mbps: f64,
    /// Base round-trip propagation delay; each direction gets half.
    #[serde(rename = "rtt_ms", with = "serde_millis")]
    pub rtt: Duration,
    #[serde(default = "default_mtu")]
    pub mtu_bytes: u32,
    /// Later rate changes, in time order.
    #[serde(default)]
    pub schedule: Vec<RateStepConfig>,
}

fn default_mtu() -> u32 {
    1500
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateStepConfig {
    pub at_s: f64,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub delayed_ack: bool,
    #[serde(rename = "delayed_ack_timeout_ms", with = "serde_millis")]
    pub delayed_ack_timeout: Duration,
    #[serde(rename = "min_rto_ms", with = "serde_millis")]
    pub min_rto: Duration,
    #[serde(rename = "initial_rto_ms", with = "serde_millis")]
    pub initial_rto: Duration,
    #[serde(rename = "max_rto_s", with = "serde_secs")]
    pub max_rto: Duration,
    pub freeze_when_app_limited: bool,
    /// Default sender socket buffer for every flow; 0 means unlimited.
    pub send_buffer_bytes: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            delayed_ack: false,
            delayed_ack_timeout: Duration::from_millis(40),
            min_rto: Duration::from_millis(200),
            initial_rto: Duration::from_secs(1),
            max_rto: Duration::from_secs(60),
            freeze_when_app_limited: true,
            send_buffer_bytes: 0,
        }
    }
}

/// Radio-layer stand-in: random loss and per-packet delay jitter on the
/// forward path, active inside `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjectorConfig {
    pub loss_prob: f64,
    /// Upper bound of the uniform extra delay added to a jittered packet.
    #[serde(rename = "jitter_ms", with = "serde_millis")]
    pub jitter: Duration,
    /// Fraction of packets that are jittered. Values below 1 model sparse
    /// link-layer retransmissions that hold back single packets.
    pub jitter_prob: f64,
    pub start_s: f64,
    /// Negative means "until the end of the run".
    pub end_s: f64,
}

impl Default for InjectorConfig {
    fn default() -> Self {
        InjectorConfig {
            loss_prob: 0.0,
            jitter: Duration::ZERO,
            jitter_prob: 1.0,
            start_s: 0.0,
            end_s: -1.0,
        }
    }
}

impl InjectorConfig {
    pub fn is_active(&self) -> bool {
        self.loss_prob > 0.0 || !self.jitter.is_zero()
    }

    pub fn covers(&self, now: SimTime) -> bool {
        let t = now.as_secs_f64();
        t >= self.start_s && (self.end_s < 0.0 || t < self.end_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SourceConfig {
    #[default]
    Greedy,
    AppLimited { rate_mbps: f64 },
}

/// `count` identical flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGroup {
    pub algo: Algorithm,
    #[serde(default = "one_u32")]
    pub count: u32,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub start_s: f64,
    /// Omitted: the flow runs until the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// Each flow's start is shifted by a seeded uniform draw in
    /// `[0, start_jitter_ms]`.
    #[serde(default)]
    pub start_jitter_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub send_buffer_bytes: Option<u64>,
    /// Per-group parameter tables, layered over the global ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubic: Option<CubicParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roccet: Option<RoccetParams>,
}

impl FlowGroup {
    pub fn new(algo: Algorithm) -> Self {
        FlowGroup {
            algo,
            count: 1,
            source: SourceConfig::Greedy,
            start_s: 0.0,
            duration_s: None,
            start_jitter_ms: 0.0,
            send_buffer_bytes: None,
            cubic: None,
            roccet: None,
        }
    }
}

/// One concrete flow after expanding groups.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub id: u32,
    pub algo: Algorithm,
    pub source: SourceSpec,
    /// `None` for an unlimited socket buffer.
    pub send_buffer_bytes: Option<u64>,
    pub controller: ControllerConfig,
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::Validation(msg.into())
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Self::from_value(value)
    }

    /// Deserializes a TOML tree, layering global `cubic`/`roccet` tables
    /// under per-group ones, then validates.
    pub fn from_value(mut value: toml::Value) -> Result<Self> {
        if let Some(root) = value.as_table_mut() {
            let globals: Vec<(&str, toml::Value)> = ["cubic", "roccet"]
                .into_iter()
                .filter_map(|k| root.get(k).map(|v| (k, v.clone())))
                .collect();
            if let Some(flows) = root.get_mut("flows").and_then(|f| f.as_array_mut()) {
                for flow in flows.iter_mut().filter_map(|f| f.as_table_mut()) {
                    for (key, global) in &globals {
                        if let (Some(local), Some(base)) =
                            (flow.get(*key).and_then(|v| v.as_table()), global.as_table())
                        {
                            let mut merged = base.clone();
                            merged.extend(local.clone());
                            flow.insert((*key).to_string(), toml::Value::Table(merged));
                        }
                    }
                }
            }
        }
        let spec: ScenarioSpec = value
            .try_into()
            .map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical TOML rendering with every default spelled out.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.flows.is_empty() {
            return Err(invalid("at least one flow group is required"));
        }
        self.validate_network()
    }

    /// Everything except the requirement of at least one flow, which only
    /// experiments need; the simulator itself accepts an empty scenario.
    pub fn validate_network(&self) -> Result<()> {
        if !(self.horizon > Duration::ZERO) {
            return Err(invalid("horizon_s must be > 0"));
        }
        if !(self.buffer_bdp.is_finite() && self.buffer_bdp >= MIN_BUFFER_BDP) {
            return Err(invalid(format!(
                "buffer_bdp must be >= {MIN_BUFFER_BDP}, got {}",
                self.buffer_bdp
            )));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be >= 1"));
        }
        if self.sampling.interval.is_zero() {
            return Err(invalid("sampling.interval_ms must be > 0"));
        }
        self.link_spec()?;
        let t = &self.transport;
        if t.min_rto.is_zero() || t.initial_rto < t.min_rto || t.max_rto < t.initial_rto {
            return Err(invalid(
                "transport timers must satisfy 0 < min_rto <= initial_rto <= max_rto",
            ));
        }
        if t.delayed_ack && t.delayed_ack_timeout.is_zero() {
            return Err(invalid("transport.delayed_ack_timeout_ms must be > 0"));
        }
        let inj = &self.injector;
        if !(0.0..1.0).contains(&inj.loss_prob) {
            return Err(invalid(format!(
                "injector.loss_prob must lie in [0, 1), got {}",
                inj.loss_prob
            )));
        }
        if !(0.0..=1.0).contains(&inj.jitter_prob) {
            return Err(invalid(format!(
                "injector.jitter_prob must lie in [0, 1], got {}",
                inj.jitter_prob
            )));
        }
        if inj.start_s < 0.0 || (inj.end_s >= 0.0 && inj.end_s < inj.start_s) {
            return Err(invalid("injector window must satisfy 0 <= start_s <= end_s"));
        }
        self.cubic.validate()?;
        self.roccet.validate()?;
        let horizon = self.horizon.as_secs_f64();
        for (i, g) in self.flows.iter().enumerate() {
            let at = |msg: String| invalid(format!("flows[{i}]: {msg}"));
            if g.count == 0 {
                return Err(at("count must be >= 1".into()));
            }
            if !(g.start_s.is_finite() && g.start_s >= 0.0) {
                return Err(at(format!("start_s must be >= 0, got {}", g.start_s)));
            }
            if !(g.start_jitter_ms.is_finite() && g.start_jitter_ms >= 0.0) {
                return Err(at("start_jitter_ms must be >= 0".into()));
            }
            let latest_start = g.start_s + g.start_jitter_ms / 1e3;
            if latest_start >= horizon {
                return Err(at(format!("starts at {latest_start} s, not before the horizon")));
            }
            if let Some(d) = g.duration_s {
                if !(d.is_finite() && d > 0.0) {
                    return Err(at(format!("duration_s must be > 0, got {d}")));
                }
                if latest_start + d >= horizon {
                    return Err(at(format!(
                        "ends at {} s; the horizon must extend past every flow",
                        latest_start + d
                    )));
                }
            }
            if let SourceConfig::AppLimited { rate_mbps } = g.source {
                if !(rate_mbps.is_finite() && rate_mbps > 0.0) {
                    return Err(at(format!("app_limited rate must be > 0, got {rate_mbps}")));
                }
            }
            if let Some(c) = &g.cubic {
                c.validate().map_err(|e| at(e.to_string()))?;
            }
            if let Some(r) = &g.roccet {
                r.validate().map_err(|e| at(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn link_spec(&self) -> Result<LinkSpec> {
        let l = &self.link;
        let mut schedule = vec![(SimTime::ZERO, l.rate_mbps * 1e6)];
        for step in &l.schedule {
            if !(step.at_s.is_finite() && step.at_s > 0.0) {
                return Err(invalid(format!(
                    "link.schedule times must be > 0, got {}",
                    step.at_s
                )));
            }
            schedule.push((SimTime::from_secs_f64(step.at_s), step.rate_mbps * 1e6));
        }
        LinkSpec::new(schedule, l.rtt / 2, l.mtu_bytes)
    }

    /// Queue capacity in packets: `ceil(buffer_bdp · BDP)`, at least one.
    pub fn queue_capacity(&self) -> Result<usize> {
        let bdp = self.link_spec()?.bdp_packets();
        Ok(((self.buffer_bdp * bdp).ceil() as usize).max(1))
    }

    pub fn total_flows(&self) -> usize {
        self.flows.iter().map(|g| g.count as usize).sum()
    }

    /// Replaces every group's algorithm.
    pub fn set_algo(&mut self, algo: Algorithm) {
        for g in &mut self.flows {
            g.algo = algo;
        }
    }

    /// Expands groups into individual flows with ids 0, 1, ... . Start
    /// jitter is drawn from a stream derived from the scenario seed.
    pub fn expand_flows(&self) -> Vec<FlowSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5354_4152_545f_4a49);
        let mut out = Vec::with_capacity(self.total_flows());
        for g in &self.flows {
            let controller = ControllerConfig {
                cubic: g.cubic.unwrap_or(self.cubic),
                roccet: g.roccet.unwrap_or(self.roccet),
                freeze_when_app_limited: self.transport.freeze_when_app_limited,
                mss_bytes: self.link.mtu_bytes,
            };
            let buffer = g.send_buffer_bytes.unwrap_or(self.transport.send_buffer_bytes);
            for _ in 0..g.count {
                let jitter_ms = if g.start_jitter_ms > 0.0 {
                    rng.gen_range(0.0..=g.start_jitter_ms)
                } else {
                    0.0
                };
                let start_at = SimTime::from_secs_f64(g.start_s + jitter_ms / 1e3);
                out.push(FlowSpec {
                    id: out.len() as u32,
                    algo: g.algo,
                    source: SourceSpec {
                        kind: match g.source {
                            SourceConfig::Greedy => SourceKind::Greedy,
                            SourceConfig::AppLimited { rate_mbps } => SourceKind::AppLimited {
                                rate_bps: rate_mbps * 1e6,
                            },
                        },
                        start_at,
                        duration: g.duration_s.map(Duration::from_secs_f64),
                    },
                    send_buffer_bytes: (buffer > 0).then_some(buffer),
                    controller,
                });
            }
        }
        out
    }
}

/// Applies `path=value` overrides to a scenario tree. Paths are dotted;
/// numeric segments index arrays (`flows.0.algo`). Values are parsed as
/// TOML, falling back to a bare string.
pub fn apply_overrides(value: &mut toml::Value, overrides: &[(String, String)]) -> Result<()> {
    for (path, raw) in overrides {
        let parsed = parse_override_value(raw);
        set_path(value, path, parsed)?;
    }
    Ok(())
}

/// Splits `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| LabError::Config(format!("override '{arg}' is not of the form key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(LabError::Config(format!("override '{arg}' has an empty key")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

pub fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn set_path(root: &mut toml::Value, path: &str, new: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(LabError::Config(format!("malformed override path '{path}'")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert((*part).to_string(), new);
                    return Ok(());
                }
                t.entry((*part).to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| {
                    LabError::Config(format!("'{part}' in '{path}' must be an array index"))
                })?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| {
                    LabError::Config(format!("index {idx} in '{path}' is out of range (len {len})"))
                })?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(LabError::Config(format!(
                    "'{path}' descends into a scalar at '{part}'"
                )))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        horizon_s = 10
        [link]
        rate_mbps = 10
        rtt_ms = 40
        [[flows]]
        algo = "cubic"
    "#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = ScenarioSpec::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.buffer_bdp, 1.0);
        assert_eq!(s.link.mtu_bytes, 1500);
        assert_eq!(s.roccet, RoccetParams::default());
        assert_eq!(s.sampling.interval, Duration::from_millis(10));
        assert_eq!(s.queue_capacity().unwrap(), 34);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert_eq!(ScenarioSpec::from_toml_str(&text).unwrap_err().kind(), "config");
        let text = MINIMAL.replace("rtt_ms = 40", "rtt_ms = 40\nspeed = 3");
        assert!(ScenarioSpec::from_toml_str(&text).is_err());
    }

    #[test]
    fn group_params_layer_over_globals() {
        let text = format!(
            "{MINIMAL}\ncubic = {{ c_scale = 0.8 }}\n[roccet]\nalpha = 0.5\n",
        )
        .replace("algo = \"cubic\"", "algo = \"roccet\"\nroccet = { drain_ms = 50 }");
        let s = ScenarioSpec::from_toml_str(&text).unwrap();
        let r = s.flows[0].roccet.unwrap();
        assert_eq!(r.alpha, 0.5);
        assert_eq!(r.drain_duration, Duration::from_millis(50));
        assert_eq!(s.expand_flows()[0].controller.cubic.c_scale, 0.8);
    }

    #[test]
    fn round_trips_through_toml() {
        let s = ScenarioSpec::from_toml_str(MINIMAL).unwrap();
        let again = ScenarioSpec::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn overrides_reach_nested_and_indexed_keys() {
        let s = ScenarioSpec::from_toml_str(MINIMAL).unwrap();
        let mut v = s.to_value();
        apply_overrides(
            &mut v,
            &[
                ("roccet.alpha".into(), "0.5".into()),
                ("flows.0.algo".into(), "roccet".into()),
                ("flows.0.count".into(), "3".into()),
            ],
        )
        .unwrap();
        let s = ScenarioSpec::from_value(v).unwrap();
        assert_eq!(s.roccet.alpha, 0.5);
        assert_eq!(s.flows[0].algo, Algorithm::Roccet);
        assert_eq!(s.total_flows(), 3);
    }

    #[test]
    fn override_of_unknown_key_fails_validation() {
        let mut v = ScenarioSpec::from_toml_str(MINIMAL).unwrap().to_value();
        apply_overrides(&mut v, &[("roccet.alhpa".into(), "0.5".into())]).unwrap();
        assert!(ScenarioSpec::from_value(v).is_err());
        let mut v = ScenarioSpec::from_toml_str(MINIMAL).unwrap().to_value();
        assert!(apply_overrides(&mut v, &[("flows.4.algo".into(), "reno".into())]).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        for (from, to) in [
            ("rate_mbps = 10", "rate_mbps = 0"),
            ("horizon_s = 10", "horizon_s = 10\nbuffer_bdp = 0.1"),
            ("algo = \"cubic\"", "algo = \"cubic\"\ncount = 0"),
            ("algo = \"cubic\"", "algo = \"cubic\"\nduration_s = 10"),
            ("algo = \"cubic\"", "algo = \"vegas\""),
            ("horizon_s = 10", "horizon_s = 10\n[injector]\njitter_ms = 5\njitter_prob = 1.5"),
            ("horizon_s = 10", "horizon_s = 10\n[injector]\njitter_ms = 5\njitter_prob = -0.1"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(ScenarioSpec::from_toml_str(&text).is_err(), "{to}");
        }
        let sparse = MINIMAL.replace(
            "horizon_s = 10",
            "horizon_s = 10\n[injector]\njitter_ms = 5\njitter_prob = 0.5",
        );
        assert_eq!(ScenarioSpec::from_toml_str(&sparse).unwrap().injector.jitter_prob, 0.5);
    }

    #[test]
    fn start_jitter_is_seeded() {
        let text = MINIMAL.replace(
            "algo = \"cubic\"",
            "algo = \"cubic\"\ncount = 4\nstart_jitter_ms = 5",
        );
        let s = ScenarioSpec::from_toml_str(&text).unwrap();
        let a: Vec<_> = s.expand_flows().iter().map(|f| f.source.start_at).collect();
        assert_eq!(a, s.expand_flows().iter().map(|f| f.source.start_at).collect::<Vec<_>>());
        assert!(a.iter().all(|t| *t <= SimTime::from_millis(5)));
        assert!(a.windows(2).any(|w| w[0] != w[1]));
    }
}
