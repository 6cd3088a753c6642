//! Post-run statistics: per-flow series, bandwidth share, harm and
//! percentile summaries.
//!
//! Everything here is a pure function over an immutable trace. Statistics
//! skip a warm-up prefix (10 % of the run by default) and use nearest-rank
//! percentiles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::cc::{Algorithm, CeKind};
use crate::error::{LabError, Result};
use crate::netsim::{TraceRow, TraceSet};
use crate::time::SimTime;

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

/// Closed measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub from: SimTime,
    pub to: SimTime,
}

impl Window {
    pub fn new(from: SimTime, to: SimTime) -> Self {
        Window { from, to }
    }

    /// `[warmup·end, end]`.
    pub fn after_warmup(end: SimTime, warmup_fraction: f64) -> Self {
        let from = SimTime::from_secs_f64(end.as_secs_f64() * warmup_fraction);
        Window { from, to: end }
    }

    pub fn default_for(trace: &TraceSet) -> Self {
        Self::after_warmup(trace.horizon, DEFAULT_WARMUP_FRACTION)
    }

    fn empty_error(&self) -> LabError {
        LabError::EmptyWindow {
            from_ms: self.from.as_millis_f64(),
            to_ms: self.to.as_millis_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowMetrics {
    pub flow_id: u32,
    pub algo: Algorithm,
    pub goodput_series: Vec<(SimTime, f64)>,
    pub srtt_series: Vec<(SimTime, f64)>,
    /// Mean goodput in Mbps over the flow's active period.
    pub total_goodput: f64,
    pub acked_bytes: u64,
    pub ce_counts: BTreeMap<CeKind, usize>,
}

pub fn flow_metrics(trace: &TraceSet) -> Vec<FlowMetrics> {
    trace
        .flows
        .iter()
        .map(|f| {
            let mut goodput_series = Vec::new();
            let mut srtt_series = Vec::new();
            for s in trace.flow_samples(f.flow_id) {
                goodput_series.push((s.time, s.goodput_mbps));
                if let Some(r) = s.srtt_ms {
                    srtt_series.push((s.time, r));
                }
            }
            let end = f.stop_at.unwrap_or(trace.horizon).min(trace.horizon);
            let active = end.saturating_since(f.start_at).as_secs_f64();
            let total_goodput = if active > 0.0 {
                f.acked_bytes as f64 * 8.0 / active / 1e6
            } else {
                0.0
            };
            let ce_counts = CeKind::ALL.iter().map(|&k| (k, f.ce_count(k))).collect();
            FlowMetrics {
                flow_id: f.flow_id,
                algo: f.algo,
                goodput_series,
                srtt_series,
                total_goodput,
                acked_bytes: f.acked_bytes,
                ce_counts,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowShare {
    pub flow_id: u32,
    pub algo: Algorithm,
    pub bytes: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareReport {
    pub window: Window,
    pub per_flow: Vec<FlowShare>,
    pub jain_index: f64,
    /// Throughput harm suffered by one flow group, when a solo baseline
    /// was run for it.
    pub harm: Option<f64>,
}

impl ShareReport {
    pub fn fraction_of(&self, algo: Algorithm) -> f64 {
        self.per_flow
            .iter()
            .filter(|f| f.algo == algo)
            .map(|f| f.fraction)
            .sum()
    }
}

/// `(Σx)² / (n·Σx²)`; `None` for an empty or all-zero allocation.
pub fn jain_index(xs: &[f64]) -> Option<f64> {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if xs.is_empty() || sq == 0.0 {
        return None;
    }
    Some(sum * sum / (xs.len() as f64 * sq))
}

/// Cumulative acknowledged bytes at the latest sample not after `t`.
fn acked_at(trace: &TraceSet, flow_id: u32, t: SimTime) -> u64 {
    trace
        .flow_samples(flow_id)
        .take_while(|s| s.time <= t)
        .last()
        .map_or(0, |s| s.acked_bytes)
}

/// Per-flow share of bytes acknowledged within `window` (default: the run
/// minus its warm-up).
pub fn bandwidth_share(trace: &TraceSet, window: Option<Window>) -> Result<ShareReport> {
    let window = window.unwrap_or_else(|| Window::default_for(trace));
    let any_sample = trace
        .samples
        .iter()
        .any(|s| s.time > window.from && s.time <= window.to);
    if window.to <= window.from || !any_sample || trace.flows.is_empty() {
        return Err(window.empty_error());
    }
    let bytes: Vec<u64> = trace
        .flows
        .iter()
        .map(|f| acked_at(trace, f.flow_id, window.to) - acked_at(trace, f.flow_id, window.from))
        .collect();
    let total: u64 = bytes.iter().sum();
    let xs: Vec<f64> = bytes.iter().map(|&b| b as f64).collect();
    let jain = jain_index(&xs).ok_or_else(|| window.empty_error())?;
    let per_flow = trace
        .flows
        .iter()
        .zip(&bytes)
        .map(|(f, &b)| FlowShare {
            flow_id: f.flow_id,
            algo: f.algo,
            bytes: b,
            fraction: b as f64 / total as f64,
        })
        .collect();
    Ok(ShareReport {
        window,
        per_flow,
        jain_index: jain,
        harm: None,
    })
}

/// Relative goodput loss, clamped at zero.
pub fn harm_from_goodput(solo: f64, competing: f64) -> Result<f64> {
    if solo <= 0.0 {
        return Err(LabError::ZeroSoloGoodput);
    }
    Ok(((solo - competing) / solo).max(0.0))
}

pub fn harm(solo: &FlowMetrics, competing: &FlowMetrics) -> Result<f64> {
    harm_from_goodput(solo.total_goodput, competing.total_goodput)
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Quartiles> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            p25: nearest_rank(&v, 25.0)?,
            p50: nearest_rank(&v, 50.0)?,
            p75: nearest_rank(&v, 75.0)?,
            max: *v.last()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSummary {
    pub flow_id: u32,
    pub samples: usize,
    /// `None` when no RTT sample exists in the window.
    pub srtt_ms: Option<Quartiles>,
    pub goodput_mbps: Quartiles,
}

/// Percentiles over rows after the warm-up prefix of the trace's time span.
pub fn summarize(rows: &[TraceRow], warmup_fraction: f64) -> Result<Vec<FlowSummary>> {
    let end_ms = rows.iter().map(|r| r.time_ms).fold(0.0, f64::max);
    let window = Window::after_warmup(SimTime::from_secs_f64(end_ms / 1e3), warmup_fraction);
    summarize_window(rows, window)
}

pub fn summarize_window(rows: &[TraceRow], window: Window) -> Result<Vec<FlowSummary>> {
    let (from, to) = (window.from.as_millis_f64(), window.to.as_millis_f64());
    let mut by_flow: BTreeMap<u32, Vec<&TraceRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.time_ms >= from && r.time_ms <= to) {
        by_flow.entry(r.flow_id).or_default().push(r);
    }
    if by_flow.is_empty() {
        return Err(window.empty_error());
    }
    Ok(by_flow
        .into_iter()
        .map(|(flow_id, rs)| {
            let srtt: Vec<f64> = rs.iter().filter_map(|r| r.srtt_ms).collect();
            let goodput: Vec<f64> = rs.iter().map(|r| r.goodput_mbps).collect();
            FlowSummary {
                flow_id,
                samples: rs.len(),
                srtt_ms: Quartiles::of(&srtt),
                goodput_mbps: Quartiles::of(&goodput).expect("non-empty group"),
            }
        })
        .collect())
}

/// Column-aligned plain-text table. The first column is left-aligned, the
/// rest right-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        TextTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let mut l = String::new();
            for (i, w) in widths.iter().enumerate() {
                let cell = cells.get(i).map(String::as_str).unwrap_or("");
                if i > 0 {
                    l.push_str("  ");
                }
                if i == 0 {
                    let _ = write!(l, "{cell:<w$}");
                } else {
                    let _ = write!(l, "{cell:>w$}");
                }
            }
            out.push_str(l.trim_end());
            out.push('\n');
        };
        line(&self.header);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        line(&rule);
        for row in &self.rows {
            line(row);
        }
        out
    }
}

/// Share report as a text table.
pub fn share_table(report: &ShareReport) -> String {
    let mut t = TextTable::new(["flow", "algo", "bytes", "fraction"]);
    for f in &report.per_flow {
        t.push([
            f.flow_id.to_string(),
            f.algo.to_string(),
            f.bytes.to_string(),
            format!("{:.4}", f.fraction),
        ]);
    }
    let mut out = t.render();
    let _ = writeln!(out, "jain_index {:.4}", report.jain_index);
    if let Some(h) = report.harm {
        let _ = writeln!(out, "harm {h:.4}");
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Percentile summaries as a text table; `label` names the input.
pub fn summary_table(entries: &[(String, Vec<FlowSummary>)]) -> TextTable {
    let mut t = TextTable::new([
        "input",
        "flow",
        "srtt_p25",
        "srtt_p50",
        "srtt_p75",
        "srtt_max",
        "gput_p25",
        "gput_p50",
        "gput_p75",
        "gput_max",
    ]);
    for (label, flows) in entries {
        for f in flows {
            let s = f.srtt_ms;
            let g = f.goodput_mbps;
            t.push([
                label.clone(),
                f.flow_id.to_string(),
                fmt_opt(s.map(|q| q.p25)),
                fmt_opt(s.map(|q| q.p50)),
                fmt_opt(s.map(|q| q.p75)),
                fmt_opt(s.map(|q| q.max)),
                format!("{:.3}", g.p25),
                format!("{:.3}", g.p50),
                format!("{:.3}", g.p75),
                format!("{:.3}", g.max),
            ]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, flow: u32, srtt: f64, gp: f64) -> TraceRow {
        TraceRow {
            time_ms: t,
            flow_id: flow,
            cwnd_seg: 10.0,
            srtt_ms: Some(srtt),
            goodput_mbps: gp,
            queue_seg: 0,
        }
    }

    #[test]
    fn nearest_rank_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), Some(50.0));
        assert_eq!(nearest_rank(&v, 25.0), Some(25.0));
        assert_eq!(nearest_rank(&v, 75.0), Some(75.0));
        assert_eq!(nearest_rank(&v, 100.0), Some(100.0));
        assert_eq!(nearest_rank(&v, 0.0), Some(1.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn constant_series_has_equal_percentiles() {
        let q = Quartiles::of(&[7.5; 40]).unwrap();
        assert_eq!((q.p25, q.p50, q.p75, q.max), (7.5, 7.5, 7.5, 7.5));
    }

    #[test]
    fn harm_examples() {
        assert_eq!(harm_from_goodput(10.0, 10.0).unwrap(), 0.0);
        assert!((harm_from_goodput(10.0, 6.0).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(harm_from_goodput(10.0, 12.0).unwrap(), 0.0);
        assert!(matches!(
            harm_from_goodput(0.0, 1.0),
            Err(LabError::ZeroSoloGoodput)
        ));
    }

    #[test]
    fn jain_examples() {
        assert_eq!(jain_index(&[3.0]), Some(1.0));
        assert_eq!(jain_index(&[2.0, 2.0, 2.0, 2.0]), Some(1.0));
        assert_eq!(jain_index(&[1.0, 0.0]), Some(0.5));
        assert_eq!(jain_index(&[0.0, 0.0]), None);
        assert_eq!(jain_index(&[]), None);
    }

    #[test]
    fn summarize_skips_warmup_and_groups_flows() {
        let mut rows = Vec::new();
        for i in 1..=100 {
            rows.push(row(i as f64 * 10.0, 0, i as f64, 1.0));
            rows.push(row(i as f64 * 10.0, 1, 2.0 * i as f64, 2.0));
        }
        let s = summarize(&rows, 0.1).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].samples, 91);
        // Values 10..=100: rank ceil(0.25·91) = 23.
        assert_eq!(s[0].srtt_ms.unwrap().p25, 32.0);
        assert_eq!(s[0].srtt_ms.unwrap().max, 100.0);
        assert_eq!(s[1].goodput_mbps.p50, 2.0);
    }

    #[test]
    fn summarize_empty_window_names_it() {
        let rows = vec![row(10.0, 0, 1.0, 1.0)];
        let err = summarize_window(
            &rows,
            Window::new(SimTime::from_millis(20), SimTime::from_millis(30)),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "no samples in window [20 ms, 30 ms]");
    }

    #[test]
    fn table_aligns_columns() {
        let mut t = TextTable::new(["name", "value"]);
        t.push(["a", "1"]);
        t.push(["long-name", "12345"]);
        let out = t.render();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "name       value");
        assert_eq!(lines[1], "---------  -----");
        assert_eq!(lines[2], "a              1");
        assert_eq!(lines[3], "long-name  12345");
    }
}
