//! Run output: sampled per-flow series, event logs and the conservation
//! audit, plus their CSV and JSON encodings.

use std::io::{self, Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::transport::SenderStats;
use crate::cc::{Algorithm, CeKind, CeRecord, Phase};
use crate::error::{LabError, Result};
use crate::time::SimTime;

pub const CSV_MAGIC: &str = "# roccet-lab trace v1";
pub const CSV_COLUMNS: [&str; 6] = [
    "time_ms",
    "flow_id",
    "cwnd_seg",
    "srtt_ms",
    "goodput_mbps",
    "queue_seg",
];
pub const EVENTS_FORMAT: &str = "roccet-lab events v1";

/// One sampler tick for one flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub time: SimTime,
    pub flow_id: u32,
    pub cwnd: f64,
    pub srtt_ms: Option<f64>,
    /// Goodput over the preceding sampling interval.
    pub goodput_mbps: f64,
    /// Bottleneck occupancy, all flows, including the packet in service.
    pub queue_seg: usize,
    /// Cumulative acknowledged payload.
    pub acked_bytes: u64,
    pub phase: Phase,
    pub srrtt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCause {
    Droptail,
    Injected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DropRecord {
    pub at: SimTime,
    pub flow_id: u32,
    pub seq: u64,
    pub cause: DropCause,
}

/// Per-flow packet accounting at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowAudit {
    pub sent: u64,
    /// Arrivals at the receiver, duplicates included.
    pub delivered: u64,
    pub dropped: u64,
    pub in_queue: u64,
    /// Propagating on the forward path.
    pub in_flight: u64,
}

impl FlowAudit {
    pub fn holds(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_queue + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrace {
    pub flow_id: u32,
    pub algo: Algorithm,
    pub start_at: SimTime,
    pub stop_at: Option<SimTime>,
    pub ce_log: Vec<CeRecord>,
    pub acked_bytes: u64,
    pub stats: SenderStats,
    pub audit: FlowAudit,
}

impl FlowTrace {
    pub fn ce_count(&self, kind: CeKind) -> usize {
        self.ce_log.iter().filter(|r| r.kind == kind).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSet {
    pub scenario: String,
    pub seed: u64,
    /// Resolved scenario as TOML, echoed into every artifact.
    pub config: String,
    pub sample_interval: Duration,
    pub horizon: SimTime,
    pub link_rate_bps: f64,
    pub queue_capacity: usize,
    pub flows: Vec<FlowTrace>,
    pub samples: Vec<Sample>,
    pub drops: Vec<DropRecord>,
    pub events_processed: u64,
}

impl TraceSet {
    pub fn flow_samples(&self, flow_id: u32) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.flow_id == flow_id)
    }

    pub fn conservation_holds(&self) -> bool {
        self.flows.iter().all(|f| f.audit.holds())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_MAGIC}")?;
        for line in self.config.lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", CSV_COLUMNS.join(","))?;
        for s in &self.samples {
            let srtt = s.srtt_ms.map(|v| format!("{v:.3}")).unwrap_or_default();
            writeln!(
                w,
                "{:.3},{},{:.3},{},{:.6},{}",
                s.time.as_millis_f64(),
                s.flow_id,
                s.cwnd,
                srtt,
                s.goodput_mbps,
                s.queue_seg
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn write_events_json<W: Write>(&self, w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Events<'a> {
            format: &'static str,
            scenario: &'a str,
            seed: u64,
            config: &'a str,
            horizon_ms: f64,
            queue_capacity: usize,
            events_processed: u64,
            flows: &'a [FlowTrace],
            drops: &'a [DropRecord],
        }
        let doc = Events {
            format: EVENTS_FORMAT,
            scenario: &self.scenario,
            seed: self.seed,
            config: &self.config,
            horizon_ms: self.horizon.as_millis_f64(),
            queue_capacity: self.queue_capacity,
            events_processed: self.events_processed,
            flows: &self.flows,
            drops: &self.drops,
        };
        serde_json::to_writer_pretty(w, &doc).map_err(io::Error::other)
    }
}

/// A row read back from a trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub time_ms: f64,
    pub flow_id: u32,
    pub cwnd_seg: f64,
    pub srtt_ms: Option<f64>,
    pub goodput_mbps: f64,
    pub queue_seg: u64,
}

/// Parses a trace CSV. Errors name the file and the 1-based line.
pub fn read_trace_csv<R: Read>(reader: R, file: &str) -> Result<Vec<TraceRow>> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    let malformed = |row: usize, reason: String| LabError::MalformedTrace {
        file: file.to_string(),
        row,
        reason,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim_end() == CSV_MAGIC => {}
        _ => return Err(malformed(1, format!("missing '{CSV_MAGIC}' header"))),
    }
    let mut header_seen = false;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line.trim_end() != CSV_COLUMNS.join(",") {
                return Err(malformed(lineno, format!("expected columns {}", CSV_COLUMNS.join(","))));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CSV_COLUMNS.len() {
            return Err(malformed(
                lineno,
                format!("expected {} fields, found {}", CSV_COLUMNS.len(), fields.len()),
            ));
        }
        let num = |idx: usize| -> Result<f64> {
            let v: f64 = fields[idx].trim().parse().map_err(|_| {
                malformed(lineno, format!("{} is not a number: '{}'", CSV_COLUMNS[idx], fields[idx]))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(malformed(lineno, format!("{} is not finite", CSV_COLUMNS[idx])))
            }
        };
        let int = |idx: usize| -> Result<u64> {
            fields[idx].trim().parse().map_err(|_| {
                malformed(lineno, format!("{} is not an integer: '{}'", CSV_COLUMNS[idx], fields[idx]))
            })
        };
        let srtt = if fields[3].trim().is_empty() {
            None
        } else {
            Some(num(3)?)
        };
        rows.push(TraceRow {
            time_ms: num(0)?,
            flow_id: u32::try_from(int(1)?)
                .map_err(|_| malformed(lineno, "flow_id out of range".into()))?,
            cwnd_seg: num(2)?,
            srtt_ms: srtt,
            goodput_mbps: num(4)?,
            queue_seg: int(5)?,
        });
    }
    if !header_seen {
        return Err(malformed(text.lines().count().max(1), "no column header".into()));
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>> {
    let f = std::fs::File::open(path)?;
    read_trace_csv(io::BufReader::new(f), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_magic_and_bad_rows() {
        let err = read_trace_csv("time_ms\n".as_bytes(), "t.csv").unwrap_err();
        assert!(matches!(err, LabError::MalformedTrace { row: 1, .. }));
        let text = format!("{CSV_MAGIC}\n# c\n{}\n1.0,0,10,40,1.0,3\n2.0,0,x,40,1.0,3\n", CSV_COLUMNS.join(","));
        match read_trace_csv(text.as_bytes(), "t.csv").unwrap_err() {
            LabError::MalformedTrace { file, row, reason } => {
                assert_eq!(file, "t.csv");
                assert_eq!(row, 5);
                assert!(reason.contains("cwnd_seg"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_srtt_reads_as_none() {
        let text = format!("{CSV_MAGIC}\n{}\n0.000,1,10.000,,0.000000,0\n", CSV_COLUMNS.join(","));
        let rows = read_trace_csv(text.as_bytes(), "t.csv").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].srtt_ms, None);
        assert_eq!(rows[0].flow_id, 1);
    }
}
