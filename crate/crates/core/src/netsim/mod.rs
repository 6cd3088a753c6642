//! Deterministic discrete-event dumbbell simulator.
//!
//! Senders feed a single droptail bottleneck whose rate follows a schedule.
//! After serialization, packets propagate one way to their receivers, which
//! acknowledge over an uncongested reverse path of the same delay. The clock
//! ticks in microseconds and simultaneous events run in insertion order, so
//! a scenario and seed fully determine the output.

use std::time::Duration;

use crate::time::SimTime;

pub mod engine;
pub mod link;
pub mod trace;
pub mod transport;

pub use engine::{run, EventKind, SimEvent};
pub use link::{enqueue, service_time, Bottleneck, EnqueueOutcome, LinkSpec, QueueState};
pub use trace::{
    read_trace_csv, read_trace_file, DropCause, DropRecord, FlowAudit, FlowTrace, Sample, TraceRow,
    TraceSet, CSV_COLUMNS, CSV_MAGIC,
};
pub use transport::{Ack, Packet, Receiver, Sender, SenderStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    /// Always has data.
    Greedy,
    /// Constant-bit-rate application.
    AppLimited { rate_bps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub start_at: SimTime,
    /// `None`: produce data until the horizon.
    pub duration: Option<Duration>,
}

impl SourceSpec {
    pub fn greedy(start_at: SimTime) -> Self {
        SourceSpec {
            kind: SourceKind::Greedy,
            start_at,
            duration: None,
        }
    }
}
