// SPDX-License-Identifier: Apache-2.0

//! Timestamping, latency probes, inter-arrival histograms, rate counters and
//! the per-packet cost estimator.

pub mod cost;
mod counter;
mod histogram;
mod latency;
mod timestamp;

pub use cost::{predict_throughput, CostModel, Cycles, Throughput, RANDOM_UDP_EXAMPLE};
pub use counter::{
    CounterKind, CounterSummary, IntervalSnapshot, StatsCounter, DEFAULT_COUNTER_INTERVAL,
};
pub use histogram::{record_interarrival, Histogram, DEFAULT_BIN_WIDTH_NS};
pub use latency::{
    fit_link, measure_latency, probe_buffer, ptp_udp_template, DutPath, LatencyProbe, LatencyRun,
    LatencySample, TrafficContext,
};
pub use timestamp::{
    should_timestamp, should_timestamp_versioned, PtpFilter, TimestampRegister, MIN_UDP_PTP_FRAME,
    PTP_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("histogram has no target value")]
    NoTarget,
    #[error("every probe was lost ({lost} timeouts)")]
    Timeout { lost: u64 },
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("cycles per packet must be positive, got {0}")]
    InvalidCycles(f64),
    #[error("probe packet does not match the timestamp filter")]
    NotTimestamped,
    #[error("invalid measurement setup: {0}")]
    Config(String),
}
