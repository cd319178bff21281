// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::RunOutput;
use super::pcap::PcapWriter;
use super::RuntimeError;
use crate::dutsim::DutStats;
use crate::measure::{CounterSummary, Histogram, LatencySample};
use crate::ratectl::GapStats;

/// Windows reported for inter-arrival histograms with a target, in ns.
pub const HISTOGRAM_WINDOWS_NS: [f64; 4] = [64.0, 128.0, 256.0, 512.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub seed: u64,
    pub end_time_ns: f64,
    pub devices: Vec<DeviceReport>,
    pub tasks: Vec<TaskReport>,
}

impl RunReport {
    pub fn task(&self, id: &str) -> Option<&TaskResult> {
        self.tasks.iter().find(|t| t.id == id).map(|t| &t.result)
    }

    pub fn device(&self, id: &str) -> Option<&DeviceReport> {
        self.devices.iter().find(|d| d.id == id)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub id: String,
    pub tx_frames: u64,
    pub tx_bytes: u64,
    /// Frames that passed the FCS check.
    pub rx_delivered: u64,
    pub rx_bytes: u64,
    /// Frames dropped for a bad FCS.
    pub rx_errors: u64,
    /// Delivered frames no task consumed.
    pub rx_unclaimed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub id: String,
    #[serde(flatten)]
    pub result: TaskResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskResult {
    Generator {
        payload_packets: u64,
        filler_packets: u64,
        payload_bytes: u64,
        first_departure_ns: Option<f64>,
        last_departure_ns: Option<f64>,
        /// Payload frames per second between the first and last departure.
        achieved_rate_pps: Option<f64>,
        gap: Option<GapStats>,
        non_linear: bool,
        mpps_mean: f64,
        mbit_mean: f64,
    },
    Counter {
        packets: u64,
        bytes: u64,
        mpps_mean: f64,
        mpps_stddev: f64,
        mbit_mean: f64,
        mbit_stddev: f64,
        intervals: usize,
        histogram: Option<HistogramReport>,
    },
    Latency {
        samples: u64,
        timeouts: u64,
        register_losses: u64,
        min_ns: Option<f64>,
        p25_ns: Option<f64>,
        median_ns: Option<f64>,
        p75_ns: Option<f64>,
        max_ns: Option<f64>,
        mean_ns: Option<f64>,
    },
    Dut {
        stats: DutStats,
        residence_p50_ns: Option<f64>,
        residence_p99_ns: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub total: u64,
    pub target_ns: Option<f64>,
    pub median_ns: Option<f64>,
    pub micro_burst_fraction: f64,
    /// Fraction of samples within each window of the target, keyed by the
    /// window in ns.
    pub within: BTreeMap<String, f64>,
}

impl HistogramReport {
    pub fn from_histogram(h: &Histogram) -> Self {
        let within = match h.target {
            Some(_) => HISTOGRAM_WINDOWS_NS
                .iter()
                .map(|w| (format!("{w}"), h.percent_within(*w).expect("target is set")))
                .collect(),
            None => BTreeMap::new(),
        };
        HistogramReport {
            total: h.total(),
            target_ns: h.target.map(|t| t.as_ns_f64()),
            median_ns: h.median().map(|m| m.as_ns_f64()),
            micro_burst_fraction: h.micro_burst_fraction(),
            within,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    Plain,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, RuntimeError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_latency_csv<W: Write>(samples: &[LatencySample], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seq_id", "tx_ts_ns", "rx_ts_ns", "latency_ns"])?;
    for s in samples {
        w.write_record([
            s.seq_id.to_string(),
            s.tx_ts.to_string(),
            s.rx_ts.to_string(),
            s.latency.to_string(),
        ])?;
    }
    w.flush()
}

fn write_latency_plain<W: Write>(samples: &[LatencySample], mut out: W) -> std::io::Result<()> {
    for s in samples {
        writeln!(out, "{} {} ns", s.seq_id, s.latency)?;
    }
    Ok(())
}

fn write_counter(
    summary: &CounterSummary,
    id: &str,
    format: OutputFormat,
    dir: &Path,
) -> Result<(), RuntimeError> {
    match format {
        OutputFormat::Csv => summary.write_csv(create(dir, &format!("{id}.csv"))?)?,
        OutputFormat::Plain => summary.write_plain(create(dir, &format!("{id}.txt"))?, id)?,
    }
    Ok(())
}

/// Writes `report.json` plus one file per counter, histogram, latency task
/// and captured device into `dir`.
pub fn write_outputs(
    out: &RunOutput,
    dir: &Path,
    format: OutputFormat,
    with_fcs: bool,
) -> Result<(), RuntimeError> {
    std::fs::create_dir_all(dir)?;
    let mut f = create(dir, "report.json")?;
    serde_json::to_writer_pretty(&mut f, &out.report)
        .map_err(|e| RuntimeError::Io(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;

    let a = &out.artifacts;
    for (id, summary) in &a.counters {
        write_counter(summary, id, format, dir)?;
    }
    for (id, hist) in &a.histograms {
        match format {
            OutputFormat::Csv => hist.write_csv(create(dir, &format!("{id}.hist.csv"))?)?,
            OutputFormat::Plain => hist.write_plain(create(dir, &format!("{id}.hist.txt"))?)?,
        }
    }
    for (id, samples) in &a.latency {
        match format {
            OutputFormat::Csv => {
                write_latency_csv(samples, create(dir, &format!("{id}.latency.csv"))?)?
            }
            OutputFormat::Plain => {
                write_latency_plain(samples, create(dir, &format!("{id}.latency.txt"))?)?
            }
        }
    }
    for (dev, frames) in &a.captures {
        let mut w = PcapWriter::create(&dir.join(format!("{dev}.pcap")), with_fcs)?;
        for (t, frame) in frames {
            w.write(*t, frame)?;
        }
        w.finish()?;
    }
    Ok(())
}
