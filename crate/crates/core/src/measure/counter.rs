// SPDX-License-Identifier: Apache-2.0

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CounterKind {
    /// Counts what a transmit task hands to the NIC.
    ManualTx,
    /// Counts received packets.
    PktRx,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSnapshot {
    pub end: SimTime,
    pub packets: u64,
    pub bytes: u64,
}

impl IntervalSnapshot {
    fn secs(&self, start: SimTime) -> f64 {
        (self.end - start).as_secs_f64()
    }
}

/// Packet and byte totals with per-interval rates.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsCounter {
    kind: CounterKind,
    interval: SimTime,
    start: SimTime,
    next_boundary: SimTime,
    current: IntervalSnapshot,
    intervals: Vec<IntervalSnapshot>,
    packets: u64,
    bytes: u64,
    last_event: SimTime,
}

pub const DEFAULT_COUNTER_INTERVAL: SimTime = SimTime::from_ns(1_000_000_000);

impl StatsCounter {
    pub fn new(kind: CounterKind, start: SimTime) -> Self {
        Self::with_interval(kind, start, DEFAULT_COUNTER_INTERVAL)
    }

    pub fn with_interval(kind: CounterKind, start: SimTime, interval: SimTime) -> Self {
        assert!(interval > SimTime::ZERO, "interval must be positive");
        StatsCounter {
            kind,
            interval,
            start,
            next_boundary: start + interval,
            current: IntervalSnapshot {
                end: start + interval,
                packets: 0,
                bytes: 0,
            },
            intervals: Vec::new(),
            packets: 0,
            bytes: 0,
            last_event: start,
        }
    }

    pub fn kind(&self) -> CounterKind {
        self.kind
    }

    /// Counts one packet of `bytes` at `time`.
    pub fn record(&mut self, time: SimTime, bytes: usize) {
        self.roll_to(time);
        self.current.packets += 1;
        self.current.bytes += bytes as u64;
        self.packets += 1;
        self.bytes += bytes as u64;
        self.last_event = self.last_event.max(time);
    }

    fn roll_to(&mut self, time: SimTime) {
        while time >= self.next_boundary {
            self.intervals.push(self.current);
            self.next_boundary += self.interval;
            self.current = IntervalSnapshot {
                end: self.next_boundary,
                packets: 0,
                bytes: 0,
            };
        }
    }

    pub fn packets(&self) -> u64 {
        self.packets
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    /// Closes the counter at `end`. A trailing partial interval is kept
    /// with its actual length.
    pub fn finalize(mut self, end: SimTime) -> CounterSummary {
        let end = end.max(self.last_event);
        self.roll_to(end);
        if end > self.next_boundary - self.interval {
            self.current.end = end;
            self.intervals.push(self.current);
        }
        let mut prev = self.start;
        let mut mpps = Vec::with_capacity(self.intervals.len());
        let mut mbit = Vec::with_capacity(self.intervals.len());
        for s in &self.intervals {
            let secs = s.secs(prev);
            mpps.push(s.packets as f64 / secs / 1e6);
            mbit.push(s.bytes as f64 * 8.0 / secs / 1e6);
            prev = s.end;
        }
        let (mpps_mean, mpps_stddev) = mean_stddev(&mpps);
        let (mbit_mean, mbit_stddev) = mean_stddev(&mbit);
        CounterSummary {
            kind: self.kind,
            start: self.start,
            packets: self.packets,
            bytes: self.bytes,
            mpps_mean,
            mpps_stddev,
            mbit_mean,
            mbit_stddev,
            intervals: self.intervals,
        }
    }
}

fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterSummary {
    pub kind: CounterKind,
    pub start: SimTime,
    pub packets: u64,
    pub bytes: u64,
    pub mpps_mean: f64,
    pub mpps_stddev: f64,
    pub mbit_mean: f64,
    pub mbit_stddev: f64,
    pub intervals: Vec<IntervalSnapshot>,
}

impl CounterSummary {
    /// Writes `interval_end_s,packets,bytes,mpps,mbit` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interval_end_s", "packets", "bytes", "mpps", "mbit"])?;
        for (s, (mpps, mbit)) in self.intervals.iter().zip(self.rates()) {
            w.write_record([
                format!("{:.9}", s.end.as_secs_f64()),
                s.packets.to_string(),
                s.bytes.to_string(),
                format!("{mpps:.6}"),
                format!("{mbit:.6}"),
            ])?;
        }
        w.flush()
    }

    pub fn write_plain<W: Write>(&self, mut out: W, label: &str) -> std::io::Result<()> {
        let verb = match self.kind {
            CounterKind::ManualTx => "Sent",
            CounterKind::PktRx => "Received",
        };
        for (s, (mpps, mbit)) in self.intervals.iter().zip(self.rates()) {
            writeln!(
                out,
                "[{label}] {verb} {} packets, current rate {mpps:.2} Mpps, {mbit:.2} MBit/s",
                s.packets
            )?;
        }
        writeln!(
            out,
            "[{label}] {verb} {} packets with {} bytes (incl. CRC), rate {:.2} (StdDev {:.2}) Mpps, {:.2} (StdDev {:.2}) MBit/s",
            self.packets, self.bytes, self.mpps_mean, self.mpps_stddev, self.mbit_mean, self.mbit_stddev
        )
    }

    fn rates(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let starts = std::iter::once(self.start).chain(self.intervals.iter().map(|s| s.end));
        self.intervals.iter().zip(starts).map(|(s, start)| {
            let secs = s.secs(start);
            (
                s.packets as f64 / secs / 1e6,
                s.bytes as f64 * 8.0 / secs / 1e6,
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate_has_zero_stddev() {
        let mut c = StatsCounter::new(CounterKind::PktRx, SimTime::ZERO);
        // 1 Mpps for 3 s
        for i in 0..3_000_000i64 {
            c.record(SimTime::from_ns(1000 * i), 64);
        }
        let s = c.finalize(SimTime::from_ns(3_000_000_000));
        assert_eq!(s.intervals.len(), 3);
        assert_eq!(s.packets, 3_000_000);
        assert!((s.mpps_mean - 1.0).abs() < 1e-12);
        assert_eq!(s.mpps_stddev, 0.0);
        assert!((s.mbit_mean - 512.0).abs() < 1e-9);
    }

    #[test]
    fn varying_rate() {
        let mut c = StatsCounter::with_interval(
            CounterKind::ManualTx,
            SimTime::ZERO,
            SimTime::from_ns(1000),
        );
        c.record(SimTime::from_ns(10), 100);
        for _ in 0..3 {
            c.record(SimTime::from_ns(1500), 100);
        }
        let s = c.finalize(SimTime::from_ns(2000));
        assert_eq!(s.intervals.len(), 2);
        assert!((s.mpps_mean - 2.0).abs() < 1e-9);
        assert!((s.mpps_stddev - 2f64.sqrt()).abs() < 1e-9);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("interval_end_s,packets,bytes,mpps,mbit"));
        assert_eq!(lines.next(), Some("0.000001000,1,100,1.000000,800.000000"));
        assert_eq!(lines.next(), Some("0.000002000,3,300,3.000000,2400.000000"));
    }

    #[test]
    fn partial_last_interval() {
        let mut c =
            StatsCounter::with_interval(CounterKind::PktRx, SimTime::ZERO, SimTime::from_ns(1000));
        c.record(SimTime::from_ns(100), 60);
        c.record(SimTime::from_ns(1200), 60);
        let s = c.finalize(SimTime::from_ns(1500));
        assert_eq!(s.intervals.last().unwrap().end, SimTime::from_ns(1500));
        let mut out = Vec::new();
        s.write_plain(&mut out, "rx").unwrap();
        assert!(String::from_utf8(out)
            .unwrap()
            .contains("Received 2 packets with 120 bytes"));
    }
}
