// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::time::SimTime;
use crate::wireclock::serialization_time;

pub const DEFAULT_BIN_WIDTH_NS: i64 = 64;

/// Binned distribution of durations. Raw values are kept as well so window
/// fractions and medians are exact rather than bin-rounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: SimTime,
    pub target: Option<SimTime>,
    counts: BTreeMap<i64, u64>,
    values: BTreeMap<SimTime, u64>,
    total: u64,
    micro_bursts: u64,
}

impl Default for Histogram {
    fn default() -> Self {
        Self::new(SimTime::from_ns(DEFAULT_BIN_WIDTH_NS))
    }
}

impl Histogram {
    pub fn new(bin_width: SimTime) -> Self {
        assert!(bin_width > SimTime::ZERO, "bin width must be positive");
        Histogram {
            bin_width,
            target: None,
            counts: BTreeMap::new(),
            values: BTreeMap::new(),
            total: 0,
            micro_bursts: 0,
        }
    }

    pub fn with_target(mut self, target: SimTime) -> Self {
        self.target = Some(target);
        self
    }

    pub fn add(&mut self, value: SimTime) {
        let bin = value.ticks().div_euclid(self.bin_width.ticks());
        *self.counts.entry(bin).or_default() += 1;
        *self.values.entry(value).or_default() += 1;
        self.total += 1;
    }

    /// Adds one inter-arrival delta; deltas up to `burst` count as
    /// micro-bursts.
    pub fn add_interarrival(&mut self, delta: SimTime, burst: SimTime) {
        self.add(delta);
        if delta <= burst {
            self.micro_bursts += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `(bin start, count)` in ascending order.
    pub fn bins(&self) -> impl Iterator<Item = (SimTime, u64)> + '_ {
        self.counts.iter().map(|(b, c)| (self.bin_width * *b, *c))
    }

    /// Distinct raw values with their multiplicity.
    pub fn values(&self) -> impl Iterator<Item = (SimTime, u64)> + '_ {
        self.values.iter().map(|(v, c)| (*v, *c))
    }

    pub fn micro_bursts(&self) -> u64 {
        self.micro_bursts
    }

    pub fn micro_burst_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.micro_bursts as f64 / self.total as f64
        }
    }

    /// Fraction of samples within `window_ns` of the target, bounds included.
    pub fn percent_within(&self, window_ns: f64) -> Result<f64, MeasureError> {
        let target = self.target.ok_or(MeasureError::NoTarget)?;
        if self.total == 0 {
            return Ok(0.0);
        }
        let w = SimTime::from_ns_f64(window_ns.abs());
        let inside: u64 = self
            .values
            .range(target - w..=target + w)
            .map(|(_, c)| *c)
            .sum();
        Ok(inside as f64 / self.total as f64)
    }

    /// Nearest-rank quantile of the raw values, `q` in [0, 1].
    pub fn quantile(&self, q: f64) -> Option<SimTime> {
        if self.total == 0 {
            return None;
        }
        let rank = ((q.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (v, c) in &self.values {
            seen += c;
            if seen >= rank {
                return Some(*v);
            }
        }
        self.values.keys().next_back().copied()
    }

    pub fn median(&self) -> Option<SimTime> {
        self.quantile(0.5)
    }

    pub fn min(&self) -> Option<SimTime> {
        self.values.keys().next().copied()
    }

    pub fn max(&self) -> Option<SimTime> {
        self.values.keys().next_back().copied()
    }

    pub fn mean_ns(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let sum: f64 = self
            .values
            .iter()
            .map(|(v, c)| v.as_ns_f64() * *c as f64)
            .sum();
        Some(sum / self.total as f64)
    }

    /// Adds the samples of `other`; bin widths must agree.
    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.bin_width, other.bin_width, "bin widths differ");
        for (v, c) in &other.values {
            let bin = v.ticks().div_euclid(self.bin_width.ticks());
            *self.counts.entry(bin).or_default() += c;
            *self.values.entry(*v).or_default() += c;
        }
        self.total += other.total;
        self.micro_bursts += other.micro_bursts;
    }

    /// Writes `bin_start_ns,count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start_ns", "count"])?;
        for (start, count) in self.bins() {
            w.write_record([start.to_string(), count.to_string()])?;
        }
        w.flush()
    }

    pub fn write_plain<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (start, count) in self.bins() {
            writeln!(out, "{start} ns: {count}")?;
        }
        writeln!(out, "total: {}", self.total)
    }
}

/// Bins the deltas of successive arrival times. A delta no longer than one
/// frame's serialization time is a micro-burst.
pub fn record_interarrival<I>(
    arrivals: I,
    hist: &mut Histogram,
    frame_wire_len: usize,
    rate_bps: u64,
) where
    I: IntoIterator<Item = SimTime>,
{
    let burst = serialization_time(frame_wire_len, rate_bps);
    let mut prev: Option<SimTime> = None;
    for t in arrivals {
        if let Some(p) = prev {
            let d = t - p;
            debug_assert!(d >= SimTime::ZERO, "arrivals out of order");
            hist.add_interarrival(d, burst);
        }
        prev = Some(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wireclock::{GBE_1, GBE_10};

    #[test]
    fn back_to_back_is_all_bursts() {
        let mut h = Histogram::default();
        let arrivals = (0..1000).map(|i| SimTime::from_ns(672 * i));
        record_interarrival(arrivals, &mut h, 84, GBE_1);
        assert_eq!(h.total(), 999);
        assert_eq!(h.micro_burst_fraction(), 1.0);
        assert_eq!(
            h.bins().collect::<Vec<_>>(),
            vec![(SimTime::from_ns(640), 999)]
        );
    }

    #[test]
    fn exact_cbr_is_within_every_window() {
        let mut h = Histogram::default().with_target(SimTime::from_ns(2000));
        record_interarrival(
            (0..100).map(|i| SimTime::from_ns(2000 * i)),
            &mut h,
            84,
            GBE_10,
        );
        for w in [0.0, 64.0, 128.0, 256.0, 512.0] {
            assert_eq!(h.percent_within(w).unwrap(), 1.0);
        }
        assert_eq!(h.micro_bursts(), 0);
    }

    #[test]
    fn constructed_windows() {
        let mut h = Histogram::default().with_target(SimTime::from_ns(1000));
        for _ in 0..50 {
            h.add(SimTime::from_ns(1000));
            h.add(SimTime::from_ns(1100));
        }
        assert_eq!(h.percent_within(64.0).unwrap(), 0.5);
        assert_eq!(h.percent_within(128.0).unwrap(), 1.0);
        assert_eq!(
            Histogram::default().percent_within(1.0),
            Err(MeasureError::NoTarget)
        );
    }

    #[test]
    fn bins_are_half_open() {
        let mut h = Histogram::default();
        h.add(SimTime::from_ns(63));
        h.add(SimTime::from_ns(64));
        h.add(SimTime::from_ticks(639_999));
        let bins: Vec<_> = h.bins().collect();
        assert_eq!(bins, vec![(SimTime::ZERO, 2), (SimTime::from_ns(64), 1)]);
    }

    #[test]
    fn quantiles_and_merge() {
        let mut a = Histogram::default();
        for v in [1, 2, 3, 4] {
            a.add(SimTime::from_ns(v));
        }
        assert_eq!(a.median(), Some(SimTime::from_ns(2)));
        assert_eq!(a.quantile(1.0), Some(SimTime::from_ns(4)));
        let mut b = Histogram::default();
        b.add(SimTime::from_ns(100));
        a.merge(&b);
        assert_eq!(a.total(), 5);
        assert_eq!(a.max(), Some(SimTime::from_ns(100)));
        assert_eq!(a.mean_ns(), Some(22.0));
    }

    #[test]
    fn csv_schema() {
        let mut h = Histogram::default();
        h.add(SimTime::from_ns(10));
        h.add(SimTime::from_ns(700));
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "bin_start_ns,count\n0,1\n640,1\n"
        );
    }
}
