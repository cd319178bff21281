// SPDX-License-Identifier: Apache-2.0

//! Parametric device under test: one FIFO forwarding queue with
//! deterministic service and a hold-off interrupt timer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{SimTime, TICKS_PER_SEC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DutError {
    #[error("no latency samples")]
    EmptySample,
    #[error("invalid device model: {0}")]
    InvalidModel(String),
    #[error("percentile {0} outside [0, 100]")]
    InvalidPercentile(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutModel {
    #[serde(default = "default_service_rate")]
    pub service_rate_pps: f64,
    /// Packets the device holds, including the one in service.
    #[serde(default = "default_buffer")]
    pub buffer_pkts: usize,
    /// Minimum spacing between interrupts; 0 disables moderation.
    #[serde(default)]
    pub interrupt_throttle_ns: f64,
    /// Packets handled per poll once an interrupt has fired.
    #[serde(default = "default_batch")]
    pub batch_per_interrupt: usize,
}

fn default_service_rate() -> f64 {
    1.9e6
}

fn default_buffer() -> usize {
    4096
}

fn default_batch() -> usize {
    64
}

impl Default for DutModel {
    fn default() -> Self {
        DutModel {
            service_rate_pps: default_service_rate(),
            buffer_pkts: default_buffer(),
            interrupt_throttle_ns: 0.0,
            batch_per_interrupt: default_batch(),
        }
    }
}

impl DutModel {
    pub fn validate(&self) -> Result<(), DutError> {
        if !(self.service_rate_pps > 0.0 && self.service_rate_pps.is_finite()) {
            return Err(DutError::InvalidModel(format!(
                "service_rate_pps {} must be positive",
                self.service_rate_pps
            )));
        }
        if self.buffer_pkts == 0 {
            return Err(DutError::InvalidModel(
                "buffer_pkts must be at least 1".into(),
            ));
        }
        if self.batch_per_interrupt == 0 {
            return Err(DutError::InvalidModel(
                "batch_per_interrupt must be at least 1".into(),
            ));
        }
        if !(self.interrupt_throttle_ns >= 0.0) {
            return Err(DutError::InvalidModel(
                "interrupt_throttle_ns is negative".into(),
            ));
        }
        Ok(())
    }

    pub fn service_time(&self) -> SimTime {
        SimTime::from_ticks((TICKS_PER_SEC as f64 / self.service_rate_pps).round() as i64)
    }

    /// Residence time with a full buffer.
    pub fn overload_latency_ns(&self) -> f64 {
        self.buffer_pkts as f64 * 1e9 / self.service_rate_pps
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DutStats {
    pub arrivals: u64,
    pub forwarded: u64,
    pub drops: u64,
    pub interrupts: u64,
    /// Idle arrivals that fell into the hold-off window.
    pub coalesced: u64,
    pub polls: u64,
}

/// Streaming queue; arrivals must be offered in time order.
#[derive(Clone, Debug)]
pub struct DutQueue {
    model: DutModel,
    service: SimTime,
    throttle: SimTime,
    /// Departure times of the packets in the system.
    in_system: VecDeque<SimTime>,
    last_interrupt: Option<SimTime>,
    busy_period_pkts: usize,
    last_arrival: SimTime,
    stats: DutStats,
}

impl DutQueue {
    pub fn new(model: DutModel) -> Result<Self, DutError> {
        model.validate()?;
        Ok(DutQueue {
            service: model.service_time(),
            throttle: SimTime::from_ns_f64(model.interrupt_throttle_ns),
            model,
            in_system: VecDeque::new(),
            last_interrupt: None,
            busy_period_pkts: 0,
            last_arrival: SimTime::from_ticks(i64::MIN),
            stats: DutStats::default(),
        })
    }

    pub fn model(&self) -> &DutModel {
        &self.model
    }

    pub fn stats(&self) -> DutStats {
        self.stats
    }

    pub fn occupancy(&self) -> usize {
        self.in_system.len()
    }

    /// Offers one arrival. Returns its departure time, or `None` if the
    /// buffer was full.
    pub fn offer(&mut self, arrival: SimTime) -> Option<SimTime> {
        debug_assert!(arrival >= self.last_arrival, "arrivals out of order");
        self.last_arrival = arrival;
        self.stats.arrivals += 1;
        while self.in_system.front().is_some_and(|d| *d <= arrival) {
            self.in_system.pop_front();
        }
        if self.in_system.is_empty() {
            self.close_busy_period();
            match self.last_interrupt {
                Some(last) if arrival - last < self.throttle => self.stats.coalesced += 1,
                _ => {
                    self.stats.interrupts += 1;
                    self.last_interrupt = Some(arrival);
                }
            }
        }
        if self.in_system.len() >= self.model.buffer_pkts {
            self.stats.drops += 1;
            return None;
        }
        let start = self.in_system.back().map_or(arrival, |d| (*d).max(arrival));
        let departure = start + self.service;
        self.in_system.push_back(departure);
        self.busy_period_pkts += 1;
        self.stats.forwarded += 1;
        Some(departure)
    }

    fn close_busy_period(&mut self) {
        if self.busy_period_pkts > 0 {
            self.stats.polls += self
                .busy_period_pkts
                .div_ceil(self.model.batch_per_interrupt) as u64;
            self.busy_period_pkts = 0;
        }
    }

    /// Flushes the open busy period into the statistics.
    pub fn finish(mut self) -> DutStats {
        self.close_busy_period();
        self.stats
    }
}

/// One forwarded packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Departure {
    pub seq_id: u64,
    pub arrival: SimTime,
    pub departure: SimTime,
}

impl Departure {
    pub fn residence(&self) -> SimTime {
        self.departure - self.arrival
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    pub departures: Vec<Departure>,
    pub drops: u64,
    pub interrupts: u64,
    pub stats: DutStats,
}

/// Runs `(arrival time, seq_id)` pairs through the device.
pub fn forward<I>(arrivals: I, model: &DutModel) -> Result<ForwardResult, DutError>
where
    I: IntoIterator<Item = (SimTime, u64)>,
{
    let mut queue = DutQueue::new(model.clone())?;
    let mut departures = Vec::new();
    for (t, seq_id) in arrivals {
        if let Some(d) = queue.offer(t) {
            departures.push(Departure {
                seq_id,
                arrival: t,
                departure: d,
            });
        }
    }
    let stats = queue.finish();
    Ok(ForwardResult {
        departures,
        drops: stats.drops,
        interrupts: stats.interrupts,
        stats,
    })
}

/// Nearest-rank percentiles of the residence times, in ns.
pub fn latency_percentiles(departures: &[Departure], ps: &[f64]) -> Result<Vec<f64>, DutError> {
    let mut lat: Vec<SimTime> = departures.iter().map(Departure::residence).collect();
    percentiles_of(&mut lat, ps)
}

pub(crate) fn percentiles_of(values: &mut [SimTime], ps: &[f64]) -> Result<Vec<f64>, DutError> {
    if values.is_empty() {
        return Err(DutError::EmptySample);
    }
    values.sort_unstable();
    ps.iter()
        .map(|p| {
            if !(0.0..=100.0).contains(p) {
                return Err(DutError::InvalidPercentile(*p));
            }
            let rank = ((p / 100.0) * values.len() as f64).ceil() as usize;
            Ok(values[rank.clamp(1, values.len()) - 1].as_ns_f64())
        })
        .collect()
}
