// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RateError;
use crate::time::{SimTime, TICKS_PER_SEC};
use crate::wireclock::{line_rate_pps, serialization_time};

/// NIC transmit-queue rate limiter producing constant bit-rate traffic.
///
/// Departures oscillate around the ideal grid: each one is displaced by a
/// uniform amount in `[0, amplitude]`, so consecutive inter-departure times
/// stay within `period +- amplitude` and the long-run rate equals the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwCbrModel {
    pub target_rate_pps: f64,
    #[serde(default = "default_amplitude")]
    pub oscillation_amplitude_ns: f64,
    /// Above this rate the NICs show non-linear behaviour; schedules are
    /// still produced but flagged.
    #[serde(default = "default_threshold")]
    pub degrade_threshold_pps: f64,
}

fn default_amplitude() -> f64 {
    256.0
}

fn default_threshold() -> f64 {
    9e6
}

impl HwCbrModel {
    pub fn new(target_rate_pps: f64) -> Self {
        HwCbrModel {
            target_rate_pps,
            oscillation_amplitude_ns: default_amplitude(),
            degrade_threshold_pps: default_threshold(),
        }
    }

    pub fn with_amplitude_ns(mut self, amplitude: f64) -> Self {
        self.oscillation_amplitude_ns = amplitude;
        self
    }

    pub fn non_linear(&self) -> bool {
        self.target_rate_pps > self.degrade_threshold_pps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HwCbrSchedule {
    pub departures: Vec<SimTime>,
    /// Target rate lies in the non-linear regime of the hardware.
    pub non_linear: bool,
}

/// Streaming form of [`hw_cbr_schedule`].
#[derive(Clone, Debug)]
pub struct HwCbrScheduler {
    period_ticks: f64,
    amplitude: i64,
    min_gap: SimTime,
    start: SimTime,
    index: u64,
    last: Option<SimTime>,
    non_linear: bool,
}

impl HwCbrScheduler {
    pub fn new(
        model: &HwCbrModel,
        frame_wire_len: usize,
        rate_bps: u64,
        start: SimTime,
    ) -> Result<Self, RateError> {
        let line = line_rate_pps(
            frame_wire_len - crate::wireclock::link::WIRE_OVERHEAD,
            rate_bps,
        );
        if !(model.target_rate_pps > 0.0) {
            return Err(RateError::InvalidPattern(format!(
                "target rate {} must be positive",
                model.target_rate_pps
            )));
        }
        if model.target_rate_pps > line * (1.0 + 1e-12) {
            return Err(RateError::RateAboveLineRate {
                target_pps: model.target_rate_pps,
                line_rate_pps: line,
            });
        }
        if !(model.oscillation_amplitude_ns >= 0.0) {
            return Err(RateError::InvalidPattern(
                "negative oscillation amplitude".into(),
            ));
        }
        Ok(HwCbrScheduler {
            period_ticks: TICKS_PER_SEC as f64 / model.target_rate_pps,
            amplitude: SimTime::from_ns_f64(model.oscillation_amplitude_ns).ticks(),
            min_gap: serialization_time(frame_wire_len, rate_bps),
            start,
            index: 0,
            last: None,
            non_linear: model.non_linear(),
        })
    }

    pub fn non_linear(&self) -> bool {
        self.non_linear
    }

    pub fn next_departure<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SimTime {
        let ideal = self.start
            + SimTime::from_ticks((self.index as f64 * self.period_ticks).round() as i64);
        let jitter = if self.amplitude > 0 {
            SimTime::from_ticks(rng.gen_range(0..=self.amplitude))
        } else {
            SimTime::ZERO
        };
        let mut t = ideal + jitter;
        if let Some(prev) = self.last {
            t = t.max(prev + self.min_gap);
        }
        self.last = Some(t);
        self.index += 1;
        t
    }
}

/// Departure times of `n` frames from a hardware rate-limited queue.
pub fn hw_cbr_schedule<R: Rng + ?Sized>(
    model: &HwCbrModel,
    n: usize,
    frame_wire_len: usize,
    rate_bps: u64,
    rng: &mut R,
) -> Result<HwCbrSchedule, RateError> {
    if n == 0 {
        return Err(RateError::InvalidPattern(
            "schedule needs at least one frame".into(),
        ));
    }
    let mut sched = HwCbrScheduler::new(model, frame_wire_len, rate_bps, SimTime::ZERO)?;
    let departures = (0..n).map(|_| sched.next_departure(rng)).collect();
    Ok(HwCbrSchedule {
        departures,
        non_linear: sched.non_linear(),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::wireclock::{GBE_1, GBE_10};

    #[test]
    fn zero_amplitude_is_exact_cbr() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = HwCbrModel::new(500e3).with_amplitude_ns(0.0);
        let s = hw_cbr_schedule(&model, 1000, 84, GBE_1, &mut rng).unwrap();
        assert!(s
            .departures
            .windows(2)
            .all(|w| w[1] - w[0] == SimTime::from_ns(2000)));
        assert!(!s.non_linear);
    }

    #[test]
    fn envelope_and_no_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = HwCbrModel::new(1e6);
        let s = hw_cbr_schedule(&model, 100_000, 84, GBE_1, &mut rng).unwrap();
        let ser = serialization_time(84, GBE_1);
        for w in s.departures.windows(2) {
            let d = w[1] - w[0];
            assert!(d >= ser);
            assert!((d - SimTime::from_ns(1000)).abs() <= SimTime::from_ns(256));
        }
    }

    #[test]
    fn rate_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let too_fast = HwCbrModel::new(15e6);
        assert!(matches!(
            hw_cbr_schedule(&too_fast, 10, 84, GBE_10, &mut rng),
            Err(RateError::RateAboveLineRate { .. })
        ));
        let flagged = HwCbrModel::new(10e6);
        let s = hw_cbr_schedule(&flagged, 10, 84, GBE_10, &mut rng).unwrap();
        assert!(s.non_linear);
        assert_eq!(s.departures.len(), 10);
        assert!(hw_cbr_schedule(&flagged, 0, 84, GBE_10, &mut rng).is_err());
    }
}
