// SPDX-License-Identifier: Apache-2.0

//! Per-port timestamp clocks and pairwise synchronization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// NIC families with distinct timestamp clocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClockModel {
    /// No quantization at all.
    #[default]
    #[serde(rename = "ideal")]
    Ideal,
    /// 1 GbE controller: 64 ns timer plus a per-reset multiple of 8 ns.
    #[serde(rename = "82580")]
    I82580,
    /// 6.4 ns event resolution, timer incremented every 12.8 ns.
    #[serde(rename = "82599")]
    I82599,
    /// 6.4 ns event resolution and timer.
    #[serde(rename = "X540")]
    X540,
}

/// A quantized, possibly drifting port clock.
///
/// Reading at true time `t` yields
/// `floor_step(t + offset + drift * (t - epoch)) + phase_k + adjusted`.
/// Adjustments change the counter value, not the instants it ticks at.
#[derive(Clone, Debug, PartialEq)]
pub struct PortClock {
    /// Event sampling resolution; arrivals are latched on this grid.
    pub granularity: SimTime,
    /// Timer increment. Zero disables quantization.
    pub timer_step: SimTime,
    pub phase_k: SimTime,
    pub offset: SimTime,
    /// Sum of all values written through [`PortClock::adjust`].
    pub adjusted: SimTime,
    pub drift: f64,
    pub epoch: SimTime,
}

impl PortClock {
    pub fn ideal() -> Self {
        PortClock {
            granularity: SimTime::from_ticks(1),
            timer_step: SimTime::ZERO,
            phase_k: SimTime::ZERO,
            offset: SimTime::ZERO,
            adjusted: SimTime::ZERO,
            drift: 0.0,
            epoch: SimTime::ZERO,
        }
    }

    /// Clock of the given family. The 82580 per-reset phase starts at zero;
    /// see [`PortClock::with_reset_phase`].
    pub fn preset(model: ClockModel) -> Self {
        let (granularity, step) = match model {
            ClockModel::Ideal => return Self::ideal(),
            ClockModel::I82580 => (SimTime::from_ns(64), SimTime::from_ns(64)),
            ClockModel::I82599 => (SimTime::from_ticks(64_000), SimTime::from_ticks(128_000)),
            ClockModel::X540 => (SimTime::from_ticks(64_000), SimTime::from_ticks(64_000)),
        };
        PortClock {
            granularity,
            timer_step: step,
            ..Self::ideal()
        }
    }

    /// Sets the 82580-style constant `k * 8 ns` that varies between resets.
    pub fn with_reset_phase(mut self, k: u8) -> Self {
        self.phase_k = SimTime::from_ns(8 * i64::from(k % 8));
        self
    }

    pub fn with_offset(mut self, offset: SimTime) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        assert!(drift.abs() < 1e-3, "drift {drift} out of range");
        self.drift = drift;
        self
    }

    fn drift_since_epoch(&self, true_time: SimTime) -> SimTime {
        if self.drift == 0.0 {
            return SimTime::ZERO;
        }
        SimTime::from_ticks((self.drift * (true_time - self.epoch).ticks() as f64).round() as i64)
    }

    /// Deviation of the (unquantized) clock from true time, phase included.
    pub fn effective_offset(&self, true_time: SimTime) -> SimTime {
        self.offset + self.drift_since_epoch(true_time) + self.phase_k + self.adjusted
    }

    pub fn read(&self, true_time: SimTime) -> SimTime {
        let local = true_time + self.offset + self.drift_since_epoch(true_time);
        local.floor_to(self.timer_step) + self.phase_k + self.adjusted
    }

    /// Timestamp of an event at `true_time`: the event is latched at the next
    /// edge of the sampling grid (shifted by `grid_phase`), then the timer is
    /// read at that edge.
    pub fn timestamp(&self, true_time: SimTime, grid_phase: SimTime) -> SimTime {
        self.read(true_time.ceil_to(self.granularity, grid_phase))
    }

    /// Atomic read-modify-write of the counter at `at`. Accumulated drift is
    /// folded into the offset and the epoch restarts.
    pub fn adjust(&mut self, at: SimTime, delta: SimTime) {
        self.adjusted += delta;
        self.offset += self.drift_since_epoch(at);
        self.epoch = at;
    }

    /// Quantum used by synchronization error bounds.
    pub fn step(&self) -> SimTime {
        if self.timer_step > SimTime::ZERO {
            self.timer_step
        } else {
            self.granularity
        }
    }
}

/// Number of paired measurements per synchronization.
pub const SYNC_ROUNDS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncConfig {
    /// Probability that one paired measurement is disturbed.
    pub outlier_rate: f64,
    /// Disturbed measurements receive uniform error in +-bound.
    pub outlier_bound: SimTime,
    /// Constant latency of one register read over the bus. A multiple of
    /// the timer step makes equal clocks estimate a zero offset.
    pub read_gap: SimTime,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            outlier_rate: 0.05,
            outlier_bound: SimTime::from_ns(10_000),
            read_gap: SimTime::from_ns(512),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncReport {
    /// Offset change applied to the second clock.
    pub adjustment: SimTime,
    pub estimates: [SimTime; SYNC_ROUNDS],
    /// True time when the adjustment was applied.
    pub finished_at: SimTime,
}

/// Synchronizes `b` to `a`.
///
/// Each round reads A then B, then B then A; averaging the two differences
/// cancels the constant read latency. The median over the rounds absorbs
/// disturbed measurements and is subtracted from `b` in one step.
pub fn sync_clocks<R: Rng + ?Sized>(
    a: &PortClock,
    b: &mut PortClock,
    start: SimTime,
    config: &SyncConfig,
    rng: &mut R,
) -> SyncReport {
    let gap = config.read_gap;
    let mut estimates = [SimTime::ZERO; SYNC_ROUNDS];
    let mut t = start;
    for est in estimates.iter_mut() {
        let a1 = a.read(t);
        let b1 = b.read(t + gap);
        let b2 = b.read(t + gap * 2);
        let a2 = a.read(t + gap * 3);
        t += gap * 4;
        let sum = (b1 - a1) + (b2 - a2);
        let mut e = SimTime::from_ticks(sum.ticks().div_euclid(2));
        if rng.gen_bool(config.outlier_rate.clamp(0.0, 1.0)) {
            let bound = config.outlier_bound.ticks();
            e += SimTime::from_ticks(rng.gen_range(-bound..=bound));
        }
        *est = e;
    }
    let mut sorted = estimates;
    sorted.sort();
    let median = sorted[SYNC_ROUNDS / 2];
    b.adjust(t, -median);
    SyncReport {
        adjustment: -median,
        estimates,
        finished_at: t,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn no_outliers() -> SyncConfig {
        SyncConfig {
            outlier_rate: 0.0,
            ..SyncConfig::default()
        }
    }

    #[test]
    fn reads() {
        let c = PortClock {
            timer_step: SimTime::from_ticks(64_000),
            ..PortClock::ideal()
        };
        assert_eq!(
            c.read(SimTime::from_ticks(128_000)),
            SimTime::from_ticks(128_000)
        );

        let c = PortClock::preset(ClockModel::I82580).with_reset_phase(3);
        assert_eq!(c.read(SimTime::from_ns(130)), SimTime::from_ns(152));

        let c = PortClock::ideal().with_drift(35e-6);
        assert_eq!(
            c.read(SimTime::from_ns(1_000_000_000)),
            SimTime::from_ns(1_000_035_000)
        );
    }

    #[test]
    fn reads_of_82580_have_fixed_form() {
        let c = PortClock::preset(ClockModel::I82580)
            .with_reset_phase(5)
            .with_offset(SimTime::from_ticks(123_457));
        for t in (0..10_000).map(|i| SimTime::from_ticks(i * 77_777)) {
            let r = c.read(t).ticks() - 40 * 10_000;
            assert_eq!(r % (64 * 10_000), 0);
        }
    }

    #[test]
    fn timestamps_latch_on_grid() {
        let c = PortClock::preset(ClockModel::X540);
        let ts = c.timestamp(SimTime::from_ticks(1), SimTime::ZERO);
        assert_eq!(ts, SimTime::from_ticks(64_000));
        let ts = c.timestamp(SimTime::from_ticks(1), SimTime::from_ns(2));
        assert_eq!(ts, SimTime::ZERO);
    }

    #[test]
    fn sync_removes_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = PortClock::preset(ClockModel::X540);
        let mut b = PortClock::preset(ClockModel::X540).with_offset(SimTime::from_ns(1000));
        let report = sync_clocks(
            &a,
            &mut b,
            SimTime::from_ns(5_000),
            &no_outliers(),
            &mut rng,
        );
        let step = a.step().ticks();
        assert!((report.adjustment.ticks() + 1000 * 10_000).abs() <= step);
        let t = report.finished_at;
        assert!(
            (b.effective_offset(t) - a.effective_offset(t))
                .ticks()
                .abs()
                <= step
        );
    }

    #[test]
    fn adjust_keeps_tick_instants() {
        let mut c = PortClock::preset(ClockModel::X540).with_offset(SimTime::from_ticks(12_345));
        let before: Vec<SimTime> = (0..100)
            .map(|i| c.read(SimTime::from_ticks(i * 3_001)))
            .collect();
        c.adjust(SimTime::ZERO, SimTime::from_ticks(-7_777));
        for (i, b) in before.iter().enumerate() {
            let now = c.read(SimTime::from_ticks(i as i64 * 3_001));
            assert_eq!(now - *b, SimTime::from_ticks(-7_777));
        }
    }

    #[test]
    fn sync_is_idempotent_on_synchronous_clocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = PortClock::preset(ClockModel::I82599);
        let mut b = a.clone();
        let r = sync_clocks(
            &a,
            &mut b,
            SimTime::from_ticks(333),
            &no_outliers(),
            &mut rng,
        );
        assert!(r.adjustment.ticks().abs() <= a.step().ticks());
    }

    #[test]
    fn equal_clocks_estimate_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [ClockModel::I82580, ClockModel::I82599, ClockModel::X540] {
            let a = PortClock::preset(model);
            for start in [0, 1, 33_333, 127_999] {
                let mut b = a.clone();
                let r = sync_clocks(
                    &a,
                    &mut b,
                    SimTime::from_ticks(start),
                    &no_outliers(),
                    &mut rng,
                );
                assert_eq!(r.adjustment, SimTime::ZERO, "{model:?} at {start}");
            }
        }
    }

    #[test]
    fn adjust_folds_drift() {
        let mut c = PortClock::ideal().with_drift(1e-4);
        c.adjust(SimTime::from_ns(1_000_000), SimTime::ZERO);
        assert_eq!(c.offset, SimTime::from_ns(100));
        assert_eq!(c.epoch, SimTime::from_ns(1_000_000));
        assert_eq!(
            c.read(SimTime::from_ns(1_000_000)),
            SimTime::from_ns(1_000_100)
        );
    }
}
