// SPDX-License-Identifier: Apache-2.0

//! Simulation time.
//!
//! All simulated instants and spans are integer ticks of 0.1 ps. At the
//! supported line rates one byte takes 0.8 ns (10 GbE), 8 ns (1 GbE) or
//! 0.2 ns (40 GbE), and the NIC clocks tick in multiples of 6.4 ns, so every
//! quantity the wire model produces is an exact tick count.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub const TICKS_PER_NS: i64 = 10_000;
pub const TICKS_PER_SEC: i64 = 1_000_000_000 * TICKS_PER_NS;

/// A point or span on the simulation time line, in 0.1 ps ticks.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(i64::MAX);

    pub const fn from_ticks(ticks: i64) -> Self {
        SimTime(ticks)
    }

    pub const fn from_ns(ns: i64) -> Self {
        SimTime(ns * TICKS_PER_NS)
    }

    /// Rounds to the nearest tick.
    pub fn from_ns_f64(ns: f64) -> Self {
        SimTime((ns * TICKS_PER_NS as f64).round() as i64)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * TICKS_PER_SEC as f64).round() as i64)
    }

    pub const fn ticks(self) -> i64 {
        self.0
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_NS as f64
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SEC as f64
    }

    /// Whole nanoseconds, rounded towards negative infinity.
    pub fn floor_ns(self) -> i64 {
        self.0.div_euclid(TICKS_PER_NS)
    }

    pub fn abs(self) -> Self {
        SimTime(self.0.abs())
    }

    /// Largest multiple of `step` not above `self`. A zero step is the identity.
    pub fn floor_to(self, step: SimTime) -> Self {
        if step.0 <= 0 {
            return self;
        }
        SimTime(self.0.div_euclid(step.0) * step.0)
    }

    /// Smallest value of the form `phase + n * step` that is not below `self`.
    pub fn ceil_to(self, step: SimTime, phase: SimTime) -> Self {
        if step.0 <= 0 {
            return self;
        }
        let rel = self.0 - phase.0;
        let n = rel.div_euclid(step.0) + i64::from(rel.rem_euclid(step.0) != 0);
        SimTime(phase.0 + n * step.0)
    }
}

impl fmt::Display for SimTime {
    /// Nanoseconds with trailing zeros of the sub-ns part removed.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / TICKS_PER_NS as u64;
        let frac = abs % TICKS_PER_NS as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let digits = format!("{frac:04}");
            write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl SubAssign for SimTime {
    fn sub_assign(&mut self, rhs: SimTime) {
        self.0 -= rhs.0;
    }
}

impl Neg for SimTime {
    type Output = SimTime;
    fn neg(self) -> SimTime {
        SimTime(-self.0)
    }
}

impl Mul<i64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: i64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl Sum for SimTime {
    fn sum<I: Iterator<Item = SimTime>>(iter: I) -> SimTime {
        SimTime(iter.map(|t| t.0).sum())
    }
}
