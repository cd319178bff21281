// SPDX-License-Identifier: Apache-2.0

//! CPU cycles per packet of common generator operations, and the resulting
//! throughput of one core.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MeasureError;

/// Mean and standard deviation in cycles per packet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cycles {
    pub mean: f64,
    pub sigma: f64,
}

impl Cycles {
    pub const fn new(mean: f64, sigma: f64) -> Self {
        Cycles { mean, sigma }
    }
}

/// Composite measured as a whole: transmission, modification, eight random
/// fields and IP checksum offloading in one script. Its total is not the sum
/// of the individual rows (those add up to 233.8).
pub const RANDOM_UDP_EXAMPLE: &str = "random-udp-example";

const TABLE: &[(&str, f64, f64)] = &[
    ("transmission", 76.0, 0.8),
    ("modification", 9.1, 1.2),
    ("modification-two-cachelines", 15.0, 1.3),
    ("ip-offload", 15.2, 1.2),
    ("udp-offload", 33.1, 3.5),
    ("tcp-offload", 34.0, 3.3),
    ("random-1", 32.3, 0.5),
    ("random-2", 39.8, 1.0),
    ("random-4", 66.0, 0.9),
    ("random-8", 133.5, 0.7),
    ("counter-1", 27.1, 1.4),
    ("counter-2", 33.1, 1.3),
    ("counter-4", 38.1, 2.0),
    ("counter-8", 41.7, 1.2),
    // no deviation reported
    ("constant-write", 85.1, 0.0),
    (RANDOM_UDP_EXAMPLE, 229.2, 3.9),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub table: BTreeMap<String, Cycles>,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            table: TABLE
                .iter()
                .map(|(name, mean, sigma)| (name.to_string(), Cycles::new(*mean, *sigma)))
                .collect(),
        }
    }
}

impl CostModel {
    pub fn operations(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn get(&self, op: &str) -> Option<Cycles> {
        self.table.get(op).copied()
    }

    /// Sum of the means; deviations add in quadrature.
    pub fn estimate_cycles<S: AsRef<str>>(&self, ops: &[S]) -> Result<Cycles, MeasureError> {
        let mut mean = 0.0;
        let mut var = 0.0;
        for op in ops {
            let op = op.as_ref();
            let c = self
                .get(op)
                .ok_or_else(|| MeasureError::UnknownOperation(op.to_string()))?;
            mean += c.mean;
            var += c.sigma * c.sigma;
        }
        Ok(Cycles::new(mean, var.sqrt()))
    }
}

/// Predicted single-core packet rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub mpps: f64,
    /// Rate at `mean + sigma` cycles.
    pub low_mpps: f64,
    /// Rate at `mean - sigma` cycles.
    pub high_mpps: f64,
}

impl Throughput {
    pub fn half_width(&self) -> f64 {
        (self.high_mpps - self.low_mpps) / 2.0
    }
}

pub fn predict_throughput(cycles: Cycles, freq_hz: f64) -> Result<Throughput, MeasureError> {
    if !(cycles.mean > 0.0) {
        return Err(MeasureError::InvalidCycles(cycles.mean));
    }
    let rate = |c: f64| {
        if c > 0.0 {
            freq_hz / c / 1e6
        } else {
            f64::INFINITY
        }
    };
    Ok(Throughput {
        mpps: rate(cycles.mean),
        low_mpps: rate(cycles.mean + cycles.sigma),
        high_mpps: rate(cycles.mean - cycles.sigma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_pairs() {
        let m = CostModel::default();
        assert_eq!(
            m.estimate_cycles(&["transmission"]).unwrap(),
            Cycles::new(76.0, 0.8)
        );
        let c = m
            .estimate_cycles(&["transmission", "modification"])
            .unwrap();
        assert!((c.mean - 85.1).abs() < 1e-9);
        assert!((c.sigma - (0.8f64.powi(2) + 1.2f64.powi(2)).sqrt()).abs() < 1e-12);
        assert!((c.sigma - 1.44).abs() < 0.005);
    }

    #[test]
    fn unknown_operation() {
        let m = CostModel::default();
        assert_eq!(
            m.estimate_cycles(&["transmission", "teleport"]),
            Err(MeasureError::UnknownOperation("teleport".into()))
        );
    }

    #[test]
    fn throughput() {
        let t = predict_throughput(Cycles::new(240.0, 0.0), 2.4e9).unwrap();
        assert_eq!(t.mpps, 10.0);
        let t = predict_throughput(Cycles::new(229.2, 3.9), 2.4e9).unwrap();
        assert!((t.mpps - 10.47).abs() < 0.005);
        assert!((t.half_width() - 0.18).abs() < 0.005);
        assert!(predict_throughput(Cycles::new(0.0, 0.0), 2.4e9).is_err());
    }

    #[test]
    fn line_rate_threshold() {
        let line = crate::wireclock::line_rate_pps(64, 10_000_000_000) / 1e6;
        let t = predict_throughput(Cycles::new(161.3, 0.0), 2.4e9).unwrap();
        assert_eq!((t.mpps * 100.0).round() / 100.0, 14.88);
        assert!(t.mpps < line);
        let exact = 2.4e9 / (line * 1e6);
        assert!((exact - 161.28).abs() < 0.005, "{exact}");
    }
}
