// SPDX-License-Identifier: Apache-2.0

//! Line arithmetic and cable propagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WireError;
use crate::time::{SimTime, TICKS_PER_NS, TICKS_PER_SEC};

/// Preamble (7), start-of-frame delimiter (1) and inter-frame gap (12).
pub const WIRE_OVERHEAD: usize = 20;
pub const FCS_LEN: usize = 4;
/// Speed of light in m/ns.
pub const SPEED_OF_LIGHT: f64 = 0.299_792_458;

pub const GBE_1: u64 = 1_000_000_000;
pub const GBE_10: u64 = 10_000_000_000;
pub const GBE_40: u64 = 40_000_000_000;

/// Bytes a frame (FCS included) occupies on the wire.
pub const fn wire_length(frame_len: usize) -> usize {
    frame_len + WIRE_OVERHEAD
}

/// Time to clock `wire_bytes` onto a link, rounded to the nearest tick.
pub fn serialization_time(wire_bytes: usize, rate_bps: u64) -> SimTime {
    assert!(rate_bps > 0, "line rate must be positive");
    let num = wire_bytes as u128 * 8 * TICKS_PER_SEC as u128;
    let rate = u128::from(rate_bps);
    SimTime::from_ticks(((num + rate / 2) / rate) as i64)
}

/// Duration of one byte on the wire.
pub fn byte_time(rate_bps: u64) -> SimTime {
    serialization_time(1, rate_bps)
}

/// Maximum packet rate for frames of `frame_len` bytes (FCS included).
pub fn line_rate_pps(frame_len: usize, rate_bps: u64) -> f64 {
    rate_bps as f64 / (8.0 * wire_length(frame_len) as f64)
}

/// Cable and PHY parameters of one link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub length_m: f64,
    /// Propagation speed as a fraction of c.
    pub vp_fraction: f64,
    /// (De)modulation time.
    pub k_ns: f64,
    #[serde(default = "default_rate")]
    pub line_rate_bps: u64,
    /// Per-device MAC throughput ceiling.
    #[serde(default)]
    pub aggregate_cap_bps: Option<u64>,
    /// Phase of the receiver's recovered sampling clock relative to the
    /// transmitter's event clock.
    #[serde(default = "default_rx_phase")]
    pub rx_phase_ns: f64,
    #[serde(default)]
    pub jitter: PhyJitter,
}

fn default_rate() -> u64 {
    GBE_10
}

/// Reproduces the loopback medians of both reference NICs (see the
/// `reference_loopback_medians` test).
pub const DEFAULT_RX_PHASE_NS: f64 = 2.0;

fn default_rx_phase() -> f64 {
    DEFAULT_RX_PHASE_NS
}

impl LinkModel {
    pub fn new(
        length_m: f64,
        vp_fraction: f64,
        k_ns: f64,
        line_rate_bps: u64,
    ) -> Result<Self, WireError> {
        let link = LinkModel {
            length_m,
            vp_fraction,
            k_ns,
            line_rate_bps,
            aggregate_cap_bps: None,
            rx_phase_ns: DEFAULT_RX_PHASE_NS,
            jitter: PhyJitter::None,
        };
        link.validate()?;
        Ok(link)
    }

    /// Multimode fiber on a 10GBASE-SR port.
    pub fn fiber(length_m: f64) -> Self {
        Self::new(length_m, 0.72, 310.7, GBE_10).expect("valid preset")
    }

    /// Cat 5e copper on a 10GBASE-T port, including the block-code jitter.
    pub fn copper(length_m: f64) -> Self {
        let mut link = Self::new(length_m, 0.69, 2147.2, GBE_10).expect("valid preset");
        link.jitter = PhyJitter::BlockCode;
        link
    }

    pub fn validate(&self) -> Result<(), WireError> {
        let bad = |what: String| Err(WireError::InvalidLink(what));
        if !(self.vp_fraction > 0.0 && self.vp_fraction <= 1.0) {
            return bad(format!("vp_fraction {} outside (0, 1]", self.vp_fraction));
        }
        if !(self.k_ns >= 0.0) {
            return bad(format!("k_ns {} is negative", self.k_ns));
        }
        if !(self.length_m >= 0.0) {
            return bad(format!("length_m {} is negative", self.length_m));
        }
        if ![GBE_1, GBE_10, GBE_40].contains(&self.line_rate_bps) {
            return bad(format!(
                "unsupported line rate {} bit/s",
                self.line_rate_bps
            ));
        }
        if self.aggregate_cap_bps == Some(0) {
            return bad("aggregate cap of 0 bit/s".into());
        }
        if !(self.rx_phase_ns >= 0.0) {
            return bad(format!("rx_phase_ns {} is negative", self.rx_phase_ns));
        }
        Ok(())
    }

    /// `k + l / v_p`.
    pub fn propagation_ns(&self) -> f64 {
        self.k_ns + self.length_m / (self.vp_fraction * SPEED_OF_LIGHT)
    }

    pub fn propagation_delay(&self) -> SimTime {
        SimTime::from_ns_f64(self.propagation_ns())
    }

    pub fn serialization(&self, wire_bytes: usize) -> SimTime {
        serialization_time(wire_bytes, self.line_rate_bps)
    }

    /// Rate used for spacing frames: the line rate or the device cap.
    pub fn effective_rate(&self) -> u64 {
        match self.aggregate_cap_bps {
            Some(cap) => cap.min(self.line_rate_bps),
            None => self.line_rate_bps,
        }
    }

    pub fn rx_phase(&self) -> SimTime {
        SimTime::from_ns_f64(self.rx_phase_ns)
    }
}

/// Layer-1 latency variation added on top of propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhyJitter {
    #[default]
    None,
    /// 10GBASE-T block code: mostly on the median, rarely a step of 6.4 ns,
    /// very rarely +-32 ns.
    BlockCode,
}

/// Probabilities of the block-code offsets, by multiples of 6.4 ns.
const BLOCK_CODE: [(i64, f64); 5] = [(-5, 0.001), (-1, 0.05), (0, 0.898), (1, 0.05), (5, 0.001)];

impl PhyJitter {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> SimTime {
        match self {
            PhyJitter::None => SimTime::ZERO,
            PhyJitter::BlockCode => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (steps, p) in BLOCK_CODE {
                    acc += p;
                    if u < acc {
                        return SimTime::from_ticks(steps * 64 * TICKS_PER_NS / 10);
                    }
                }
                SimTime::ZERO
            }
        }
    }
}
