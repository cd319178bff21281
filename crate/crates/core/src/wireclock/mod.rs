// SPDX-License-Identifier: Apache-2.0

//! Simulated physical layer: serialization, cable propagation, quantized
//! drifting port clocks and the invalid-FCS drop rule.

mod clock;
pub mod link;
mod wire;

pub use clock::{sync_clocks, ClockModel, PortClock, SyncConfig, SyncReport, SYNC_ROUNDS};
pub use link::{
    byte_time, line_rate_pps, serialization_time, wire_length, LinkModel, PhyJitter, GBE_1, GBE_10,
    GBE_40,
};
pub use wire::{transmit_frames, PortId, Wire, WireEvent, WireEventKind};

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error(
        "frame departing at {departure} ns overlaps the previous frame (wire free at {free_at} ns)"
    )]
    WireOverlap {
        departure: SimTime,
        free_at: SimTime,
    },
    #[error("invalid link: {0}")]
    InvalidLink(String),
}
