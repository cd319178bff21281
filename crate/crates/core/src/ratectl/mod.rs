// SPDX-License-Identifier: Apache-2.0

//! Inter-departure patterns and the two ways of realizing them: a hardware
//! CBR queue model and the gap-filling encoder.

pub mod gapfill;
mod hwcbr;
mod pattern;

pub use gapfill::{
    classify_gap_ns, filler_buffer, gapfill_encode, validate_gap, GapClass, GapEncoder, GapEntry,
    GapParams, GapPlan, GapStats,
};
pub use hwcbr::{hw_cbr_schedule, HwCbrModel, HwCbrSchedule, HwCbrScheduler};
pub use pattern::{load_custom_csv, PacedSource, Pattern, PatternSource};

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("custom pattern exhausted")]
    Exhausted,
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("invalid gap parameters: {0}")]
    InvalidParams(String),
    #[error("target rate {target_pps} pps exceeds line rate {line_rate_pps} pps")]
    RateAboveLineRate { target_pps: f64, line_rate_pps: f64 },
    #[error("inter-departure #{index} of {delta} ns is shorter than the payload serialization time {min} ns")]
    DeltaTooSmall {
        index: usize,
        delta: SimTime,
        min: SimTime,
    },
    #[error("frame rate {pps} pps exceeds the short-frame ceiling of {cap_pps} pps")]
    ShortFrameRate { pps: f64, cap_pps: f64 },
    #[error("custom pattern csv: {0}")]
    Csv(String),
}
