// SPDX-License-Identifier: Apache-2.0

//! Software rate control by filling gaps with invalid frames.
//!
//! The wire is kept busy at line rate. Between two payload frames the encoder
//! inserts filler frames with a deliberately wrong FCS whose total wire length
//! equals the requested gap; receivers drop them in hardware, so the payload
//! frames arrive with the requested spacing.
//!
//! Gaps shorter than the minimum filler cannot be represented. They are sent
//! back-to-back and the missing bytes are carried in a signed accumulator
//! until the next representable gap absorbs them, which keeps the cumulative
//! schedule within one minimum filler of the request.

use serde::{Deserialize, Serialize};

use super::RateError;
use crate::packet::PacketBuffer;
use crate::time::{SimTime, TICKS_PER_SEC};
use crate::wireclock::link::{FCS_LEN, WIRE_OVERHEAD};
use crate::wireclock::serialization_time;

/// Largest standard frame (1518 bytes) on the wire.
pub const MAX_FILLER_WIRE: usize = 1538;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapParams {
    /// Shortest filler normally emitted (8 bytes below the regular minimum).
    pub min_filler_wire: usize,
    /// Shortest frame the NIC transmits at all.
    pub abs_min_wire: usize,
    pub max_filler_wire: usize,
    /// Frame rate ceiling of the NIC when short frames dominate.
    pub short_frame_cap_pps: Option<f64>,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams {
            min_filler_wire: 76,
            abs_min_wire: 33,
            max_filler_wire: MAX_FILLER_WIRE,
            short_frame_cap_pps: Some(15.6e6),
        }
    }
}

impl GapParams {
    pub fn validate(&self) -> Result<(), RateError> {
        if self.min_filler_wire < self.abs_min_wire {
            return Err(RateError::InvalidParams(format!(
                "min_filler_wire {} is below the hardware minimum {}",
                self.min_filler_wire, self.abs_min_wire
            )));
        }
        if self.max_filler_wire < 2 * self.min_filler_wire {
            return Err(RateError::InvalidParams(format!(
                "max_filler_wire {} must be at least twice min_filler_wire",
                self.max_filler_wire
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapClass {
    Exact,
    Approximated,
    BackToBack,
}

/// Representability of a gap of whole bytes.
pub fn validate_gap(gap_bytes: u64, params: &GapParams) -> GapClass {
    match gap_bytes {
        0 => GapClass::BackToBack,
        g if g < params.min_filler_wire as u64 => GapClass::Approximated,
        _ => GapClass::Exact,
    }
}

/// Classifies a gap given in time. Returns the class and the gap in
/// (possibly fractional) bytes; a fractional byte count is never exact.
pub fn classify_gap_ns(gap_ns: f64, rate_bps: u64, params: &GapParams) -> (GapClass, f64) {
    let bytes = gap_ns * rate_bps as f64 / 8e9;
    // snap representation noise from decimal input such as 60.8 ns
    let rounded = bytes.round();
    let bytes = if (bytes - rounded).abs() < 1e-6 {
        rounded
    } else {
        bytes
    };
    let class = if bytes <= 0.0 {
        GapClass::BackToBack
    } else if bytes < params.min_filler_wire as f64 {
        GapClass::Approximated
    } else if bytes.fract() == 0.0 {
        GapClass::Exact
    } else {
        GapClass::Approximated
    };
    (class, bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapEntry {
    Payload,
    Filler { wire_len: u32 },
}

impl GapEntry {
    pub fn wire_len(self, payload_wire_len: usize) -> usize {
        match self {
            GapEntry::Payload => payload_wire_len,
            GapEntry::Filler { wire_len } => wire_len as usize,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapStats {
    pub exact: u64,
    pub approximated: u64,
    pub back_to_back: u64,
    pub fillers: u64,
}

/// Incremental encoder; [`gapfill_encode`] runs it over a whole sequence.
#[derive(Clone, Debug)]
pub struct GapEncoder {
    params: GapParams,
    payload_wire_len: usize,
    rate_bps: u64,
    /// Requested minus emitted gap, in tick * bit/s units.
    balance: i128,
    stats: GapStats,
    payloads: u64,
    emitted_bytes: u128,
}

const BYTE_UNITS: i128 = 8 * TICKS_PER_SEC as i128;

impl GapEncoder {
    pub fn new(
        payload_wire_len: usize,
        rate_bps: u64,
        params: GapParams,
    ) -> Result<Self, RateError> {
        params.validate()?;
        Ok(GapEncoder {
            params,
            payload_wire_len,
            rate_bps,
            balance: 0,
            stats: GapStats::default(),
            payloads: 0,
            emitted_bytes: 0,
        })
    }

    pub fn params(&self) -> &GapParams {
        &self.params
    }

    pub fn stats(&self) -> GapStats {
        self.stats
    }

    /// Unrepaid gap in bytes; positive means payloads run ahead of the request.
    pub fn deficit_bytes(&self) -> f64 {
        self.balance as f64 / BYTE_UNITS as f64
    }

    /// Encodes one payload followed by the gap realizing `delta` to the next
    /// payload start, appending to `out`.
    pub fn push(
        &mut self,
        index: usize,
        delta: SimTime,
        out: &mut Vec<GapEntry>,
    ) -> Result<(), RateError> {
        let rate = i128::from(self.rate_bps);
        let payload_units = self.payload_wire_len as i128 * BYTE_UNITS;
        let requested = i128::from(delta.ticks()) * rate;
        if requested < payload_units {
            return Err(RateError::DeltaTooSmall {
                index,
                delta,
                min: serialization_time(self.payload_wire_len, self.rate_bps),
            });
        }
        out.push(GapEntry::Payload);
        self.payloads += 1;
        self.emitted_bytes += self.payload_wire_len as u128;

        let requested_gap = requested - payload_units;
        let exact_bytes = (requested_gap % BYTE_UNITS == 0).then_some(requested_gap / BYTE_UNITS);
        match exact_bytes.map(|b| validate_gap(b as u64, &self.params)) {
            Some(GapClass::Exact) => self.stats.exact += 1,
            Some(GapClass::BackToBack) => self.stats.back_to_back += 1,
            _ => self.stats.approximated += 1,
        }

        self.balance += requested_gap;
        let want = (self.balance.div_euclid(BYTE_UNITS)).max(0) as usize;
        if want < self.params.min_filler_wire {
            return Ok(());
        }
        let before = out.len();
        split_filler(want, &self.params, out);
        self.stats.fillers += (out.len() - before) as u64;
        self.emitted_bytes += want as u128;
        self.balance -= want as i128 * BYTE_UNITS;
        Ok(())
    }

    pub fn payloads(&self) -> u64 {
        self.payloads
    }

    pub fn emitted_wire_bytes(&self) -> u128 {
        self.emitted_bytes
    }
}

/// Splits `total` bytes into fillers in `[min, max]`. A remainder too short
/// for its own filler is taken out of the previous maximum-length filler.
fn split_filler(total: usize, params: &GapParams, out: &mut Vec<GapEntry>) {
    let max = params.max_filler_wire;
    let min = params.min_filler_wire;
    let push = |out: &mut Vec<GapEntry>, len: usize| {
        out.push(GapEntry::Filler {
            wire_len: len as u32,
        })
    };
    if total <= max {
        push(out, total);
        return;
    }
    let full = total / max;
    let rest = total % max;
    if rest == 0 || rest >= min {
        for _ in 0..full {
            push(out, max);
        }
        if rest > 0 {
            push(out, rest);
        }
    } else {
        for _ in 0..full - 1 {
            push(out, max);
        }
        push(out, max - (min - rest));
        push(out, min);
    }
}

/// Encoded line-rate sequence of payload and filler frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GapPlan {
    pub entries: Vec<GapEntry>,
    /// Gap bytes still owed at the end of the sequence.
    pub deficit_bytes: f64,
    pub params: GapParams,
    pub payload_wire_len: usize,
    pub rate_bps: u64,
    pub stats: GapStats,
    /// Sum of the requested inter-departure times.
    pub requested: SimTime,
}

impl GapPlan {
    pub fn payload_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| **e == GapEntry::Payload)
            .count()
    }

    pub fn filler_count(&self) -> usize {
        self.entries.len() - self.payload_count()
    }

    pub fn emitted_wire_bytes(&self) -> u128 {
        self.entries
            .iter()
            .map(|e| e.wire_len(self.payload_wire_len) as u128)
            .sum()
    }

    /// Time the whole plan occupies the wire.
    pub fn duration(&self) -> SimTime {
        bytes_to_time(self.emitted_wire_bytes(), self.rate_bps)
    }

    /// Entries with their departure times, back-to-back from `start`.
    pub fn schedule(&self, start: SimTime) -> impl Iterator<Item = (SimTime, GapEntry)> + '_ {
        let mut offset_bytes: u128 = 0;
        self.entries.iter().map(move |e| {
            let t = start + bytes_to_time(offset_bytes, self.rate_bps);
            offset_bytes += e.wire_len(self.payload_wire_len) as u128;
            (t, *e)
        })
    }

    /// Pairs the plan with payload buffers and builds the filler buffers.
    /// Filler sequence ids are drawn from `next_seq`.
    pub fn realize<I, F>(
        &self,
        start: SimTime,
        payloads: I,
        mut next_seq: F,
    ) -> Vec<(SimTime, PacketBuffer)>
    where
        I: IntoIterator<Item = PacketBuffer>,
        F: FnMut() -> u64,
    {
        let mut payloads = payloads.into_iter();
        self.schedule(start)
            .map_while(|(t, entry)| match entry {
                GapEntry::Payload => payloads.next().map(|p| (t, p)),
                GapEntry::Filler { wire_len } => {
                    Some((t, filler_buffer(wire_len as usize, next_seq())))
                }
            })
            .collect()
    }

    /// Rejects plans whose short fillers push the frame rate past the NIC's
    /// short-frame ceiling.
    pub fn check_frame_rate(&self) -> Result<(), RateError> {
        check_frame_rate(
            self.entries.len() as u64,
            self.emitted_wire_bytes(),
            self.rate_bps,
            &self.params,
        )
    }
}

pub(crate) fn check_frame_rate(
    frames: u64,
    wire_bytes: u128,
    rate_bps: u64,
    params: &GapParams,
) -> Result<(), RateError> {
    let Some(cap) = params.short_frame_cap_pps else {
        return Ok(());
    };
    if frames == 0 || wire_bytes >= 84 * u128::from(frames) {
        return Ok(());
    }
    let secs = bytes_to_time(wire_bytes, rate_bps).as_secs_f64();
    let pps = frames as f64 / secs;
    if pps > cap {
        return Err(RateError::ShortFrameRate { pps, cap_pps: cap });
    }
    Ok(())
}

pub(crate) fn bytes_to_time(bytes: u128, rate_bps: u64) -> SimTime {
    let rate = u128::from(rate_bps);
    SimTime::from_ticks(((bytes * BYTE_UNITS as u128 + rate / 2) / rate) as i64)
}

/// Filler frame for `wire_len` bytes on the wire.
pub fn filler_buffer(wire_len: usize, seq_id: u64) -> PacketBuffer {
    PacketBuffer::filler(wire_len - WIRE_OVERHEAD - FCS_LEN, seq_id)
}

/// Encodes a sequence of inter-departure times for payload frames of
/// `payload_wire_len` bytes on a link of `rate_bps`.
pub fn gapfill_encode(
    deltas: &[SimTime],
    payload_wire_len: usize,
    rate_bps: u64,
    params: &GapParams,
) -> Result<GapPlan, RateError> {
    let mut enc = GapEncoder::new(payload_wire_len, rate_bps, *params)?;
    let mut entries = Vec::with_capacity(deltas.len() * 2);
    for (i, d) in deltas.iter().enumerate() {
        enc.push(i, *d, &mut entries)?;
    }
    let plan = GapPlan {
        entries,
        deficit_bytes: enc.deficit_bytes(),
        params: *params,
        payload_wire_len,
        rate_bps,
        stats: enc.stats(),
        requested: deltas.iter().copied().sum(),
    };
    plan.check_frame_rate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wireclock::GBE_10;

    fn fillers(plan: &GapPlan) -> Vec<u32> {
        plan.entries
            .iter()
            .filter_map(|e| match e {
                GapEntry::Filler { wire_len } => Some(*wire_len),
                GapEntry::Payload => None,
            })
            .collect()
    }

    #[test]
    fn cbr_one_mpps() {
        let deltas = vec![SimTime::from_ns(1000); 4];
        let plan = gapfill_encode(&deltas, 84, GBE_10, &GapParams::default()).unwrap();
        assert_eq!(
            plan.entries,
            [GapEntry::Payload, GapEntry::Filler { wire_len: 1166 }].repeat(4)
        );
        let starts: Vec<SimTime> = plan
            .schedule(SimTime::ZERO)
            .filter(|(_, e)| *e == GapEntry::Payload)
            .map(|(t, _)| t)
            .collect();
        assert!(starts
            .windows(2)
            .all(|w| w[1] - w[0] == SimTime::from_ns(1000)));
        assert_eq!(plan.deficit_bytes, 0.0);
    }

    #[test]
    fn unrepresentable_gap_is_carried() {
        // 84 + 40 bytes, then 84 + 1166 bytes
        let deltas = [
            SimTime::from_ticks(124 * 8_000),
            SimTime::from_ticks(1250 * 8_000),
        ];
        let mut enc = GapEncoder::new(84, GBE_10, GapParams::default()).unwrap();
        let mut out = Vec::new();
        enc.push(0, deltas[0], &mut out).unwrap();
        assert_eq!(out, vec![GapEntry::Payload]);
        assert_eq!(enc.deficit_bytes(), 40.0);
        enc.push(1, deltas[1], &mut out).unwrap();
        assert_eq!(
            out[1..],
            [GapEntry::Payload, GapEntry::Filler { wire_len: 1206 }]
        );
        assert_eq!(enc.deficit_bytes(), 0.0);
    }

    #[test]
    fn first_representable_gap() {
        let deltas = [SimTime::from_ticks((84 + 76) * 8_000)];
        let p = GapParams {
            short_frame_cap_pps: None,
            ..GapParams::default()
        };
        let plan = gapfill_encode(&deltas, 84, GBE_10, &p).unwrap();
        assert_eq!(fillers(&plan), vec![76]);
        assert_eq!(plan.stats.exact, 1);
    }

    #[test]
    fn long_gaps_split_exactly() {
        let p = GapParams::default();
        for gap in [1538usize, 1539, 1538 + 40, 1538 + 76, 3 * 1538 + 1, 5000] {
            let deltas = [SimTime::from_ticks(((84 + gap) * 8_000) as i64)];
            let plan = gapfill_encode(&deltas, 84, GBE_10, &p).unwrap();
            let f = fillers(&plan);
            assert_eq!(
                f.iter().map(|x| *x as usize).sum::<usize>(),
                gap,
                "gap {gap}"
            );
            assert!(
                f.iter().all(|x| (76..=1538).contains(&(*x as usize))),
                "{f:?}"
            );
        }
    }

    #[test]
    fn classification() {
        let p = GapParams::default();
        assert_eq!(validate_gap(0, &p), GapClass::BackToBack);
        assert_eq!(validate_gap(1, &p), GapClass::Approximated);
        assert_eq!(validate_gap(75, &p), GapClass::Approximated);
        assert_eq!(validate_gap(76, &p), GapClass::Exact);
        assert_eq!(
            classify_gap_ns(30.0, GBE_10, &p),
            (GapClass::Approximated, 37.5)
        );
        assert_eq!(classify_gap_ns(60.8, GBE_10, &p), (GapClass::Exact, 76.0));
        assert_eq!(classify_gap_ns(60.0, GBE_10, &p).0, GapClass::Approximated);
        assert_eq!(classify_gap_ns(0.0, GBE_10, &p).0, GapClass::BackToBack);
        assert_eq!(classify_gap_ns(100.1, GBE_10, &p).0, GapClass::Approximated);
    }

    #[test]
    fn too_small_delta() {
        let deltas = [SimTime::from_ns(1000), SimTime::from_ns(67)];
        let err = gapfill_encode(&deltas, 84, GBE_10, &GapParams::default()).unwrap_err();
        assert!(matches!(err, RateError::DeltaTooSmall { index: 1, .. }));
    }

    #[test]
    fn short_frame_ceiling() {
        // payload + 76-byte filler: 80 bytes per frame on average, 15.625 Mpps
        let deltas = vec![SimTime::from_ticks(160 * 8_000); 100];
        let err = gapfill_encode(&deltas, 84, GBE_10, &GapParams::default()).unwrap_err();
        assert!(matches!(err, RateError::ShortFrameRate { .. }));
        let relaxed = GapParams {
            short_frame_cap_pps: None,
            ..GapParams::default()
        };
        assert!(gapfill_encode(&deltas, 84, GBE_10, &relaxed).is_ok());
    }

    #[test]
    fn params_validation() {
        let p = GapParams {
            min_filler_wire: 20,
            ..GapParams::default()
        };
        assert!(gapfill_encode(&[], 84, GBE_10, &p).is_err());
    }
}
