// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{GeneratorTask, RateControl};
use crate::packet::{
    apply_modifier, materialize, BufferPool, FieldModifier, PacketBuffer, DEFAULT_BATCH_CAPACITY,
};
use crate::ratectl::gapfill::{bytes_to_time, check_frame_rate};
use crate::ratectl::{
    filler_buffer, GapEncoder, GapEntry, GapParams, GapStats, HwCbrModel, HwCbrScheduler,
    PacedSource, PatternSource, RateError,
};
use crate::time::SimTime;
use crate::wireclock::link::FCS_LEN;
use crate::wireclock::wire_length;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameKind {
    Payload,
    Filler,
    Probe,
}

/// A materialized frame waiting in a transmit queue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxFrame {
    pub desired: SimTime,
    /// Frame bytes including the FCS.
    pub frame: Vec<u8>,
    pub seq_id: u64,
    pub kind: FrameKind,
    /// Receive queue the frame is steered to at its destination.
    pub steer: u16,
    pub timestamp: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub gap: Option<GapStats>,
    pub non_linear: bool,
}

enum Mode {
    Paced {
        source: PacedSource,
        next: SimTime,
    },
    Gapfill {
        source: PacedSource,
        encoder: GapEncoder,
        pending: VecDeque<GapEntry>,
        offset_bytes: u128,
        frames: u64,
        rate_bps: u64,
        payload_wire: usize,
    },
    Hardware {
        sched: HwCbrScheduler,
    },
}

/// Open-loop frame source of one generator task.
pub struct Generator {
    rng: ChaCha8Rng,
    pool: BufferPool,
    prototype: PacketBuffer,
    modifiers: Vec<FieldModifier>,
    ready: VecDeque<PacketBuffer>,
    mode: Mode,
    start: SimTime,
    end: Option<SimTime>,
    max_packets: Option<u64>,
    produced: u64,
    steer: u16,
    done: bool,
    summary: GenSummary,
    frame_rate_params: Option<GapParams>,
}

/// Sequence ids of different tasks live in disjoint ranges.
pub fn seq_base(task_index: usize) -> u64 {
    (task_index as u64) << 40
}

impl Generator {
    pub fn new(
        spec: &GeneratorTask,
        task_index: usize,
        seed: u64,
        rate_bps: u64,
    ) -> Result<Self, String> {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let prototype = spec.template.make().map_err(|e| e.to_string())?;
        let payload_wire = wire_length(prototype.frame_len() + FCS_LEN);
        let min_gap = crate::wireclock::serialization_time(payload_wire, rate_bps);
        let start = SimTime::from_ns_f64(spec.start_ns);
        let source = || -> Result<PacedSource, String> {
            Ok(PacedSource::new(
                PatternSource::new(spec.pattern.clone()).map_err(|e| e.to_string())?,
                min_gap,
            ))
        };
        let mut summary = GenSummary::default();
        let mut frame_rate_params = None;
        let mode = match spec.rate_control {
            RateControl::Paced => Mode::Paced {
                source: source()?,
                next: start,
            },
            RateControl::Gapfill => {
                let params = spec.gap.unwrap_or_default();
                frame_rate_params = Some(params);
                Mode::Gapfill {
                    source: source()?,
                    encoder: GapEncoder::new(payload_wire, rate_bps, params)
                        .map_err(|e| e.to_string())?,
                    pending: VecDeque::new(),
                    offset_bytes: 0,
                    frames: 0,
                    rate_bps,
                    payload_wire,
                }
            }
            RateControl::Hardware => {
                let crate::ratectl::Pattern::Cbr { rate_pps } = spec.pattern else {
                    return Err("hardware rate control supports cbr patterns only".into());
                };
                let mut model = HwCbrModel::new(rate_pps);
                if let Some(a) = spec.hw_amplitude_ns {
                    model = model.with_amplitude_ns(a);
                }
                let sched = HwCbrScheduler::new(&model, payload_wire, rate_bps, start)
                    .map_err(|e| e.to_string())?;
                summary.non_linear = sched.non_linear();
                Mode::Hardware { sched }
            }
        };
        Ok(Generator {
            rng,
            pool: BufferPool::starting_at(seq_base(task_index), DEFAULT_BATCH_CAPACITY),
            prototype,
            modifiers: spec.modifiers.clone(),
            ready: VecDeque::new(),
            mode,
            start,
            end: spec.duration_s.map(|d| start + SimTime::from_secs_f64(d)),
            max_packets: spec.packets,
            produced: 0,
            steer: spec.queue,
            done: false,
            summary,
            frame_rate_params,
        })
    }

    pub fn summary(&self) -> &GenSummary {
        &self.summary
    }

    fn next_payload(&mut self) -> Result<PacketBuffer, String> {
        if self.ready.is_empty() {
            let size = self.prototype.frame_len();
            let mut batch = self
                .pool
                .alloc_batch(&self.prototype, DEFAULT_BATCH_CAPACITY, size)
                .map_err(|e| e.to_string())?;
            for m in &mut self.modifiers {
                apply_modifier(&mut batch, m, &mut self.rng).map_err(|e| e.to_string())?;
            }
            self.ready.extend(batch);
        }
        Ok(self.ready.pop_front().expect("batch is not empty"))
    }

    fn payload_allowed(&self, at: SimTime) -> bool {
        self.max_packets.is_none_or(|m| self.produced < m) && self.end.is_none_or(|e| at < e)
    }

    fn frame(&self, desired: SimTime, buf: &PacketBuffer, kind: FrameKind) -> TxFrame {
        TxFrame {
            desired,
            frame: materialize(buf),
            seq_id: buf.seq_id(),
            kind,
            steer: self.steer,
            timestamp: false,
        }
    }

    /// Next frame in departure order, `Ok(None)` once the task is complete.
    pub fn next_frame(&mut self) -> Result<Option<TxFrame>, String> {
        if self.done {
            return Ok(None);
        }
        let out = self.step();
        match &out {
            Ok(None) => {
                self.done = true;
                self.finish()?;
            }
            Err(_) => self.done = true,
            Ok(Some(_)) => {}
        }
        out
    }

    fn step(&mut self) -> Result<Option<TxFrame>, String> {
        match &mut self.mode {
            Mode::Paced { .. } => {
                let Mode::Paced { next, .. } = &self.mode else {
                    unreachable!()
                };
                let at = *next;
                if at == SimTime::MAX || !self.payload_allowed(at) {
                    return Ok(None);
                }
                let buf = self.next_payload()?;
                let Mode::Paced { source, next } = &mut self.mode else {
                    unreachable!()
                };
                match source.next_interdeparture(&mut self.rng) {
                    Ok(d) => *next = at + d,
                    Err(RateError::Exhausted) => *next = SimTime::MAX,
                    Err(e) => return Err(e.to_string()),
                }
                self.produced += 1;
                Ok(Some(self.frame(at, &buf, FrameKind::Payload)))
            }
            Mode::Hardware { sched } => {
                let at = sched.next_departure(&mut self.rng);
                if !self.payload_allowed(at) {
                    return Ok(None);
                }
                let buf = self.next_payload()?;
                self.produced += 1;
                Ok(Some(self.frame(at, &buf, FrameKind::Payload)))
            }
            Mode::Gapfill { .. } => self.step_gapfill(),
        }
    }

    fn step_gapfill(&mut self) -> Result<Option<TxFrame>, String> {
        loop {
            let Mode::Gapfill {
                source,
                encoder,
                pending,
                offset_bytes,
                rate_bps,
                payload_wire,
                frames,
            } = &mut self.mode
            else {
                unreachable!()
            };
            let at = self.start + bytes_to_time(*offset_bytes, *rate_bps);
            if let Some(entry) = pending.pop_front() {
                let wire = entry.wire_len(*payload_wire);
                *offset_bytes += wire as u128;
                *frames += 1;
                return match entry {
                    GapEntry::Payload => {
                        self.produced += 1;
                        let buf = self.next_payload()?;
                        Ok(Some(self.frame(at, &buf, FrameKind::Payload)))
                    }
                    GapEntry::Filler { wire_len } => {
                        let seq = self.pool.next_seq();
                        let buf = filler_buffer(wire_len as usize, seq);
                        Ok(Some(self.frame(at, &buf, FrameKind::Filler)))
                    }
                };
            }
            if !(self.max_packets.is_none_or(|m| self.produced < m)
                && self.end.is_none_or(|e| at < e))
            {
                return Ok(None);
            }
            if self.max_packets == Some(self.produced + 1) {
                // nothing follows the last payload
                pending.push_back(GapEntry::Payload);
                continue;
            }
            let delta = match source.next_interdeparture(&mut self.rng) {
                Ok(d) => d,
                Err(RateError::Exhausted) => {
                    pending.push_back(GapEntry::Payload);
                    self.max_packets = Some(self.produced + 1);
                    continue;
                }
                Err(e) => return Err(e.to_string()),
            };
            let mut out = Vec::new();
            encoder
                .push(self.produced as usize, delta, &mut out)
                .map_err(|e| e.to_string())?;
            pending.extend(out);
        }
    }

    fn finish(&mut self) -> Result<(), String> {
        if let Mode::Gapfill {
            encoder,
            offset_bytes,
            frames,
            rate_bps,
            ..
        } = &self.mode
        {
            self.summary.gap = Some(encoder.stats());
            if let Some(params) = &self.frame_rate_params {
                check_frame_rate(*frames, *offset_bytes, *rate_bps, params)
                    .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }
}
