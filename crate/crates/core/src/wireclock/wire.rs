// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::link::{wire_length, LinkModel};
use super::WireError;
use crate::packet::checksum::fcs_valid;
use crate::time::SimTime;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct PortId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WireEventKind {
    Delivered,
    DroppedBadCrc,
}

/// A frame as seen by the receiving port.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireEvent {
    pub kind: WireEventKind,
    pub port: PortId,
    /// Instant the last bit was received.
    pub true_time: SimTime,
    /// Instant the start of frame was received.
    pub sof_time: SimTime,
    /// Materialized frame including FCS.
    pub frame: Vec<u8>,
    pub seq_id: u64,
}

impl WireEvent {
    pub fn is_delivered(&self) -> bool {
        self.kind == WireEventKind::Delivered
    }
}

/// One direction of a link: serializes frames, delays them by the cable and
/// drops frames whose FCS does not verify before they reach any receive
/// queue.
#[derive(Clone, Debug)]
pub struct Wire {
    link: LinkModel,
    peer: PortId,
    propagation: SimTime,
    free_at: SimTime,
    delivered: u64,
    rx_errors: u64,
}

impl Wire {
    pub fn new(link: LinkModel, peer: PortId) -> Result<Self, WireError> {
        link.validate()?;
        let propagation = link.propagation_delay();
        Ok(Wire {
            link,
            peer,
            propagation,
            free_at: SimTime::from_ticks(i64::MIN),
            delivered: 0,
            rx_errors: 0,
        })
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    /// Earliest departure that does not overlap the previous frame.
    pub fn free_at(&self) -> SimTime {
        self.free_at
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Receiver error counter (bad FCS).
    pub fn rx_errors(&self) -> u64 {
        self.rx_errors
    }

    pub fn transmitted(&self) -> u64 {
        self.delivered + self.rx_errors
    }

    /// Puts one materialized frame (FCS included) on the wire.
    pub fn transmit(
        &mut self,
        departure: SimTime,
        frame: Vec<u8>,
        seq_id: u64,
    ) -> Result<WireEvent, WireError> {
        if departure < self.free_at {
            return Err(WireError::WireOverlap {
                departure,
                free_at: self.free_at,
            });
        }
        let wire_bytes = wire_length(frame.len());
        let ser = self.link.serialization(wire_bytes);
        self.free_at =
            departure + super::link::serialization_time(wire_bytes, self.link.effective_rate());
        let sof_time = departure + self.propagation;
        let kind = if fcs_valid(&frame) {
            self.delivered += 1;
            WireEventKind::Delivered
        } else {
            self.rx_errors += 1;
            WireEventKind::DroppedBadCrc
        };
        Ok(WireEvent {
            kind,
            port: self.peer,
            true_time: departure + ser + self.propagation,
            sof_time,
            frame,
            seq_id,
        })
    }
}

/// Transmits a whole sequence and returns the events at the peer, in order.
pub fn transmit_frames<I>(
    peer: PortId,
    frames: I,
    link: &LinkModel,
) -> Result<Vec<WireEvent>, WireError>
where
    I: IntoIterator<Item = (SimTime, Vec<u8>, u64)>,
{
    let mut wire = Wire::new(link.clone(), peer)?;
    frames
        .into_iter()
        .map(|(t, frame, seq)| wire.transmit(t, frame, seq))
        .collect()
}
