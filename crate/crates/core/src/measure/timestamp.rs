// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::packet::field::{
    ETHERTYPE_IPV4, ETHERTYPE_IPV6, ETHERTYPE_PTP, IPPROTO_UDP, PTP_UDP_EVENT_PORT,
};
use crate::time::SimTime;

/// PTP version written into byte 1 of the PTP header.
pub const PTP_VERSION: u8 = 2;
/// Smallest UDP frame (FCS included) the NICs timestamp.
pub const MIN_UDP_PTP_FRAME: usize = 80;

/// Which packets a port timestamps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtpFilter {
    pub udp_port: u16,
    pub version: u8,
}

impl Default for PtpFilter {
    fn default() -> Self {
        PtpFilter {
            udp_port: PTP_UDP_EVENT_PORT,
            version: PTP_VERSION,
        }
    }
}

impl PtpFilter {
    pub fn matches(&self, frame: &[u8]) -> bool {
        should_timestamp_versioned(frame, self.udp_port, self.version)
    }
}

/// Timestamp trigger with the default PTP version.
///
/// `frame` is the frame as on the wire, FCS included. Layer-2 PTP frames
/// match at any length; UDP frames must be sent to `udp_ptp_port` and be at
/// least 80 bytes long. In both cases the second payload byte must carry the
/// PTP version.
pub fn should_timestamp(frame: &[u8], udp_ptp_port: u16) -> bool {
    should_timestamp_versioned(frame, udp_ptp_port, PTP_VERSION)
}

pub fn should_timestamp_versioned(frame: &[u8], udp_ptp_port: u16, version: u8) -> bool {
    let Some(ethertype) = frame.get(12..14).map(|b| u16::from_be_bytes([b[0], b[1]])) else {
        return false;
    };
    let payload_at = match ethertype {
        ETHERTYPE_PTP => 14,
        ETHERTYPE_IPV4 | ETHERTYPE_IPV6 => {
            if frame.len() < MIN_UDP_PTP_FRAME {
                return false;
            }
            let Some(udp) = udp_offset(frame, ethertype) else {
                return false;
            };
            let Some(port) = frame.get(udp + 2..udp + 4) else {
                return false;
            };
            if u16::from_be_bytes([port[0], port[1]]) != udp_ptp_port {
                return false;
            }
            udp + 8
        }
        _ => return false,
    };
    frame.get(payload_at + 1) == Some(&version)
}

fn udp_offset(frame: &[u8], ethertype: u16) -> Option<usize> {
    if ethertype == ETHERTYPE_IPV4 {
        let vihl = *frame.get(14)?;
        if vihl >> 4 != 4 || *frame.get(14 + 9)? != IPPROTO_UDP {
            return None;
        }
        Some(14 + usize::from(vihl & 0x0F) * 4)
    } else {
        if frame.get(14)? >> 4 != 6 || *frame.get(14 + 6)? != IPPROTO_UDP {
            return None;
        }
        Some(14 + 40)
    }
}

/// Single-slot timestamp latch of a port.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TimestampRegister {
    slot: Option<(SimTime, u64)>,
    lost: u64,
    latched: u64,
}

impl TimestampRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn occupied(&self) -> bool {
        self.slot.is_some()
    }

    /// Latches a clock value unless the register still holds one; the event
    /// is then lost and counted.
    pub fn latch(&mut self, value: SimTime, seq_id: u64) -> bool {
        if self.slot.is_some() {
            self.lost += 1;
            return false;
        }
        self.slot = Some((value, seq_id));
        self.latched += 1;
        true
    }

    /// Reads the value and its owner, clearing the register.
    pub fn read_back(&mut self) -> Option<(SimTime, u64)> {
        self.slot.take()
    }

    pub fn peek(&self) -> Option<(SimTime, u64)> {
        self.slot
    }

    pub fn lost(&self) -> u64 {
        self.lost
    }

    pub fn latched(&self) -> u64 {
        self.latched
    }
}
