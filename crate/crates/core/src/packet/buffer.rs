// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::checksum::{self, L4Proto};
use super::field::{
    FieldValue, Layout, Proto, ETHERTYPE_IPV4, ETHERTYPE_IPV6, ETHERTYPE_PTP, IPPROTO_TCP,
    IPPROTO_UDP,
};
use super::PacketError;

/// Smallest regular frame without FCS (64 bytes on the wire minus the FCS).
pub const MIN_FRAME_LEN: usize = 60;
/// Largest standard frame without FCS.
pub const MAX_FRAME_LEN: usize = 1514;
pub const DEFAULT_BATCH_CAPACITY: usize = 64;

/// Declarative description of a packet: a protocol stack, default field
/// values and a length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketTemplate {
    pub stack: Vec<Proto>,
    #[serde(default)]
    pub defaults: BTreeMap<String, FieldValue>,
    /// Frame length without FCS. A `pktLength` entry in `defaults` overrides it.
    #[serde(default = "default_pkt_length")]
    pub pkt_length: usize,
}

fn default_pkt_length() -> usize {
    MIN_FRAME_LEN
}

impl PacketTemplate {
    pub fn new(stack: impl Into<Vec<Proto>>, pkt_length: usize) -> Self {
        PacketTemplate {
            stack: stack.into(),
            defaults: BTreeMap::new(),
            pkt_length,
        }
    }

    pub fn udp(pkt_length: usize) -> Self {
        Self::new([Proto::Ethernet, Proto::Ipv4, Proto::Udp], pkt_length)
    }

    pub fn with(mut self, field: &str, value: impl Into<FieldValue>) -> Self {
        self.defaults.insert(field.to_string(), value.into());
        self
    }

    fn length(&self) -> Result<usize, PacketError> {
        match self.defaults.get("pktLength") {
            Some(v) => {
                usize::try_from(v.as_uint()).map_err(|_| PacketError::InvalidValue(v.to_string()))
            }
            None => Ok(self.pkt_length),
        }
    }

    /// Builds the prototype buffer for this template. Header fields take the
    /// defaults, structural fields (EtherType, IP version, protocol numbers and
    /// length fields) are derived from the stack, everything else is zero.
    pub fn make(&self) -> Result<PacketBuffer, PacketError> {
        let layout = Layout::from_stack(&self.stack)?;
        let len = self.length()?;
        check_length(&layout, len)?;
        let mut buf = PacketBuffer {
            data: vec![0; len],
            layout,
            crc_valid: true,
            request_timestamp: false,
            offload: Offload::default(),
            seq_id: 0,
        };
        buf.write_structure();
        for (name, value) in &self.defaults {
            if name == "pktLength" {
                continue;
            }
            buf.set_field(name, value)?;
        }
        Ok(buf)
    }
}

fn check_length(layout: &Layout, len: usize) -> Result<(), PacketError> {
    let min = layout.header_len().max(MIN_FRAME_LEN);
    if len < min {
        return Err(PacketError::LengthTooSmall { len, min });
    }
    if len > MAX_FRAME_LEN {
        return Err(PacketError::LengthTooLarge {
            len,
            max: MAX_FRAME_LEN,
        });
    }
    Ok(())
}

/// Checksums the NIC fills in at transmit time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offload {
    #[serde(default)]
    pub ipv4: bool,
    #[serde(default)]
    pub udp: bool,
    #[serde(default)]
    pub tcp: bool,
}

/// Frame bytes (without preamble, SFD and FCS) plus transmit metadata.
///
/// A buffer handed to the wire is consumed; there is no shared transmit ring
/// behind it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketBuffer {
    data: Vec<u8>,
    layout: Layout,
    pub crc_valid: bool,
    pub request_timestamp: bool,
    pub offload: Offload,
    seq_id: u64,
}

impl PacketBuffer {
    /// An all-zero frame with a deliberately wrong FCS, used to pad gaps.
    /// `frame_len` excludes the FCS and may be below the regular minimum.
    pub fn filler(frame_len: usize, seq_id: u64) -> Self {
        let layout = if frame_len >= Proto::Ethernet.header_len() {
            Layout::from_stack(&[Proto::Ethernet]).expect("static stack")
        } else {
            Layout::raw()
        };
        PacketBuffer {
            data: vec![0; frame_len],
            layout,
            crc_valid: false,
            request_timestamp: false,
            offload: Offload::default(),
            seq_id,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Frame length without FCS.
    pub fn frame_len(&self) -> usize {
        self.data.len()
    }

    pub fn seq_id(&self) -> u64 {
        self.seq_id
    }

    pub fn set_seq_id(&mut self, seq_id: u64) {
        self.seq_id = seq_id;
    }

    pub fn set_field(&mut self, name: &str, value: &FieldValue) -> Result<(), PacketError> {
        let field = self.layout.resolve(name)?;
        field.write(&mut self.data, value.as_uint())
    }

    pub fn field(&self, name: &str) -> Result<u128, PacketError> {
        let field = self.layout.resolve(name)?;
        Ok(field.read(&self.data))
    }

    /// Truncates or zero-pads to `len` and rewrites the length fields.
    pub fn resize(&mut self, len: usize) -> Result<(), PacketError> {
        check_length(&self.layout, len)?;
        self.data.resize(len, 0);
        self.write_lengths();
        Ok(())
    }

    fn write_structure(&mut self) {
        let layers: Vec<(Proto, usize)> = self
            .layout
            .layers()
            .iter()
            .map(|(p, o)| (*p, *o as usize))
            .collect();
        for (i, (proto, off)) in layers.iter().enumerate() {
            let next = layers.get(i + 1).map(|(p, _)| *p);
            let d = &mut self.data;
            match proto {
                Proto::Ethernet => {
                    let ethertype = match next {
                        Some(Proto::Ipv4) => ETHERTYPE_IPV4,
                        Some(Proto::Ipv6) => ETHERTYPE_IPV6,
                        Some(Proto::Ptp) => ETHERTYPE_PTP,
                        _ => 0,
                    };
                    d[off + 12..off + 14].copy_from_slice(&ethertype.to_be_bytes());
                }
                Proto::Ipv4 => {
                    d[*off] = 0x45;
                    d[off + 9] = l4_number(next);
                }
                Proto::Ipv6 => {
                    d[*off] = 0x60;
                    d[off + 6] = l4_number(next);
                }
                Proto::Tcp => {
                    // data offset of 5 words
                    d[off + 12] = 0x50;
                }
                Proto::Udp | Proto::Ptp => {}
            }
        }
        self.write_lengths();
    }

    fn write_lengths(&mut self) {
        let len = self.data.len();
        for (proto, off) in self.layout.layers().to_vec() {
            let off = off as usize;
            let field = match proto {
                Proto::Ipv4 => Some((off + 2, len - off)),
                Proto::Ipv6 => Some((off + 4, len - off - 40)),
                Proto::Udp => Some((off + 4, len - off)),
                _ => None,
            };
            if let Some((at, value)) = field {
                let value = value.min(u16::MAX as usize) as u16;
                self.data[at..at + 2].copy_from_slice(&value.to_be_bytes());
            }
        }
    }

    /// Applies offloaded checksums in place: IPv4 header first, then L4.
    pub fn fill_offloaded_checksums(&mut self) {
        if self.offload.ipv4 {
            if let Some(off) = self.layout.offset_of(Proto::Ipv4) {
                self.data[off + 10..off + 12].fill(0);
                let c = checksum::ipv4_checksum(&self.data[off..off + 20]).expect("even header");
                self.data[off + 10..off + 12].copy_from_slice(&c.to_be_bytes());
            }
        }
        for (flag, proto) in [
            (self.offload.udp, L4Proto::Udp),
            (self.offload.tcp, L4Proto::Tcp),
        ] {
            if !flag {
                continue;
            }
            if let (Ok(c), Ok(at)) = (
                checksum::l4_checksum(self, proto),
                checksum::l4_checksum_offset(self, proto),
            ) {
                self.data[at..at + 2].copy_from_slice(&c.to_be_bytes());
            }
        }
    }
}

fn l4_number(next: Option<Proto>) -> u8 {
    match next {
        Some(Proto::Udp) => IPPROTO_UDP,
        Some(Proto::Tcp) => IPPROTO_TCP,
        _ => 0,
    }
}

/// Produces the on-wire frame: offloaded checksums applied and the FCS
/// appended. An invalid FCS is the bitwise complement of the correct one, so
/// it can never verify.
pub fn materialize(buffer: &PacketBuffer) -> Vec<u8> {
    let mut tmp;
    let buf = if buffer.offload == Offload::default() {
        buffer
    } else {
        tmp = buffer.clone();
        tmp.fill_offloaded_checksums();
        &tmp
    };
    let mut out = Vec::with_capacity(buf.data.len() + 4);
    out.extend_from_slice(&buf.data);
    let fcs = checksum::crc32_fcs(&buf.data);
    let fcs = if buf.crc_valid { fcs } else { !fcs };
    out.extend_from_slice(&checksum::fcs_bytes(fcs));
    out
}

/// Hands out buffers with strictly increasing sequence ids.
#[derive(Debug)]
pub struct BufferPool {
    next_seq: u64,
    batch_capacity: usize,
}

impl Default for BufferPool {
    fn default() -> Self {
        Self::new(DEFAULT_BATCH_CAPACITY)
    }
}

impl BufferPool {
    pub fn new(batch_capacity: usize) -> Self {
        BufferPool {
            next_seq: 0,
            batch_capacity,
        }
    }

    /// Starts numbering at `first_seq`; used to keep ids of different
    /// generators apart.
    pub fn starting_at(first_seq: u64, batch_capacity: usize) -> Self {
        BufferPool {
            next_seq: first_seq,
            batch_capacity,
        }
    }

    pub fn next_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    pub fn alloc_batch(
        &mut self,
        prototype: &PacketBuffer,
        n: usize,
        size: usize,
    ) -> Result<BufBatch, PacketError> {
        if n > self.batch_capacity {
            return Err(PacketError::CapacityExceeded {
                requested: n,
                capacity: self.batch_capacity,
            });
        }
        let mut sized = prototype.clone();
        sized.resize(size)?;
        let mut batch = BufBatch::with_capacity(self.batch_capacity);
        for _ in 0..n {
            let mut buf = sized.clone();
            buf.seq_id = self.next_seq();
            batch.buffers.push(buf);
        }
        Ok(batch)
    }
}

/// A bounded batch of buffers processed together.
#[derive(Clone, Debug, Default)]
pub struct BufBatch {
    buffers: Vec<PacketBuffer>,
    capacity: usize,
}

impl BufBatch {
    pub fn with_capacity(capacity: usize) -> Self {
        BufBatch {
            buffers: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn count(&self) -> usize {
        self.buffers.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PacketBuffer> {
        self.buffers.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, PacketBuffer> {
        self.buffers.iter_mut()
    }

    pub fn get(&self, i: usize) -> Option<&PacketBuffer> {
        self.buffers.get(i)
    }

    pub fn get_mut(&mut self, i: usize) -> Option<&mut PacketBuffer> {
        self.buffers.get_mut(i)
    }
}

impl IntoIterator for BufBatch {
    type Item = PacketBuffer;
    type IntoIter = std::vec::IntoIter<PacketBuffer>;

    fn into_iter(self) -> Self::IntoIter {
        self.buffers.into_iter()
    }
}
