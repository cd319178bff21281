// SPDX-License-Identifier: Apache-2.0

//! Internet checksums and the Ethernet frame check sequence.

use super::field::{Proto, IPPROTO_TCP, IPPROTO_UDP};
use super::{PacketBuffer, PacketError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L4Proto {
    Udp,
    Tcp,
}

impl L4Proto {
    fn proto(self) -> Proto {
        match self {
            L4Proto::Udp => Proto::Udp,
            L4Proto::Tcp => Proto::Tcp,
        }
    }

    fn ip_proto(self) -> u8 {
        match self {
            L4Proto::Udp => IPPROTO_UDP,
            L4Proto::Tcp => IPPROTO_TCP,
        }
    }

    fn checksum_offset(self) -> usize {
        match self {
            L4Proto::Udp => 6,
            L4Proto::Tcp => 16,
        }
    }
}

fn add_words(mut acc: u64, data: &[u8]) -> u64 {
    let mut chunks = data.chunks_exact(2);
    for pair in &mut chunks {
        acc += u64::from(u16::from_be_bytes([pair[0], pair[1]]));
    }
    if let [last] = chunks.remainder() {
        acc += u64::from(*last) << 8;
    }
    acc
}

fn fold(mut acc: u64) -> u16 {
    while acc > 0xFFFF {
        acc = (acc & 0xFFFF) + (acc >> 16);
    }
    acc as u16
}

/// One's-complement sum of 16-bit big-endian words, without the final
/// complement. A span that includes its own correct checksum sums to 0xFFFF.
pub fn ones_complement_sum(data: &[u8]) -> u16 {
    fold(add_words(0, data))
}

/// Header checksum of an IPv4 header whose checksum field is zeroed.
pub fn ipv4_checksum(header: &[u8]) -> Result<u16, PacketError> {
    if !header.len().is_multiple_of(2) {
        return Err(PacketError::OddLength(header.len()));
    }
    Ok(!ones_complement_sum(header))
}

/// Byte range of the L4 segment: from the L4 header to the end of the IP
/// payload as declared by the IP length field (falls back to the frame end
/// when the field is unset).
fn l4_span(
    buf: &PacketBuffer,
    proto: L4Proto,
) -> Result<(usize, usize, Proto, usize), PacketError> {
    let layout = buf.layout();
    let l4 = layout
        .offset_of(proto.proto())
        .ok_or(PacketError::MissingLayer(match proto {
            L4Proto::Udp => "udp",
            L4Proto::Tcp => "tcp",
        }))?;
    let (ip, ip_off) = layout.ip().ok_or(PacketError::MissingLayer("ip"))?;
    let bytes = buf.bytes();
    let declared_end = match ip {
        Proto::Ipv4 => {
            ip_off + usize::from(u16::from_be_bytes([bytes[ip_off + 2], bytes[ip_off + 3]]))
        }
        _ => ip_off + 40 + usize::from(u16::from_be_bytes([bytes[ip_off + 4], bytes[ip_off + 5]])),
    };
    let end = if declared_end > l4 && declared_end <= bytes.len() {
        declared_end
    } else {
        bytes.len()
    };
    Ok((l4, end, ip, ip_off))
}

/// One's-complement sum over the pseudo header and the L4 segment, with or
/// without the stored checksum word.
fn l4_sum(buf: &PacketBuffer, proto: L4Proto, include_checksum: bool) -> Result<u16, PacketError> {
    let (l4, end, ip, ip_off) = l4_span(buf, proto)?;
    let bytes = buf.bytes();
    let seg_len = (end - l4) as u64;
    let mut acc = match ip {
        Proto::Ipv4 => add_words(0, &bytes[ip_off + 12..ip_off + 20]),
        _ => add_words(0, &bytes[ip_off + 8..ip_off + 40]),
    };
    acc += u64::from(proto.ip_proto());
    acc += seg_len;
    if include_checksum {
        acc = add_words(acc, &bytes[l4..end]);
    } else {
        let csum_at = l4 + proto.checksum_offset();
        acc = add_words(acc, &bytes[l4..csum_at]);
        acc = add_words(acc, &bytes[csum_at + 2..end]);
    }
    Ok(fold(acc))
}

/// UDP or TCP checksum including the IPv4/IPv6 pseudo header. The checksum
/// field inside the buffer is treated as zero. A UDP result of zero is
/// transmitted as 0xFFFF.
pub fn l4_checksum(buf: &PacketBuffer, proto: L4Proto) -> Result<u16, PacketError> {
    let csum = !l4_sum(buf, proto, false)?;
    Ok(match (proto, csum) {
        (L4Proto::Udp, 0) => 0xFFFF,
        (_, c) => c,
    })
}

/// Byte offset of the L4 checksum field.
pub(crate) fn l4_checksum_offset(buf: &PacketBuffer, proto: L4Proto) -> Result<usize, PacketError> {
    l4_span(buf, proto).map(|(l4, ..)| l4 + proto.checksum_offset())
}

/// Verification sum over pseudo header and segment, checksum included.
/// Equals 0xFFFF when the stored checksum is correct.
pub fn l4_verify(buf: &PacketBuffer, proto: L4Proto) -> Result<u16, PacketError> {
    l4_sum(buf, proto, true)
}

/// IEEE 802.3 CRC-32 (reflected, init and xorout 0xFFFFFFFF).
pub fn crc32_fcs(frame: &[u8]) -> u32 {
    crc32fast::hash(frame)
}

/// The FCS is transmitted least significant byte first.
pub fn fcs_bytes(fcs: u32) -> [u8; 4] {
    fcs.to_le_bytes()
}

/// Shift-register residue of a frame that carries its FCS, in the
/// non-reflected form. A frame with a correct FCS yields [`FCS_RESIDUE`].
pub fn fcs_residue(frame_with_fcs: &[u8]) -> u32 {
    (crc32fast::hash(frame_with_fcs) ^ 0xFFFF_FFFF).reverse_bits()
}

pub const FCS_RESIDUE: u32 = 0xC704_DD7B;

/// True when the trailing four octets are the correct FCS of the rest.
pub fn fcs_valid(frame_with_fcs: &[u8]) -> bool {
    match frame_with_fcs.len().checked_sub(4) {
        Some(body) => {
            let stored = u32::from_le_bytes(frame_with_fcs[body..].try_into().unwrap());
            crc32_fcs(&frame_with_fcs[..body]) == stored
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_header_checksum() {
        assert_eq!(ipv4_checksum(&[0u8; 20]).unwrap(), 0xFFFF);
        assert!(matches!(
            ipv4_checksum(&[0u8; 19]),
            Err(PacketError::OddLength(19))
        ));
    }

    #[test]
    fn known_ipv4_header() {
        // classic example header with checksum 0xB861
        let mut h = [
            0x45, 0x00, 0x00, 0x73, 0x00, 0x00, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00, 0xc0, 0xa8,
            0x00, 0x01, 0xc0, 0xa8, 0x00, 0xc7,
        ];
        let c = ipv4_checksum(&h).unwrap();
        assert_eq!(c, 0xB861);
        h[10..12].copy_from_slice(&c.to_be_bytes());
        assert_eq!(ones_complement_sum(&h), 0xFFFF);
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc32_fcs(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn residue_of_valid_frame() {
        let body = b"hello, wire";
        let mut frame = body.to_vec();
        frame.extend_from_slice(&fcs_bytes(crc32_fcs(body)));
        assert_eq!(fcs_residue(&frame), FCS_RESIDUE);
        assert!(fcs_valid(&frame));
        let n = frame.len();
        frame[n - 1] ^= 1;
        assert!(!fcs_valid(&frame));
        assert!(!fcs_valid(&[1, 2, 3]));
    }
}
