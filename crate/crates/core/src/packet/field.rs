// SPDX-License-Identifier: Apache-2.0

//! Protocol stacks, header layouts and dotted field names.

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PacketError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Ethernet,
    Ipv4,
    Ipv6,
    Udp,
    Tcp,
    Ptp,
}

impl Proto {
    pub const fn header_len(self) -> usize {
        match self {
            Proto::Ethernet => 14,
            Proto::Ipv4 => 20,
            Proto::Ipv6 => 40,
            Proto::Udp => 8,
            Proto::Tcp => 20,
            // common header plus the 10-byte origin timestamp of a Sync message
            Proto::Ptp => 44,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Proto::Ethernet => "eth",
            Proto::Ipv4 => "ip4",
            Proto::Ipv6 => "ip6",
            Proto::Udp => "udp",
            Proto::Tcp => "tcp",
            Proto::Ptp => "ptp",
        }
    }
}

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
pub const ETHERTYPE_PTP: u16 = 0x88F7;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;
pub const PTP_UDP_EVENT_PORT: u16 = 319;

const MAX_LAYERS: usize = 4;

/// Byte offsets of each header in a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    layers: [(Proto, u16); MAX_LAYERS],
    len: u8,
}

impl Layout {
    /// A frame without any parsed headers (short filler frames).
    pub const fn raw() -> Self {
        Layout {
            layers: [(Proto::Ethernet, 0); MAX_LAYERS],
            len: 0,
        }
    }

    /// Validates the stack order: Ethernet, then an optional IP layer, an
    /// optional UDP/TCP layer (requires IP), and an optional PTP payload
    /// (directly on Ethernet or on UDP).
    pub fn from_stack(stack: &[Proto]) -> Result<Self, PacketError> {
        let bad = |why: &str| PacketError::InvalidStack(format!("{stack:?}: {why}"));
        if stack.first() != Some(&Proto::Ethernet) {
            return Err(bad("must start with Ethernet"));
        }
        if stack.len() > MAX_LAYERS {
            return Err(bad("too many layers"));
        }
        for pair in stack.windows(2) {
            let ok = matches!(
                (pair[0], pair[1]),
                (Proto::Ethernet, Proto::Ipv4 | Proto::Ipv6 | Proto::Ptp)
                    | (Proto::Ipv4 | Proto::Ipv6, Proto::Udp | Proto::Tcp)
                    | (Proto::Udp, Proto::Ptp)
            );
            if !ok {
                return Err(bad(&format!("{:?} cannot follow {:?}", pair[1], pair[0])));
            }
        }
        let mut layout = Layout::raw();
        let mut offset = 0u16;
        for (i, proto) in stack.iter().enumerate() {
            layout.layers[i] = (*proto, offset);
            offset += proto.header_len() as u16;
        }
        layout.len = stack.len() as u8;
        Ok(layout)
    }

    pub fn layers(&self) -> &[(Proto, u16)] {
        &self.layers[..self.len as usize]
    }

    pub fn stack(&self) -> impl Iterator<Item = Proto> + '_ {
        self.layers().iter().map(|(p, _)| *p)
    }

    pub fn offset_of(&self, proto: Proto) -> Option<usize> {
        self.layers()
            .iter()
            .find(|(p, _)| *p == proto)
            .map(|(_, o)| *o as usize)
    }

    pub fn contains(&self, proto: Proto) -> bool {
        self.offset_of(proto).is_some()
    }

    /// Sum of all header lengths.
    pub fn header_len(&self) -> usize {
        self.layers().iter().map(|(p, _)| p.header_len()).sum()
    }

    pub fn ip(&self) -> Option<(Proto, usize)> {
        self.layers()
            .iter()
            .find(|(p, _)| matches!(p, Proto::Ipv4 | Proto::Ipv6))
            .map(|(p, o)| (*p, *o as usize))
    }

    /// Resolves a dotted name (`udp.dstPort`) or a legacy alias (`udpDst`).
    pub fn resolve(&self, name: &str) -> Result<FieldRef, PacketError> {
        let def = lookup(name, self).ok_or_else(|| PacketError::UnknownField(name.to_string()))?;
        let base = self
            .offset_of(def.proto)
            .ok_or_else(|| PacketError::UnknownField(name.to_string()))?;
        Ok(FieldRef {
            def,
            offset: base + def.offset as usize,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Uint(u8),
    Mac,
    Ipv4,
    Ipv6,
    /// Low `bits` of a big-endian u32.
    Masked32 {
        bits: u8,
    },
}

impl FieldKind {
    pub fn width(self) -> usize {
        match self {
            FieldKind::Uint(n) => n as usize,
            FieldKind::Mac => 6,
            FieldKind::Ipv4 => 4,
            FieldKind::Ipv6 => 16,
            FieldKind::Masked32 { .. } => 4,
        }
    }

    pub fn max_value(self) -> u128 {
        match self {
            FieldKind::Masked32 { bits } => (1u128 << bits) - 1,
            other => {
                let bits = other.width() * 8;
                if bits >= 128 {
                    u128::MAX
                } else {
                    (1u128 << bits) - 1
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldDef {
    pub proto: Proto,
    pub name: &'static str,
    pub offset: u16,
    pub kind: FieldKind,
}

const fn def(proto: Proto, name: &'static str, offset: u16, kind: FieldKind) -> FieldDef {
    FieldDef {
        proto,
        name,
        offset,
        kind,
    }
}

use FieldKind::{Masked32, Uint};

pub static FIELDS: &[FieldDef] = &[
    def(Proto::Ethernet, "dst", 0, FieldKind::Mac),
    def(Proto::Ethernet, "src", 6, FieldKind::Mac),
    def(Proto::Ethernet, "type", 12, Uint(2)),
    def(Proto::Ipv4, "tos", 1, Uint(1)),
    def(Proto::Ipv4, "len", 2, Uint(2)),
    def(Proto::Ipv4, "id", 4, Uint(2)),
    def(Proto::Ipv4, "ttl", 8, Uint(1)),
    def(Proto::Ipv4, "proto", 9, Uint(1)),
    def(Proto::Ipv4, "checksum", 10, Uint(2)),
    def(Proto::Ipv4, "src", 12, FieldKind::Ipv4),
    def(Proto::Ipv4, "dst", 16, FieldKind::Ipv4),
    def(Proto::Ipv6, "flowLabel", 0, Masked32 { bits: 20 }),
    def(Proto::Ipv6, "len", 4, Uint(2)),
    def(Proto::Ipv6, "nextHeader", 6, Uint(1)),
    def(Proto::Ipv6, "hopLimit", 7, Uint(1)),
    def(Proto::Ipv6, "src", 8, FieldKind::Ipv6),
    def(Proto::Ipv6, "dst", 24, FieldKind::Ipv6),
    def(Proto::Udp, "srcPort", 0, Uint(2)),
    def(Proto::Udp, "dstPort", 2, Uint(2)),
    def(Proto::Udp, "len", 4, Uint(2)),
    def(Proto::Udp, "checksum", 6, Uint(2)),
    def(Proto::Tcp, "srcPort", 0, Uint(2)),
    def(Proto::Tcp, "dstPort", 2, Uint(2)),
    def(Proto::Tcp, "seq", 4, Uint(4)),
    def(Proto::Tcp, "ack", 8, Uint(4)),
    def(Proto::Tcp, "flags", 13, Uint(1)),
    def(Proto::Tcp, "window", 14, Uint(2)),
    def(Proto::Tcp, "checksum", 16, Uint(2)),
    def(Proto::Ptp, "messageType", 0, Uint(1)),
    def(Proto::Ptp, "version", 1, Uint(1)),
    def(Proto::Ptp, "sequenceId", 30, Uint(2)),
];

/// Legacy camel-case names. `ip*` aliases bind to whichever IP version is
/// present in the stack.
fn alias(name: &str, layout: &Layout) -> Option<(Proto, &'static str)> {
    let ip = match layout.ip() {
        Some((p, _)) => p,
        None => Proto::Ipv4,
    };
    Some(match name {
        "ethDst" => (Proto::Ethernet, "dst"),
        "ethSrc" => (Proto::Ethernet, "src"),
        "ethType" => (Proto::Ethernet, "type"),
        "ipSrc" => (ip, "src"),
        "ipDst" => (ip, "dst"),
        "ip4Src" => (Proto::Ipv4, "src"),
        "ip4Dst" => (Proto::Ipv4, "dst"),
        "ip6Src" => (Proto::Ipv6, "src"),
        "ip6Dst" => (Proto::Ipv6, "dst"),
        "ipTTL" => (Proto::Ipv4, "ttl"),
        "udpSrc" => (Proto::Udp, "srcPort"),
        "udpDst" => (Proto::Udp, "dstPort"),
        "tcpSrc" => (Proto::Tcp, "srcPort"),
        "tcpDst" => (Proto::Tcp, "dstPort"),
        "ptpMessageType" => (Proto::Ptp, "messageType"),
        "ptpVersion" => (Proto::Ptp, "version"),
        _ => return None,
    })
}

fn lookup(name: &str, layout: &Layout) -> Option<FieldDef> {
    let (proto, field) = match name.split_once('.') {
        Some((prefix, field)) => {
            let proto = [
                Proto::Ethernet,
                Proto::Ipv4,
                Proto::Ipv6,
                Proto::Udp,
                Proto::Tcp,
                Proto::Ptp,
            ]
            .into_iter()
            .find(|p| p.prefix() == prefix)?;
            (proto, field)
        }
        None => alias(name, layout)?,
    };
    FIELDS
        .iter()
        .copied()
        .find(|d| d.proto == proto && d.name == field)
}

/// A field resolved against a concrete layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldRef {
    pub def: FieldDef,
    pub offset: usize,
}

impl FieldRef {
    pub fn read(&self, bytes: &[u8]) -> u128 {
        let width = self.def.kind.width();
        let raw = bytes[self.offset..self.offset + width]
            .iter()
            .fold(0u128, |acc, b| (acc << 8) | u128::from(*b));
        raw & self.def.kind.max_value()
    }

    pub fn write(&self, bytes: &mut [u8], value: u128) -> Result<(), PacketError> {
        let kind = self.def.kind;
        if value > kind.max_value() {
            return Err(PacketError::ValueOutOfRange {
                field: format!("{}.{}", self.def.proto.prefix(), self.def.name),
                value,
            });
        }
        let width = kind.width();
        let slot = &mut bytes[self.offset..self.offset + width];
        let value = match kind {
            FieldKind::Masked32 { .. } => {
                let keep = slot
                    .iter()
                    .fold(0u128, |acc, b| (acc << 8) | u128::from(*b))
                    & !kind.max_value();
                keep | value
            }
            _ => value,
        };
        for (i, byte) in slot.iter_mut().enumerate() {
            *byte = (value >> (8 * (width - 1 - i))) as u8;
        }
        Ok(())
    }
}

/// A header field value as written in templates and scenario files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldValue {
    Int(u128),
    Mac([u8; 6]),
    Ipv4(Ipv4Addr),
    Ipv6(Ipv6Addr),
}

impl FieldValue {
    pub fn as_uint(&self) -> u128 {
        match self {
            FieldValue::Int(v) => *v,
            FieldValue::Mac(m) => m.iter().fold(0u128, |acc, b| (acc << 8) | u128::from(*b)),
            FieldValue::Ipv4(a) => u128::from(u32::from(*a)),
            FieldValue::Ipv6(a) => u128::from(*a),
        }
    }
}

impl From<u64> for FieldValue {
    fn from(v: u64) -> Self {
        FieldValue::Int(u128::from(v))
    }
}

impl From<Ipv4Addr> for FieldValue {
    fn from(v: Ipv4Addr) -> Self {
        FieldValue::Ipv4(v)
    }
}

impl From<Ipv6Addr> for FieldValue {
    fn from(v: Ipv6Addr) -> Self {
        FieldValue::Ipv6(v)
    }
}

fn parse_mac(s: &str) -> Option<[u8; 6]> {
    let mut out = [0u8; 6];
    let mut parts = s.split([':', '-']);
    for slot in out.iter_mut() {
        let part = parts.next()?;
        if part.len() != 2 {
            return None;
        }
        *slot = u8::from_str_radix(part, 16).ok()?;
    }
    parts.next().is_none().then_some(out)
}

impl FromStr for FieldValue {
    type Err = PacketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(a) = s.parse::<Ipv4Addr>() {
            return Ok(FieldValue::Ipv4(a));
        }
        if let Some(m) = parse_mac(s) {
            return Ok(FieldValue::Mac(m));
        }
        if let Ok(a) = s.parse::<Ipv6Addr>() {
            return Ok(FieldValue::Ipv6(a));
        }
        let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => u128::from_str_radix(hex, 16),
            None => s.parse::<u128>(),
        };
        parsed
            .map(FieldValue::Int)
            .map_err(|_| PacketError::InvalidValue(s.to_string()))
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Int(v) => write!(f, "{v}"),
            FieldValue::Mac(m) => write!(
                f,
                "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
                m[0], m[1], m[2], m[3], m[4], m[5]
            ),
            FieldValue::Ipv4(a) => write!(f, "{a}"),
            FieldValue::Ipv6(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for FieldValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FieldValue::Int(v) if *v <= u128::from(u64::MAX) => serializer.serialize_u64(*v as u64),
            other => serializer.collect_str(other),
        }
    }
}

impl<'de> Deserialize<'de> for FieldValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(n) => Ok(FieldValue::Int(u128::from(n))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_order_is_checked() {
        assert!(Layout::from_stack(&[Proto::Ethernet, Proto::Ipv4, Proto::Udp]).is_ok());
        assert!(Layout::from_stack(&[Proto::Ethernet, Proto::Ptp]).is_ok());
        assert!(Layout::from_stack(&[Proto::Ipv4]).is_err());
        assert!(Layout::from_stack(&[Proto::Ethernet, Proto::Udp]).is_err());
        assert!(
            Layout::from_stack(&[Proto::Ethernet, Proto::Ipv4, Proto::Tcp, Proto::Ptp]).is_err()
        );
    }

    #[test]
    fn aliases_follow_ip_version() {
        let v6 = Layout::from_stack(&[Proto::Ethernet, Proto::Ipv6, Proto::Udp]).unwrap();
        assert_eq!(v6.resolve("ipDst").unwrap().offset, 14 + 24);
        let v4 = Layout::from_stack(&[Proto::Ethernet, Proto::Ipv4, Proto::Udp]).unwrap();
        assert_eq!(v4.resolve("ipDst").unwrap().offset, 14 + 16);
        assert_eq!(
            v4.resolve("udp.dstPort").unwrap(),
            v4.resolve("udpDst").unwrap()
        );
        assert!(matches!(
            v4.resolve("tcp.seq"),
            Err(PacketError::UnknownField(_))
        ));
        assert!(matches!(
            v4.resolve("bogus"),
            Err(PacketError::UnknownField(_))
        ));
    }

    #[test]
    fn value_parsing() {
        assert_eq!(
            "192.168.1.1".parse::<FieldValue>().unwrap(),
            FieldValue::Ipv4(Ipv4Addr::new(192, 168, 1, 1))
        );
        assert_eq!(
            "10:11:12:13:14:15".parse::<FieldValue>().unwrap(),
            FieldValue::Mac([0x10, 0x11, 0x12, 0x13, 0x14, 0x15])
        );
        assert_eq!("0x2a".parse::<FieldValue>().unwrap(), FieldValue::Int(42));
        assert_eq!(
            "fe80::1".parse::<FieldValue>().unwrap().as_uint(),
            0xfe80_u128 << 112 | 1
        );
        assert!("ten".parse::<FieldValue>().is_err());
    }

    #[test]
    fn masked_write_keeps_neighbour_bits() {
        let layout = Layout::from_stack(&[Proto::Ethernet, Proto::Ipv6]).unwrap();
        let field = layout.resolve("ip6.flowLabel").unwrap();
        let mut bytes = vec![0u8; 60];
        bytes[14] = 0x60;
        field.write(&mut bytes, 0xABCDE).unwrap();
        assert_eq!(&bytes[14..18], &[0x60, 0x0A, 0xBC, 0xDE]);
        assert_eq!(field.read(&bytes), 0xABCDE);
        assert!(field.write(&mut bytes, 1 << 20).is_err());
    }
}
