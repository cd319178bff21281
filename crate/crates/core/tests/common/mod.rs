// SPDX-License-Identifier: Apache-2.0

//! Reference implementations and fixtures shared by the integration tests.
//! The oracles are deliberately naive: bit by bit, word by word.

#![allow(dead_code)]

use mgsim_core::runtime::Scenario;
use serde_json::{json, Value};

/// CRC-32 (IEEE 802.3), one bit at a time.
pub fn crc32_bitwise(data: &[u8]) -> u32 {
    let mut crc: u32 = 0xFFFF_FFFF;
    for &byte in data {
        for bit in 0..8 {
            let b = u32::from((byte >> bit) & 1);
            let top = crc & 1;
            crc >>= 1;
            if top ^ b == 1 {
                crc ^= 0xEDB8_8320;
            }
        }
    }
    !crc
}

/// 16-bit one's complement sum with the carry folded after every word.
pub fn ones_sum_naive(data: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut i = 0;
    while i < data.len() {
        let hi = u32::from(data[i]);
        let lo = if i + 1 < data.len() {
            u32::from(data[i + 1])
        } else {
            0
        };
        sum += (hi << 8) | lo;
        if sum > 0xFFFF {
            sum = (sum & 0xFFFF) + 1;
        }
        i += 2;
    }
    sum as u16
}

pub fn ipv4_checksum_naive(header: &[u8]) -> u16 {
    let mut h = header.to_vec();
    h[10] = 0;
    h[11] = 0;
    !ones_sum_naive(&h)
}

/// UDP/TCP checksum of an Ethernet frame (no FCS) carrying IPv4 or IPv6
/// without extension headers.
pub fn l4_checksum_naive(frame: &[u8]) -> u16 {
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    let ip = &frame[14..];
    let (mut pseudo, proto, segment) = match ethertype {
        0x0800 => {
            let ihl = usize::from(ip[0] & 0x0F) * 4;
            let total = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
            (ip[12..20].to_vec(), ip[9], ip[ihl..total].to_vec())
        }
        0x86DD => {
            let payload = usize::from(u16::from_be_bytes([ip[4], ip[5]]));
            (ip[8..40].to_vec(), ip[6], ip[40..40 + payload].to_vec())
        }
        other => panic!("not an IP frame: {other:#06x}"),
    };
    let len = segment.len() as u32;
    pseudo.push(0);
    pseudo.push(proto);
    pseudo.extend_from_slice(&(len as u16).to_be_bytes());
    if len > 0xFFFF {
        panic!("segment too long");
    }
    let mut seg = segment;
    let at = if proto == 17 { 6 } else { 16 };
    seg[at] = 0;
    seg[at + 1] = 0;
    let mut all = pseudo;
    all.extend_from_slice(&seg);
    let c = !ones_sum_naive(&all);
    if proto == 17 && c == 0 {
        0xFFFF
    } else {
        c
    }
}

pub const TEN_GBE: u64 = 10_000_000_000;

/// Two directly cabled X540 ports, `gen` and `sink`, plus the given tasks.
pub fn pair(seed: u64, tasks: Vec<Value>) -> Scenario {
    pair_with(
        seed,
        json!([{ "id": "gen", "clock": "X540" }, { "id": "sink", "clock": "X540" }]),
        tasks,
    )
}

pub fn pair_with(seed: u64, devices: Value, tasks: Vec<Value>) -> Scenario {
    let doc = json!({
        "version": 1,
        "seed": seed,
        "devices": devices,
        "links": [{ "a": "gen", "b": "sink", "length_m": 2.0, "vp_fraction": 0.72, "k_ns": 310.7 }],
        "tasks": tasks,
    });
    Scenario::from_json(&doc.to_string()).expect("fixture scenario is valid")
}

/// Generator → DuT → sink chain over two cables.
pub fn dut_chain(seed: u64, generator: Value, dut_model: Value, counter: Value) -> Scenario {
    let doc = json!({
        "version": 1,
        "seed": seed,
        "devices": [
            { "id": "gen", "clock": "X540" },
            { "id": "dut_in", "clock": "X540" },
            { "id": "dut_out", "clock": "X540" },
            { "id": "sink", "clock": "X540" }
        ],
        "links": [
            { "a": "gen", "b": "dut_in", "length_m": 2.0, "vp_fraction": 0.72, "k_ns": 310.7 },
            { "a": "dut_out", "b": "sink", "length_m": 2.0, "vp_fraction": 0.72, "k_ns": 310.7 }
        ],
        "tasks": [
            generator,
            { "kind": "dut", "id": "dut", "ingress": "dut_in",
              "egress": { "device": "dut_out", "queue": 0 }, "model": dut_model },
            counter
        ],
    });
    Scenario::from_json(&doc.to_string()).expect("fixture scenario is valid")
}
