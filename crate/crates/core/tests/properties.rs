// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use mgsim_core::dutsim::{forward, DutModel};
use mgsim_core::measure::Histogram;
use mgsim_core::packet::{
    crc32_fcs, fcs_valid, ipv4_checksum, l4_checksum, materialize, L4Proto, Offload,
    PacketTemplate, Proto,
};
use mgsim_core::ratectl::{gapfill_encode, GapEntry, GapParams};
use mgsim_core::wireclock::{byte_time, sync_clocks, ClockModel, PortClock, SyncConfig};
use mgsim_core::SimTime;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clock_model() -> impl Strategy<Value = ClockModel> {
    prop_oneof![
        Just(ClockModel::X540),
        Just(ClockModel::I82599),
        Just(ClockModel::I82580)
    ]
}

proptest! {
    #[test]
    fn crc_matches_bitwise(data in proptest::collection::vec(any::<u8>(), 0..2000)) {
        prop_assert_eq!(crc32_fcs(&data), crc32_bitwise(&data));
    }

    #[test]
    fn ipv4_checksum_matches_and_verifies(mut header in proptest::collection::vec(any::<u8>(), 20..=20)) {
        header[10..12].fill(0);
        let c = ipv4_checksum(&header).unwrap();
        prop_assert_eq!(c, ipv4_checksum_naive(&header));
        header[10..12].copy_from_slice(&c.to_be_bytes());
        prop_assert_eq!(ones_sum_naive(&header), 0xFFFF);
    }

    #[test]
    fn materialized_frames_carry_valid_checksums(
        v6 in any::<bool>(),
        tcp in any::<bool>(),
        len in 80usize..=1514,
        payload in proptest::collection::vec(any::<u8>(), 0..1500),
    ) {
        let ip = if v6 { Proto::Ipv6 } else { Proto::Ipv4 };
        let l4 = if tcp { Proto::Tcp } else { Proto::Udp };
        let mut buf = PacketTemplate::new([Proto::Ethernet, ip, l4], len).make().unwrap();
        buf.offload = Offload { ipv4: true, udp: true, tcp: true };
        let header_end = 14 + if v6 { 40 } else { 20 } + if tcp { 20 } else { 8 };
        for (b, p) in buf.bytes_mut()[header_end..].iter_mut().zip(&payload) {
            *b = *p;
        }
        let frame = materialize(&buf);
        prop_assert_eq!(frame.len(), len + 4);
        prop_assert!(fcs_valid(&frame));
        let body = &frame[..len];
        let at = header_end - if tcp { 4 } else { 2 };
        let stored = u16::from_be_bytes([body[at], body[at + 1]]);
        prop_assert_eq!(stored, l4_checksum_naive(body));
        let kind = if tcp { L4Proto::Tcp } else { L4Proto::Udp };
        prop_assert_eq!(l4_checksum(&buf, kind).unwrap(), stored);
        if !v6 {
            prop_assert_eq!(ones_sum_naive(&body[14..34]), 0xFFFF);
        }
    }

    #[test]
    fn gapfill_conserves_time(deltas_ns in proptest::collection::vec(68.0f64..20_000.0, 1..300)) {
        let params = GapParams::default();
        let deltas: Vec<SimTime> = deltas_ns.iter().map(|d| SimTime::from_ns_f64(*d)).collect();
        let plan = gapfill_encode(&deltas, 84, TEN_GBE, &params).unwrap();
        prop_assert_eq!(plan.payload_count(), deltas.len());
        for e in &plan.entries {
            if let GapEntry::Filler { wire_len } = e {
                prop_assert!(*wire_len as usize >= params.min_filler_wire);
                prop_assert!(*wire_len as usize <= params.max_filler_wire);
            }
        }
        // whatever was not sent yet is carried as a bounded deficit
        let requested = plan.requested.ticks() as i128;
        let emitted = plan.duration().ticks() as i128;
        let owed = (plan.deficit_bytes * byte_time(TEN_GBE).ticks() as f64) as i128;
        let bound = byte_time(TEN_GBE).ticks() as i128 * 2;
        prop_assert!((requested - emitted - owed).abs() <= bound, "{requested} {emitted} {owed}");
        prop_assert!(plan.deficit_bytes < params.min_filler_wire as f64 + 1.0);
    }

    #[test]
    fn sync_leaves_one_step(
        model in clock_model(),
        pa in 0u8..8,
        pb in 0u8..8,
        offset in -1_000_000_000_000i64..1_000_000_000_000,
        start in 0i64..1_000_000_000_000_000,
        later in 0i64..10_000_000_000,
        seed in any::<u64>(),
    ) {
        let a = PortClock::preset(model).with_reset_phase(pa);
        let mut b = PortClock::preset(model).with_reset_phase(pb).with_offset(SimTime::from_ticks(offset));
        let config = SyncConfig { outlier_rate: 0.0, ..SyncConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = sync_clocks(&a, &mut b, SimTime::from_ticks(start), &config, &mut rng);
        let t = report.finished_at + SimTime::from_ticks(later);
        prop_assert!((b.read(t) - a.read(t)).abs() <= a.step());

        // a second sync barely moves an already synchronized clock
        let again = sync_clocks(&a, &mut b, t, &config, &mut rng);
        prop_assert!(again.adjustment.abs() <= a.step());
    }

    #[test]
    fn dut_is_fifo_and_conserving(
        gaps_ns in proptest::collection::vec(0u32..2000, 1..2000),
        rate in 1e5f64..5e6,
        buffer in 1usize..64,
    ) {
        let model = DutModel { service_rate_pps: rate, buffer_pkts: buffer, ..DutModel::default() };
        let mut t = SimTime::ZERO;
        let arrivals: Vec<(SimTime, u64)> = gaps_ns
            .iter()
            .enumerate()
            .map(|(i, g)| {
                t += SimTime::from_ns(i64::from(*g));
                (t, i as u64)
            })
            .collect();
        let out = forward(arrivals.clone(), &model).unwrap();
        prop_assert_eq!(out.departures.len() as u64 + out.drops, arrivals.len() as u64);
        let service = model.service_time();
        for w in out.departures.windows(2) {
            prop_assert!(w[0].seq_id < w[1].seq_id);
            prop_assert!(w[1].departure - w[0].departure >= service);
        }
        for d in &out.departures {
            prop_assert!(d.residence() >= service);
            prop_assert!(d.residence() <= service * buffer as i64);
        }
    }

    #[test]
    fn histogram_counts_everything(values in proptest::collection::vec(0i64..100_000, 1..500)) {
        let mut h = Histogram::new(SimTime::from_ns(64));
        for v in &values {
            h.add(SimTime::from_ns(*v));
        }
        prop_assert_eq!(h.total(), values.len() as u64);
        prop_assert_eq!(h.bins().map(|(_, c)| c).sum::<u64>(), values.len() as u64);
        let min = *values.iter().min().unwrap();
        let max = *values.iter().max().unwrap();
        let median = h.median().unwrap();
        prop_assert!(median >= SimTime::from_ns(min) && median <= SimTime::from_ns(max));
    }
}
