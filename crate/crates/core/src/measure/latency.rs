// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::timestamp::{PtpFilter, TimestampRegister};
use super::MeasureError;
use crate::dutsim::{DutModel, DutQueue, DutStats};
use crate::packet::{materialize, FieldValue, PacketBuffer, PacketTemplate, Proto};
use crate::ratectl::{PacedSource, Pattern, PatternSource};
use crate::time::SimTime;
use crate::wireclock::link::SPEED_OF_LIGHT;
use crate::wireclock::{sync_clocks, wire_length, LinkModel, PortClock, SyncConfig};

/// One timestamped round: both timestamps in their port's clock domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub seq_id: u64,
    pub tx_ts: SimTime,
    pub rx_ts: SimTime,
    pub latency: SimTime,
    /// Start-of-frame to start-of-frame in simulation time.
    pub true_latency: SimTime,
}

/// What the probe crosses between the two ports.
#[derive(Clone, Debug, PartialEq)]
pub enum TrafficContext {
    /// Direct cable between the ports.
    Loopback,
    Dut(DutPath),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DutPath {
    pub model: DutModel,
    /// Cable from the device to the receiving port.
    pub egress: LinkModel,
    /// Regular traffic entering the device from other queues.
    pub background: Option<Pattern>,
    /// Frame length of the background traffic, FCS included.
    pub background_frame_len: usize,
}

impl DutPath {
    pub fn new(model: DutModel, egress: LinkModel) -> Self {
        DutPath {
            model,
            egress,
            background: None,
            background_frame_len: 64,
        }
    }
}

/// Latency measurement between two ports, one timestamped packet at a time.
#[derive(Clone, Debug)]
pub struct LatencyProbe {
    pub link: LinkModel,
    pub tx_clock: PortClock,
    pub rx_clock: PortClock,
    /// Resynchronization before every sample; `None` keeps the clocks as
    /// they are.
    pub sync: Option<SyncConfig>,
    pub filter: PtpFilter,
    pub template: PacketTemplate,
    pub start: SimTime,
    /// Idle time after a read-back before the next round.
    pub pause: SimTime,
    /// How long to wait for a probe that never arrives.
    pub timeout: SimTime,
}

impl LatencyProbe {
    pub fn new(link: LinkModel, tx_clock: PortClock, rx_clock: PortClock) -> Self {
        LatencyProbe {
            link,
            tx_clock,
            rx_clock,
            sync: Some(SyncConfig::default()),
            filter: PtpFilter::default(),
            template: ptp_udp_template(),
            start: SimTime::ZERO,
            pause: SimTime::from_ns(1_000),
            timeout: SimTime::from_ns(10_000_000),
        }
    }
}

/// UDP PTP event message of 86 bytes (90 on the wire with FCS).
pub fn ptp_udp_template() -> PacketTemplate {
    PacketTemplate::new([Proto::Ethernet, Proto::Ipv4, Proto::Udp, Proto::Ptp], 86)
        .with("udp.dstPort", FieldValue::Int(319))
        .with("udp.srcPort", FieldValue::Int(319))
        .with("ptp.version", FieldValue::Int(2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyRun {
    pub samples: Vec<LatencySample>,
    /// Probes that never reached the receiver.
    pub timeouts: u64,
    /// Events that found a register still occupied.
    pub register_losses: u64,
    pub dut: Option<DutStats>,
    /// Simulation time after the last round.
    pub finished_at: SimTime,
}

struct Background {
    source: PacedSource,
    next: SimTime,
}

impl Background {
    fn feed_until<R: Rng + ?Sized>(&mut self, t: SimTime, queue: &mut DutQueue, rng: &mut R) {
        while self.next <= t {
            queue.offer(self.next);
            match self.source.next_interdeparture(rng) {
                Ok(d) => self.next += d,
                Err(_) => {
                    self.next = SimTime::MAX;
                    break;
                }
            }
        }
    }
}

/// Runs `n_samples` rounds of sync, probe and read-back.
///
/// Each probe departs on the transmit port's event grid; where the timer
/// ticks slower than the grid, the cycle it departs in is drawn at random.
/// The receive timestamp is latched at the next edge of the receiver's grid.
pub fn measure_latency<R: Rng + ?Sized>(
    probe: &LatencyProbe,
    n_samples: usize,
    context: &TrafficContext,
    rng: &mut R,
) -> Result<LatencyRun, MeasureError> {
    probe
        .link
        .validate()
        .map_err(|e| MeasureError::Config(e.to_string()))?;
    let prototype = probe
        .template
        .make()
        .map_err(|e| MeasureError::Config(e.to_string()))?;
    if !probe.filter.matches(&materialize(&prototype)) {
        return Err(MeasureError::NotTimestamped);
    }
    let frame_wire = wire_length(prototype.frame_len() + crate::wireclock::link::FCS_LEN);

    let tx_clock = probe.tx_clock.clone();
    let mut rx_clock = probe.rx_clock.clone();
    let mut tx_reg = TimestampRegister::new();
    let mut rx_reg = TimestampRegister::new();
    let (mut dut, mut background) = match context {
        TrafficContext::Loopback => (None, None),
        TrafficContext::Dut(path) => {
            path.egress
                .validate()
                .map_err(|e| MeasureError::Config(e.to_string()))?;
            let queue = DutQueue::new(path.model.clone())
                .map_err(|e| MeasureError::Config(e.to_string()))?;
            let bg = match &path.background {
                Some(p) => {
                    let min_gap = probe
                        .link
                        .serialization(wire_length(path.background_frame_len));
                    let source = PatternSource::new(p.clone())
                        .map_err(|e| MeasureError::Config(e.to_string()))?;
                    let mut source = PacedSource::new(source, min_gap);
                    let first = source
                        .next_interdeparture(rng)
                        .map_err(|e| MeasureError::Config(e.to_string()))?;
                    Some(Background {
                        source,
                        next: probe.start + first,
                    })
                }
                None => None,
            };
            (Some((queue, path)), bg)
        }
    };

    let cycles = if tx_clock.timer_step > tx_clock.granularity {
        (tx_clock.timer_step.ticks() / tx_clock.granularity.ticks()).max(1)
    } else {
        1
    };
    let propagation = probe.link.propagation_delay();
    let serialization = probe.link.serialization(frame_wire);

    let mut cursor = probe.start;
    let mut samples = Vec::with_capacity(n_samples);
    let mut timeouts = 0;
    for i in 0..n_samples as u64 {
        if let Some(cfg) = &probe.sync {
            cursor = sync_clocks(&tx_clock, &mut rx_clock, cursor, cfg, rng).finished_at;
        }
        let departure = cursor.ceil_to(tx_clock.granularity, SimTime::ZERO)
            + tx_clock.granularity * rng.gen_range(0..cycles);
        tx_reg.latch(tx_clock.read(departure), i);

        let sof_at_peer = departure + propagation + probe.link.jitter.sample(rng);
        let rx_sof = match &mut dut {
            None => Some(sof_at_peer),
            Some((queue, path)) => {
                let ingress = sof_at_peer + serialization;
                if let Some(bg) = background.as_mut() {
                    bg.feed_until(ingress, queue, rng);
                }
                queue.offer(ingress).map(|out| {
                    out + path.egress.propagation_delay() + path.egress.jitter.sample(rng)
                })
            }
        };
        let Some(rx_sof) = rx_sof else {
            timeouts += 1;
            tx_reg.read_back();
            cursor = departure + probe.timeout;
            continue;
        };
        let rx_phase = match context {
            TrafficContext::Loopback => probe.link.rx_phase(),
            TrafficContext::Dut(path) => path.egress.rx_phase(),
        };
        rx_reg.latch(rx_clock.timestamp(rx_sof, rx_phase), i);

        let (Some((tx_ts, tx_seq)), Some((rx_ts, rx_seq))) =
            (tx_reg.read_back(), rx_reg.read_back())
        else {
            continue;
        };
        debug_assert_eq!(tx_seq, rx_seq);
        samples.push(LatencySample {
            seq_id: rx_seq,
            tx_ts,
            rx_ts,
            latency: rx_ts - tx_ts,
            true_latency: rx_sof - departure,
        });
        cursor = rx_sof + probe.pause;
    }
    if samples.is_empty() && n_samples > 0 {
        return Err(MeasureError::Timeout { lost: timeouts });
    }
    Ok(LatencyRun {
        samples,
        timeouts,
        register_losses: tx_reg.lost() + rx_reg.lost(),
        dut: dut.map(|(q, _)| q.finish()),
        finished_at: cursor,
    })
}

/// Least-squares fit of `t = k + l / v_p` to `(length_m, latency_ns)`
/// points. Returns `(k_ns, v_p as a fraction of c)`.
pub fn fit_link(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let k = my - slope * mx;
    Some((k, 1.0 / (slope * SPEED_OF_LIGHT)))
}

/// Probe buffer for one round; used by callers that put probes on a shared
/// wire themselves.
pub fn probe_buffer(template: &PacketTemplate, seq_id: u64) -> Result<PacketBuffer, MeasureError> {
    let mut buf = template
        .make()
        .map_err(|e| MeasureError::Config(e.to_string()))?;
    buf.request_timestamp = true;
    buf.set_seq_id(seq_id);
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::wireclock::ClockModel;

    fn run(link: LinkModel, model: ClockModel, n: usize, seed: u64) -> LatencyRun {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probe = LatencyProbe::new(link, PortClock::preset(model), PortClock::preset(model));
        measure_latency(&probe, n, &TrafficContext::Loopback, &mut rng).unwrap()
    }

    fn distinct(run: &LatencyRun) -> Vec<(SimTime, usize)> {
        let mut v: Vec<(SimTime, usize)> = Vec::new();
        for s in &run.samples {
            match v.iter_mut().find(|(l, _)| *l == s.latency) {
                Some(e) => e.1 += 1,
                None => v.push((s.latency, 1)),
            }
        }
        v.sort();
        v
    }

    #[test]
    fn reference_loopback_medians() {
        for (len, want) in [(2.0, 3200), (8.5, 3520), (20.0, 4032)] {
            let r = run(LinkModel::fiber(len), ClockModel::X540, 50, 1);
            assert_eq!(
                distinct(&r),
                vec![(SimTime::from_ticks(want * 1000), 50)],
                "fiber {len}"
            );
        }
        for (len, want) in [(2.0, 21568), (10.0, 21952), (50.0, 23872)] {
            let mut link = LinkModel::copper(len);
            link.jitter = crate::wireclock::PhyJitter::None;
            let r = run(link, ClockModel::X540, 50, 1);
            assert_eq!(
                distinct(&r),
                vec![(SimTime::from_ticks(want * 1000), 50)],
                "copper {len}"
            );
        }
    }

    #[test]
    fn slow_timer_is_bimodal() {
        let r = run(LinkModel::fiber(8.5), ClockModel::I82599, 2000, 7);
        let d = distinct(&r);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, SimTime::from_ticks(3_456_000));
        assert_eq!(d[1].0, SimTime::from_ticks(3_584_000));
        let r = run(LinkModel::fiber(2.0), ClockModel::I82599, 200, 7);
        assert_eq!(distinct(&r), vec![(SimTime::from_ns(320), 200)]);
    }

    #[test]
    fn ideal_clocks_measure_true_latency() {
        let r = run(LinkModel::fiber(2.0), ClockModel::Ideal, 10, 3);
        assert!(r.samples.iter().all(|s| s.latency == s.true_latency));
        assert!(r
            .samples
            .iter()
            .all(|s| s.latency == LinkModel::fiber(2.0).propagation_delay()));
        assert_eq!(r.register_losses, 0);
    }

    #[test]
    fn dut_adds_residence_and_reports_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let link = LinkModel::fiber(2.0);
        let probe = LatencyProbe::new(link.clone(), PortClock::ideal(), PortClock::ideal());
        let path = DutPath::new(DutModel::default(), link.clone());
        let r = measure_latency(&probe, 10, &TrafficContext::Dut(path.clone()), &mut rng).unwrap();
        let expect = link.propagation_delay() * 2
            + link.serialization(wire_length(90))
            + DutModel::default().service_time();
        assert!(r.samples.iter().all(|s| s.latency == expect));

        let tiny = DutModel {
            buffer_pkts: 1,
            service_rate_pps: 10.0,
            ..DutModel::default()
        };
        let mut blocked = DutPath::new(tiny, link);
        blocked.background = Some(Pattern::Cbr { rate_pps: 1e6 });
        let err = measure_latency(&probe, 3, &TrafficContext::Dut(blocked), &mut rng).unwrap_err();
        assert!(matches!(err, MeasureError::Timeout { lost: 3 }));
    }

    #[test]
    fn non_ptp_probe_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut probe = LatencyProbe::new(
            LinkModel::fiber(2.0),
            PortClock::ideal(),
            PortClock::ideal(),
        );
        probe.template = PacketTemplate::udp(86);
        assert_eq!(
            measure_latency(&probe, 1, &TrafficContext::Loopback, &mut rng),
            Err(MeasureError::NotTimestamped)
        );
    }

    #[test]
    fn fit_recovers_line() {
        let k = 310.7;
        let vp = 0.72;
        let pts: Vec<(f64, f64)> = [2.0, 8.5, 20.0]
            .iter()
            .map(|l| (*l, k + l / (vp * SPEED_OF_LIGHT)))
            .collect();
        let (fk, fvp) = fit_link(&pts).unwrap();
        assert!((fk - k).abs() < 1e-9);
        assert!((fvp - vp).abs() < 1e-12);
        assert!(fit_link(&[(1.0, 2.0)]).is_none());
    }
}
