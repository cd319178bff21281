// SPDX-License-Identifier: Apache-2.0

//! Discrete-event execution of a scenario.
//!
//! Devices connected by cables, forwarding DuTs or latency probes form a
//! component; components share nothing and run on their own threads.
//! Generators produce their frame streams on helper threads and hand them
//! over in batches. Every random stream is seeded from the task id, so the
//! result does not depend on how the work is spread over threads.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::generator::{seq_base, FrameKind, GenSummary, Generator, TxFrame};
use super::report::{DeviceReport, HistogramReport, RunReport, TaskReport, TaskResult};
use super::scenario::{LatencyTask, Scenario, TaskSpec};
use super::{derive_seed, RuntimeError, SCENARIO_VERSION};
use crate::dutsim::{percentiles_of, DutQueue};
use crate::measure::{
    CounterKind, CounterSummary, Histogram, LatencySample, PtpFilter, StatsCounter,
    TimestampRegister,
};
use crate::packet::{materialize, PacketBuffer};
use crate::time::SimTime;
use crate::wireclock::{
    serialization_time, sync_clocks, wire_length, LinkModel, PortClock, PortId, SyncConfig, Wire,
};

const BATCH_FRAMES: usize = 256;
const CHANNEL_BATCHES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaunchOptions {
    /// Run components and generators on separate threads.
    pub parallel: bool,
}

impl Default for LaunchOptions {
    fn default() -> Self {
        LaunchOptions { parallel: true }
    }
}

/// Bulk results that do not belong in the report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    /// Rate counters of generators and counter tasks.
    pub counters: BTreeMap<String, CounterSummary>,
    pub histograms: BTreeMap<String, Histogram>,
    pub latency: BTreeMap<String, Vec<LatencySample>>,
    /// DuT residence times in arrival order.
    pub residence: BTreeMap<String, Vec<SimTime>>,
    /// Frames seen by capturing devices, stamped with their last bit.
    pub captures: BTreeMap<String, Vec<(SimTime, Vec<u8>)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub artifacts: Artifacts,
}

pub fn launch(scenario: &Scenario) -> Result<RunOutput, RuntimeError> {
    launch_with(scenario, &LaunchOptions::default())
}

pub fn launch_with(
    scenario: &Scenario,
    options: &LaunchOptions,
) -> Result<RunOutput, RuntimeError> {
    scenario.validate()?;
    let mut generators: BTreeMap<usize, Generator> = BTreeMap::new();
    for (i, task) in scenario.tasks.iter().enumerate() {
        if let TaskSpec::Generator(g) = task {
            let dev = scenario.device_index(&g.device).expect("validated");
            let rate = device_link(scenario, dev).0.effective_rate();
            let gen = Generator::new(g, i, derive_seed(scenario.seed, &g.id), rate).map_err(
                |message| RuntimeError::ConfigInvalid {
                    path: format!("tasks[{i}]"),
                    message,
                },
            )?;
            generators.insert(i, gen);
        }
    }

    let components = components(scenario);
    let mut jobs: Vec<Job> = components
        .iter()
        .map(|(devs, tasks)| {
            (
                devs.clone(),
                tasks.iter().map(|t| (*t, generators.remove(t))).collect(),
            )
        })
        .collect();

    let results: Vec<Result<ComponentResult, RuntimeError>> = if options.parallel && jobs.len() > 1
    {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .drain(..)
                .map(|(devs, tasks)| s.spawn(move || run_component(scenario, devs, tasks, true)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(RuntimeError::Io("worker panicked".into())))
                })
                .collect()
        })
    } else {
        jobs.drain(..)
            .map(|(devs, tasks)| run_component(scenario, devs, tasks, options.parallel))
            .collect()
    };

    let mut devices: Vec<DeviceReport> = scenario
        .devices
        .iter()
        .map(|d| DeviceReport {
            id: d.id.clone(),
            ..DeviceReport::default()
        })
        .collect();
    let mut tasks: Vec<Option<TaskReport>> = vec![None; scenario.tasks.len()];
    let mut artifacts = Artifacts::default();
    let mut end = SimTime::ZERO;
    for r in results {
        let r = r?;
        end = end.max(r.end);
        for (i, rep, capture) in r.devices {
            if let Some(c) = capture {
                artifacts.captures.insert(rep.id.clone(), c);
            }
            devices[i] = rep;
        }
        for (i, rep, art) in r.tasks {
            let id = rep.id.clone();
            tasks[i] = Some(rep);
            if let Some(c) = art.counter {
                artifacts.counters.insert(id.clone(), c);
            }
            if let Some(h) = art.histogram {
                artifacts.histograms.insert(id.clone(), h);
            }
            if let Some(s) = art.latency {
                artifacts.latency.insert(id.clone(), s);
            }
            if let Some(r) = art.residence {
                artifacts.residence.insert(id, r);
            }
        }
    }
    Ok(RunOutput {
        report: RunReport {
            version: SCENARIO_VERSION,
            seed: scenario.seed,
            end_time_ns: end.as_ns_f64(),
            devices,
            tasks: tasks
                .into_iter()
                .map(|t| t.expect("every task belongs to a component"))
                .collect(),
        },
        artifacts,
    })
}

/// Link used by frames leaving `dev`, and the receiving device. Uncabled
/// devices still serialize at their line rate.
fn device_link(scenario: &Scenario, dev: usize) -> (LinkModel, Option<usize>) {
    match scenario.link_from(dev) {
        Some((link, peer)) => (link, Some(peer)),
        None => {
            let d = &scenario.devices[dev];
            let mut link = LinkModel::new(0.0, 1.0, 0.0, d.line_rate_bps).expect("validated rate");
            link.aggregate_cap_bps = d.aggregate_cap_bps;
            (link, None)
        }
    }
}

fn task_devices(scenario: &Scenario, task: &TaskSpec) -> Vec<usize> {
    let ids: Vec<&str> = match task {
        TaskSpec::Generator(g) => vec![&g.device],
        TaskSpec::Counter(c) => vec![&c.device],
        TaskSpec::Latency(l) => vec![&l.tx.device, &l.rx.device],
        TaskSpec::Dut(d) => vec![&d.ingress, &d.egress.device],
    };
    ids.into_iter()
        .map(|id| scenario.device_index(id).expect("validated"))
        .collect()
}

/// Groups devices (and their tasks) that can influence each other.
fn components(scenario: &Scenario) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = scenario.devices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let union = |p: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(p, a), find(p, b));
        if ra != rb {
            p[ra.max(rb)] = ra.min(rb);
        }
    };
    for l in &scenario.links {
        let a = scenario.device_index(&l.a).expect("validated");
        let b = scenario.device_index(&l.b).expect("validated");
        union(&mut parent, a, b);
    }
    for t in &scenario.tasks {
        let devs = task_devices(scenario, t);
        for w in devs.windows(2) {
            union(&mut parent, w[0], w[1]);
        }
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for d in 0..n {
        let r = find(&mut parent, d);
        groups.entry(r).or_default().0.push(d);
    }
    for (i, t) in scenario.tasks.iter().enumerate() {
        let r = find(&mut parent, task_devices(scenario, t)[0]);
        groups.get_mut(&r).expect("device group").1.push(i);
    }
    groups.into_values().collect()
}

enum GenMsg {
    Frames(Vec<TxFrame>),
    Done(Result<GenSummary, String>),
}

enum Source {
    Inline(Box<Generator>),
    Channel {
        rx: Receiver<GenMsg>,
        buf: VecDeque<TxFrame>,
        summary: Option<GenSummary>,
    },
}

impl Source {
    fn next(&mut self) -> Result<Option<TxFrame>, String> {
        match self {
            Source::Inline(g) => g.next_frame(),
            Source::Channel { rx, buf, summary } => loop {
                if let Some(f) = buf.pop_front() {
                    return Ok(Some(f));
                }
                if summary.is_some() {
                    return Ok(None);
                }
                match rx.recv() {
                    Ok(GenMsg::Frames(v)) => buf.extend(v),
                    Ok(GenMsg::Done(Ok(s))) => *summary = Some(s),
                    Ok(GenMsg::Done(Err(e))) => return Err(e),
                    Err(_) => return Err("generator thread stopped".into()),
                }
            },
        }
    }

    fn summary(&self) -> GenSummary {
        match self {
            Source::Inline(g) => g.summary().clone(),
            Source::Channel { summary, .. } => summary.clone().unwrap_or_default(),
        }
    }
}

fn pump(mut gen: Generator, tx: SyncSender<GenMsg>) {
    let mut batch = Vec::with_capacity(BATCH_FRAMES);
    loop {
        match gen.next_frame() {
            Ok(Some(f)) => {
                batch.push(f);
                if batch.len() == BATCH_FRAMES {
                    let full = std::mem::replace(&mut batch, Vec::with_capacity(BATCH_FRAMES));
                    if tx.send(GenMsg::Frames(full)).is_err() {
                        return;
                    }
                }
            }
            Ok(None) => {
                if !batch.is_empty() && tx.send(GenMsg::Frames(batch)).is_err() {
                    return;
                }
                let _ = tx.send(GenMsg::Done(Ok(gen.summary().clone())));
                return;
            }
            Err(e) => {
                if !batch.is_empty() && tx.send(GenMsg::Frames(batch)).is_err() {
                    return;
                }
                let _ = tx.send(GenMsg::Done(Err(e)));
                return;
            }
        }
    }
}

enum TxQueue {
    Unused,
    Gen {
        task: usize,
        source: Source,
        head: Option<TxFrame>,
        exhausted: bool,
    },
    Fifo {
        task: usize,
        q: VecDeque<TxFrame>,
    },
}

impl TxQueue {
    fn head(&mut self) -> Result<Option<&TxFrame>, (usize, String)> {
        match self {
            TxQueue::Unused => Ok(None),
            TxQueue::Gen {
                task,
                source,
                head,
                exhausted,
            } => {
                if head.is_none() && !*exhausted {
                    match source.next() {
                        Ok(Some(f)) => *head = Some(f),
                        Ok(None) => *exhausted = true,
                        Err(e) => {
                            *exhausted = true;
                            return Err((*task, e));
                        }
                    }
                }
                Ok(head.as_ref())
            }
            TxQueue::Fifo { q, .. } => Ok(q.front()),
        }
    }

    fn pop(&mut self) -> Option<(usize, TxFrame)> {
        match self {
            TxQueue::Unused => None,
            TxQueue::Gen { task, head, .. } => head.take().map(|f| (*task, f)),
            TxQueue::Fifo { task, q } => q.pop_front().map(|f| (*task, f)),
        }
    }
}

struct Dev {
    index: usize,
    clock: PortClock,
    wire: Wire,
    peer: Option<usize>,
    /// Link of the frames arriving here.
    rx_link: Option<LinkModel>,
    queues: Vec<TxQueue>,
    rx_owner: Vec<Option<usize>>,
    wake_gen: u64,
    wake_at: Option<SimTime>,
    tx_reg: TimestampRegister,
    rx_reg: TimestampRegister,
    tx_filter: Option<PtpFilter>,
    /// Filter and the latency task whose random stream draws PHY jitter.
    rx_filter: Option<(PtpFilter, usize)>,
    dut: Option<usize>,
    report: DeviceReport,
    capture: Option<Capture>,
}

struct Arrival {
    frame: Vec<u8>,
    seq: u64,
    kind: FrameKind,
    steer: u16,
    sof: SimTime,
    delivered: bool,
}

enum EvKind {
    Wake { dev: usize, gen: u64 },
    Arrive { dev: usize, arrival: Arrival },
    Round { task: usize },
    Timeout { task: usize, round: u64 },
}

struct Event {
    time: SimTime,
    order: u64,
    kind: EvKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.order) == (other.time, other.order)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // BinaryHeap is a max-heap; earliest first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .cmp(&self.time)
            .then(other.order.cmp(&self.order))
    }
}

struct LatState {
    spec: LatencyTask,
    tx: usize,
    tx_queue: usize,
    rx: usize,
    rng: ChaCha8Rng,
    sync: SyncConfig,
    probe: PacketBuffer,
    round: u64,
    outstanding: Option<u64>,
    sent_at: Option<SimTime>,
    samples: Vec<LatencySample>,
    timeouts: u64,
    mismatched: u64,
}

enum TaskState {
    Gen {
        counter: StatsCounter,
        payloads: u64,
        fillers: u64,
        payload_bytes: u64,
        first: Option<SimTime>,
        last: Option<SimTime>,
    },
    Counter {
        counter: StatsCounter,
        hist: Option<Histogram>,
        last: Option<SimTime>,
        rate_bps: u64,
    },
    Latency(Box<LatState>),
    Dut {
        queue: DutQueue,
        egress: usize,
        egress_queue: usize,
        residence: Vec<SimTime>,
    },
}

#[derive(Default)]
struct TaskArtifacts {
    counter: Option<CounterSummary>,
    histogram: Option<Histogram>,
    latency: Option<Vec<LatencySample>>,
    residence: Option<Vec<SimTime>>,
}

/// Devices of one component and its tasks with their prepared generators.
type Job = (Vec<usize>, Vec<(usize, Option<Generator>)>);

/// Captured frames with their last-bit times.
type Capture = Vec<(SimTime, Vec<u8>)>;

struct ComponentResult {
    devices: Vec<(usize, DeviceReport, Option<Capture>)>,
    tasks: Vec<(usize, TaskReport, TaskArtifacts)>,
    end: SimTime,
}

struct Sim<'s> {
    scenario: &'s Scenario,
    /// Indexed by global device index; only members of this component are
    /// populated.
    devs: Vec<Option<Dev>>,
    tasks: BTreeMap<usize, TaskState>,
    heap: BinaryHeap<Event>,
    order: u64,
    now: SimTime,
}

fn task_error(scenario: &Scenario, task: usize, message: String) -> RuntimeError {
    RuntimeError::Task {
        task: scenario.tasks[task].id().to_string(),
        message,
    }
}

fn run_component(
    scenario: &Scenario,
    devices: Vec<usize>,
    tasks: Vec<(usize, Option<Generator>)>,
    threaded: bool,
) -> Result<ComponentResult, RuntimeError> {
    if !threaded {
        let sources = tasks
            .into_iter()
            .map(|(t, g)| (t, g.map(|g| Source::Inline(Box::new(g)))))
            .collect();
        return Sim::new(scenario, &devices, sources)?.run();
    }
    std::thread::scope(|s| {
        let mut sources = Vec::with_capacity(tasks.len());
        for (t, g) in tasks {
            let src = g.map(|g| {
                let (tx, rx) = sync_channel(CHANNEL_BATCHES);
                s.spawn(move || pump(g, tx));
                Source::Channel {
                    rx,
                    buf: VecDeque::new(),
                    summary: None,
                }
            });
            sources.push((t, src));
        }
        Sim::new(scenario, &devices, sources)?.run()
    })
}

impl<'s> Sim<'s> {
    fn new(
        scenario: &'s Scenario,
        members: &[usize],
        sources: Vec<(usize, Option<Source>)>,
    ) -> Result<Self, RuntimeError> {
        let mut devs: Vec<Option<Dev>> = (0..scenario.devices.len()).map(|_| None).collect();
        for &d in members {
            let spec = &scenario.devices[d];
            let (link, peer) = device_link(scenario, d);
            let wire = Wire::new(link, PortId(peer.unwrap_or(d) as u32)).map_err(|e| {
                RuntimeError::ConfigInvalid {
                    path: format!("devices[{d}]"),
                    message: e.to_string(),
                }
            })?;
            let rx_link = peer.map(|p| device_link(scenario, p).0);
            let clock = PortClock::preset(spec.clock)
                .with_reset_phase(spec.reset_phase)
                .with_offset(SimTime::from_ns_f64(spec.clock_offset_ns))
                .with_drift(spec.clock_drift);
            devs[d] = Some(Dev {
                index: d,
                clock,
                wire,
                peer,
                rx_link,
                queues: (0..spec.queues).map(|_| TxQueue::Unused).collect(),
                rx_owner: vec![None; spec.queues as usize],
                wake_gen: 0,
                wake_at: None,
                tx_reg: TimestampRegister::new(),
                rx_reg: TimestampRegister::new(),
                tx_filter: None,
                rx_filter: None,
                dut: None,
                report: DeviceReport {
                    id: spec.id.clone(),
                    ..DeviceReport::default()
                },
                capture: spec.capture.then(Vec::new),
            });
        }
        let mut sim = Sim {
            scenario,
            devs,
            tasks: BTreeMap::new(),
            heap: BinaryHeap::new(),
            order: 0,
            now: SimTime::ZERO,
        };
        for (t, source) in sources {
            sim.install(t, source)?;
        }
        Ok(sim)
    }

    fn dev(&mut self, i: usize) -> &mut Dev {
        self.devs[i]
            .as_mut()
            .expect("device belongs to this component")
    }

    fn index(&self, id: &str) -> usize {
        self.scenario.device_index(id).expect("validated")
    }

    fn install(&mut self, t: usize, source: Option<Source>) -> Result<(), RuntimeError> {
        let scenario = self.scenario;
        let state = match &scenario.tasks[t] {
            TaskSpec::Generator(g) => {
                let d = self.index(&g.device);
                self.dev(d).queues[g.queue as usize] = TxQueue::Gen {
                    task: t,
                    source: source.expect("generator source"),
                    head: None,
                    exhausted: false,
                };
                TaskState::Gen {
                    counter: StatsCounter::new(
                        CounterKind::ManualTx,
                        SimTime::from_ns_f64(g.start_ns),
                    ),
                    payloads: 0,
                    fillers: 0,
                    payload_bytes: 0,
                    first: None,
                    last: None,
                }
            }
            TaskSpec::Counter(c) => {
                let d = self.index(&c.device);
                self.dev(d).rx_owner[c.queue as usize] = Some(t);
                let hist = c.histogram.as_ref().map(|h| {
                    let hist = Histogram::new(SimTime::from_ns_f64(h.bin_width_ns));
                    match h.target_ns {
                        Some(target) => hist.with_target(SimTime::from_ns_f64(target)),
                        None => hist,
                    }
                });
                TaskState::Counter {
                    counter: StatsCounter::with_interval(
                        CounterKind::PktRx,
                        SimTime::ZERO,
                        SimTime::from_secs_f64(c.interval_s),
                    ),
                    hist,
                    last: None,
                    rate_bps: device_link(scenario, d).0.effective_rate(),
                }
            }
            TaskSpec::Latency(l) => {
                let tx = self.index(&l.tx.device);
                let rx = self.index(&l.rx.device);
                self.dev(tx).queues[l.tx.queue as usize] = TxQueue::Fifo {
                    task: t,
                    q: VecDeque::new(),
                };
                self.dev(tx).tx_filter = Some(l.filter);
                let rxd = self.dev(rx);
                rxd.rx_owner[l.rx.queue as usize] = Some(t);
                rxd.rx_filter = Some((l.filter, t));
                let probe = l
                    .template
                    .make()
                    .map_err(|e| task_error(scenario, t, e.to_string()))?;
                self.push(SimTime::from_ns_f64(l.start_ns), EvKind::Round { task: t });
                TaskState::Latency(Box::new(LatState {
                    spec: l.clone(),
                    tx,
                    tx_queue: l.tx.queue as usize,
                    rx,
                    rng: ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, &l.id)),
                    sync: SyncConfig {
                        outlier_rate: l.sync.outlier_rate,
                        outlier_bound: SimTime::from_ns_f64(l.sync.outlier_bound_ns),
                        read_gap: SimTime::from_ns_f64(l.sync.read_gap_ns),
                    },
                    probe,
                    round: 0,
                    outstanding: None,
                    sent_at: None,
                    samples: Vec::with_capacity(l.samples.min(1 << 20) as usize),
                    timeouts: 0,
                    mismatched: 0,
                }))
            }
            TaskSpec::Dut(d) => {
                let ingress = self.index(&d.ingress);
                let egress = self.index(&d.egress.device);
                self.dev(ingress).dut = Some(t);
                self.dev(egress).queues[d.egress.queue as usize] = TxQueue::Fifo {
                    task: t,
                    q: VecDeque::new(),
                };
                TaskState::Dut {
                    queue: DutQueue::new(d.model.clone())
                        .map_err(|e| task_error(scenario, t, e.to_string()))?,
                    egress,
                    egress_queue: d.egress.queue as usize,
                    residence: Vec::new(),
                }
            }
        };
        self.tasks.insert(t, state);
        Ok(())
    }

    fn push(&mut self, time: SimTime, kind: EvKind) {
        self.order += 1;
        self.heap.push(Event {
            time,
            order: self.order,
            kind,
        });
    }

    /// Earliest departure among the queue heads of `d`, lowest queue first
    /// on ties.
    fn next_departure(&mut self, d: usize) -> Result<Option<(SimTime, usize)>, RuntimeError> {
        let scenario = self.scenario;
        let dev = self.dev(d);
        let free = dev.wire.free_at();
        let mut best: Option<(SimTime, usize)> = None;
        for (qi, q) in dev.queues.iter_mut().enumerate() {
            let head = q.head().map_err(|(t, e)| task_error(scenario, t, e))?;
            if let Some(h) = head {
                let at = h.desired.max(free);
                if best.is_none_or(|(b, _)| at < b) {
                    best = Some((at, qi));
                }
            }
        }
        Ok(best)
    }

    fn schedule_wake(&mut self, d: usize) -> Result<(), RuntimeError> {
        let Some((at, _)) = self.next_departure(d)? else {
            return Ok(());
        };
        let at = at.max(self.now);
        let dev = self.dev(d);
        if dev.wake_at.is_some_and(|w| w <= at) {
            return Ok(());
        }
        dev.wake_gen += 1;
        dev.wake_at = Some(at);
        let gen = dev.wake_gen;
        self.push(at, EvKind::Wake { dev: d, gen });
        Ok(())
    }

    fn run(mut self) -> Result<ComponentResult, RuntimeError> {
        let members: Vec<usize> = self.devs.iter().flatten().map(|d| d.index).collect();
        for d in members {
            self.schedule_wake(d)?;
        }
        while let Some(ev) = self.heap.pop() {
            self.now = ev.time;
            match ev.kind {
                EvKind::Wake { dev, gen } => self.on_wake(dev, gen)?,
                EvKind::Arrive { dev, arrival } => self.on_arrive(dev, arrival)?,
                EvKind::Round { task } => self.on_round(task)?,
                EvKind::Timeout { task, round } => self.on_timeout(task, round),
            }
        }
        self.finish()
    }

    fn on_wake(&mut self, d: usize, gen: u64) -> Result<(), RuntimeError> {
        let now = self.now;
        {
            let dev = self.dev(d);
            if dev.wake_gen != gen {
                return Ok(());
            }
            dev.wake_at = None;
        }
        if let Some((at, qi)) = self.next_departure(d)? {
            if at <= now {
                let (task, frame) = self.dev(d).queues[qi].pop().expect("head was loaded");
                self.transmit(d, task, frame, now)?;
            }
        }
        self.schedule_wake(d)
    }

    fn transmit(
        &mut self,
        d: usize,
        task: usize,
        f: TxFrame,
        departure: SimTime,
    ) -> Result<(), RuntimeError> {
        let scenario = self.scenario;
        let dev = self.dev(d);
        dev.report.tx_frames += 1;
        dev.report.tx_bytes += f.frame.len() as u64;
        if dev.tx_filter.is_some_and(|flt| flt.matches(&f.frame)) {
            let ts = dev.clock.timestamp(departure, SimTime::ZERO);
            dev.tx_reg.latch(ts, f.seq_id);
        }
        let ev = dev
            .wire
            .transmit(departure, f.frame, f.seq_id)
            .map_err(|e| RuntimeError::Task {
                task: scenario.tasks[task].id().to_string(),
                message: e.to_string(),
            })?;
        let peer = dev.peer;
        let len = ev.frame.len();
        match self.tasks.get_mut(&task) {
            Some(TaskState::Gen {
                counter,
                payloads,
                fillers,
                payload_bytes,
                first,
                last,
            }) => match f.kind {
                FrameKind::Payload => {
                    counter.record(departure, len);
                    *payloads += 1;
                    *payload_bytes += len as u64;
                    first.get_or_insert(departure);
                    *last = Some(departure);
                }
                _ => *fillers += 1,
            },
            Some(TaskState::Latency(st))
                if f.kind == FrameKind::Probe && st.outstanding == Some(f.seq_id) =>
            {
                st.sent_at = Some(departure);
            }
            _ => {}
        }
        if let Some(p) = peer {
            let arrival = Arrival {
                delivered: ev.is_delivered(),
                frame: ev.frame,
                seq: f.seq_id,
                kind: f.kind,
                steer: f.steer,
                sof: ev.sof_time,
            };
            self.push(ev.true_time, EvKind::Arrive { dev: p, arrival });
        }
        Ok(())
    }

    fn on_arrive(&mut self, d: usize, a: Arrival) -> Result<(), RuntimeError> {
        let now = self.now;
        let dev = self.devs[d].as_mut().expect("member");
        if let Some(c) = dev.capture.as_mut() {
            c.push((now, a.frame.clone()));
        }
        if !a.delivered {
            dev.report.rx_errors += 1;
            return Ok(());
        }
        dev.report.rx_delivered += 1;
        dev.report.rx_bytes += a.frame.len() as u64;

        let mut rx_sof = a.sof;
        if let Some((flt, owner)) = dev.rx_filter {
            if flt.matches(&a.frame) {
                let link = dev.rx_link.clone().expect("a receiving device is cabled");
                if let Some(TaskState::Latency(st)) = self.tasks.get_mut(&owner) {
                    rx_sof += link.jitter.sample(&mut st.rng);
                }
                let ts = dev.clock.timestamp(rx_sof, link.rx_phase());
                dev.rx_reg.latch(ts, a.seq);
            }
        }

        if let Some(t) = dev.dut {
            let Some(TaskState::Dut {
                queue,
                egress,
                egress_queue,
                residence,
            }) = self.tasks.get_mut(&t)
            else {
                unreachable!("dut task state")
            };
            if let Some(dep) = queue.offer(now) {
                residence.push(dep - now);
                let (egress, qi) = (*egress, *egress_queue);
                let frame = TxFrame {
                    desired: dep,
                    frame: a.frame,
                    seq_id: a.seq,
                    kind: a.kind,
                    steer: a.steer,
                    timestamp: false,
                };
                if let TxQueue::Fifo { q, .. } = &mut self.dev(egress).queues[qi] {
                    q.push_back(frame);
                }
                self.schedule_wake(egress)?;
            }
            return Ok(());
        }

        let queues = dev.rx_owner.len();
        let owner = dev.rx_owner[a.steer as usize % queues];
        match owner.and_then(|o| self.tasks.get_mut(&o).map(|s| (o, s))) {
            Some((
                _,
                TaskState::Counter {
                    counter,
                    hist,
                    last,
                    rate_bps,
                },
            )) => {
                counter.record(now, a.frame.len());
                if let Some(h) = hist {
                    if let Some(prev) = *last {
                        h.add_interarrival(
                            now - prev,
                            serialization_time(wire_length(a.frame.len()), *rate_bps),
                        );
                    }
                }
                *last = Some(now);
            }
            Some((o, TaskState::Latency(st)))
                if a.kind == FrameKind::Probe && st.outstanding == Some(a.seq) =>
            {
                self.complete_round(o, a.seq, rx_sof);
            }
            Some(_) => {}
            None => self.dev(d).report.rx_unclaimed += 1,
        }
        Ok(())
    }

    fn complete_round(&mut self, t: usize, seq: u64, rx_sof: SimTime) {
        let Some(TaskState::Latency(st)) = self.tasks.get_mut(&t) else {
            return;
        };
        let (tx, rx) = (st.tx, st.rx);
        let tx_ts = self.devs[tx].as_mut().expect("member").tx_reg.read_back();
        let rx_ts = self.devs[rx].as_mut().expect("member").rx_reg.read_back();
        let Some(TaskState::Latency(st)) = self.tasks.get_mut(&t) else {
            return;
        };
        match (tx_ts, rx_ts) {
            (Some((a, s1)), Some((b, s2))) if s1 == seq && s2 == seq => {
                st.samples.push(LatencySample {
                    seq_id: seq,
                    tx_ts: a,
                    rx_ts: b,
                    latency: b - a,
                    true_latency: rx_sof - st.sent_at.unwrap_or(rx_sof),
                })
            }
            _ => st.mismatched += 1,
        }
        st.outstanding = None;
        st.round += 1;
        let pause = SimTime::from_ns_f64(st.spec.pause_ns);
        let next = (rx_sof + pause).max(self.now);
        self.push(next, EvKind::Round { task: t });
    }

    fn on_round(&mut self, t: usize) -> Result<(), RuntimeError> {
        let now = self.now;
        let Some(TaskState::Latency(st)) = self.tasks.get_mut(&t) else {
            return Ok(());
        };
        if st.round >= st.spec.samples {
            return Ok(());
        }
        let (tx, rx) = (st.tx, st.rx);
        let mut cursor = now;
        if st.spec.resync && tx != rx {
            let a = self.devs[tx].as_ref().expect("member").clock.clone();
            let b = &mut self.devs[rx].as_mut().expect("member").clock;
            cursor = sync_clocks(&a, b, cursor, &st.sync, &mut st.rng).finished_at;
        }
        let clock = &self.devs[tx].as_ref().expect("member").clock;
        let gran = clock.granularity;
        let cycles = if clock.timer_step > gran {
            (clock.timer_step.ticks() / gran.ticks()).max(1)
        } else {
            1
        };
        let desired = cursor.ceil_to(gran, SimTime::ZERO) + gran * st.rng.gen_range(0..cycles);
        let seq = seq_base(t) + st.round;
        let mut buf = st.probe.clone();
        buf.set_seq_id(seq);
        let frame = TxFrame {
            desired,
            frame: materialize(&buf),
            seq_id: seq,
            kind: FrameKind::Probe,
            steer: st.spec.rx.queue,
            timestamp: true,
        };
        st.outstanding = Some(seq);
        st.sent_at = None;
        let round = st.round;
        let timeout = SimTime::from_ns_f64(st.spec.timeout_ns);
        let qi = st.tx_queue;
        if let TxQueue::Fifo { q, .. } = &mut self.dev(tx).queues[qi] {
            q.push_back(frame);
        }
        self.push(desired + timeout, EvKind::Timeout { task: t, round });
        self.schedule_wake(tx)
    }

    fn on_timeout(&mut self, t: usize, round: u64) {
        let Some(TaskState::Latency(st)) = self.tasks.get_mut(&t) else {
            return;
        };
        if st.round != round || st.outstanding.is_none() {
            return;
        }
        let seq = st.outstanding.take();
        st.timeouts += 1;
        st.round += 1;
        let tx = st.tx;
        let reg = &mut self.devs[tx].as_mut().expect("member").tx_reg;
        if reg.peek().map(|(_, s)| s) == seq {
            reg.read_back();
        }
        self.push(self.now, EvKind::Round { task: t });
    }

    fn finish(self) -> Result<ComponentResult, RuntimeError> {
        let end = self.now;
        let scenario = self.scenario;
        let mut devs = self.devs;
        let mut summaries: BTreeMap<usize, GenSummary> = BTreeMap::new();
        for dev in devs.iter().flatten() {
            for q in &dev.queues {
                if let TxQueue::Gen { task, source, .. } = q {
                    summaries.insert(*task, source.summary());
                }
            }
        }
        let mut tasks = Vec::new();
        for (t, state) in self.tasks {
            let id = scenario.tasks[t].id().to_string();
            let mut art = TaskArtifacts::default();
            let result = match state {
                TaskState::Gen {
                    counter,
                    payloads,
                    fillers,
                    payload_bytes,
                    first,
                    last,
                } => {
                    let summary = summaries.remove(&t).unwrap_or_default();
                    let end = last.unwrap_or(counter_start(scenario, t));
                    let c = counter.finalize(end);
                    let achieved = match (first, last) {
                        (Some(a), Some(b)) if b > a => {
                            Some((payloads - 1) as f64 / (b - a).as_secs_f64())
                        }
                        _ => None,
                    };
                    let r = TaskResult::Generator {
                        payload_packets: payloads,
                        filler_packets: fillers,
                        payload_bytes,
                        first_departure_ns: first.map(|t| t.as_ns_f64()),
                        last_departure_ns: last.map(|t| t.as_ns_f64()),
                        achieved_rate_pps: achieved,
                        gap: summary.gap,
                        non_linear: summary.non_linear,
                        mpps_mean: c.mpps_mean,
                        mbit_mean: c.mbit_mean,
                    };
                    art.counter = Some(c);
                    r
                }
                TaskState::Counter { counter, hist, .. } => {
                    let c = counter.finalize(end);
                    let r = TaskResult::Counter {
                        packets: c.packets,
                        bytes: c.bytes,
                        mpps_mean: c.mpps_mean,
                        mpps_stddev: c.mpps_stddev,
                        mbit_mean: c.mbit_mean,
                        mbit_stddev: c.mbit_stddev,
                        intervals: c.intervals.len(),
                        histogram: hist.as_ref().map(HistogramReport::from_histogram),
                    };
                    art.counter = Some(c);
                    art.histogram = hist;
                    r
                }
                TaskState::Latency(st) => {
                    let losses = devs[st.tx].as_ref().map_or(0, |d| d.tx_reg.lost())
                        + devs[st.rx].as_ref().map_or(0, |d| d.rx_reg.lost())
                        + st.mismatched;
                    let mut lat: Vec<SimTime> = st.samples.iter().map(|s| s.latency).collect();
                    let q = percentiles_of(&mut lat, &[0.0, 25.0, 50.0, 75.0, 100.0]).ok();
                    let pick = |i: usize| q.as_ref().map(|v| v[i]);
                    let mean = (!st.samples.is_empty()).then(|| {
                        st.samples
                            .iter()
                            .map(|s| s.latency.as_ns_f64())
                            .sum::<f64>()
                            / st.samples.len() as f64
                    });
                    let r = TaskResult::Latency {
                        samples: st.samples.len() as u64,
                        timeouts: st.timeouts,
                        register_losses: losses,
                        min_ns: pick(0),
                        p25_ns: pick(1),
                        median_ns: pick(2),
                        p75_ns: pick(3),
                        max_ns: pick(4),
                        mean_ns: mean,
                    };
                    art.latency = Some(st.samples);
                    r
                }
                TaskState::Dut {
                    queue, residence, ..
                } => {
                    let stats = queue.finish();
                    let mut sorted = residence.clone();
                    let q = percentiles_of(&mut sorted, &[50.0, 99.0]).ok();
                    let r = TaskResult::Dut {
                        stats,
                        residence_p50_ns: q.as_ref().map(|v| v[0]),
                        residence_p99_ns: q.as_ref().map(|v| v[1]),
                    };
                    art.residence = Some(residence);
                    r
                }
            };
            tasks.push((t, TaskReport { id, result }, art));
        }
        let devices = devs
            .iter_mut()
            .flatten()
            .map(|d| (d.index, std::mem::take(&mut d.report), d.capture.take()))
            .collect();
        Ok(ComponentResult {
            devices,
            tasks,
            end,
        })
    }
}

fn counter_start(scenario: &Scenario, t: usize) -> SimTime {
    match &scenario.tasks[t] {
        TaskSpec::Generator(g) => SimTime::from_ns_f64(g.start_ns),
        _ => SimTime::ZERO,
    }
}
