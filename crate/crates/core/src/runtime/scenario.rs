// SPDX-License-Identifier: Apache-2.0

//! Declarative scenario documents.
//!
//! ```json
//! {
//!   "version": 1,
//!   "seed": 7,
//!   "devices": [{ "id": "tx", "clock": "X540" }, { "id": "rx", "clock": "X540" }],
//!   "links": [{ "a": "tx", "b": "rx", "length_m": 2.0, "vp_fraction": 0.72, "k_ns": 310.7 }],
//!   "tasks": [
//!     { "kind": "generator", "id": "load", "device": "tx", "queue": 0,
//!       "pattern": { "poisson": { "rate_pps": 1e6 } }, "rate_control": "gapfill",
//!       "duration_s": 0.01 },
//!     { "kind": "counter", "id": "count", "device": "rx", "queue": 0 }
//!   ]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::dutsim::DutModel;
use crate::measure::{ptp_udp_template, PtpFilter};
use crate::packet::{FieldModifier, PacketTemplate};
use crate::ratectl::{GapParams, Pattern};
use crate::wireclock::{ClockModel, LinkModel, PhyJitter, GBE_10};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: String,
    #[serde(default = "default_rate")]
    pub line_rate_bps: u64,
    #[serde(default)]
    pub clock: ClockModel,
    #[serde(default = "one")]
    pub queues: u16,
    /// 82580-style per-reset phase, in units of 8 ns.
    #[serde(default)]
    pub reset_phase: u8,
    #[serde(default)]
    pub clock_offset_ns: f64,
    /// Dimensionless clock rate error, e.g. 35e-6.
    #[serde(default)]
    pub clock_drift: f64,
    #[serde(default)]
    pub aggregate_cap_bps: Option<u64>,
    /// Record every frame arriving at this device to `<id>.pcap`.
    #[serde(default)]
    pub capture: bool,
}

fn default_rate() -> u64 {
    GBE_10
}

fn one() -> u16 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub length_m: f64,
    pub vp_fraction: f64,
    pub k_ns: f64,
    #[serde(default)]
    pub rx_phase_ns: Option<f64>,
    #[serde(default)]
    pub jitter: PhyJitter,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueRef {
    pub device: String,
    #[serde(default)]
    pub queue: u16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Generator(GeneratorTask),
    Counter(CounterTask),
    Latency(LatencyTask),
    Dut(DutTask),
}

impl TaskSpec {
    pub fn id(&self) -> &str {
        match self {
            TaskSpec::Generator(t) => &t.id,
            TaskSpec::Counter(t) => &t.id,
            TaskSpec::Latency(t) => &t.id,
            TaskSpec::Dut(t) => &t.id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Generator(_) => "generator",
            TaskSpec::Counter(_) => "counter",
            TaskSpec::Latency(_) => "latency",
            TaskSpec::Dut(_) => "dut",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateControl {
    /// Departures exactly as the pattern asks, never closer than one frame.
    #[default]
    Paced,
    /// Line-rate stream with invalid-FCS fillers in the gaps.
    Gapfill,
    /// NIC rate limiter; CBR patterns only.
    Hardware,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorTask {
    pub id: String,
    pub device: String,
    #[serde(default)]
    pub queue: u16,
    pub pattern: Pattern,
    #[serde(default)]
    pub rate_control: RateControl,
    #[serde(default = "default_template")]
    pub template: PacketTemplate,
    #[serde(default)]
    pub modifiers: Vec<FieldModifier>,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub packets: Option<u64>,
    #[serde(default)]
    pub start_ns: f64,
    #[serde(default)]
    pub gap: Option<GapParams>,
    /// Oscillation amplitude of the hardware rate limiter.
    #[serde(default)]
    pub hw_amplitude_ns: Option<f64>,
}

fn default_template() -> PacketTemplate {
    PacketTemplate::udp(60)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    #[serde(default = "default_bin")]
    pub bin_width_ns: f64,
    #[serde(default)]
    pub target_ns: Option<f64>,
}

fn default_bin() -> f64 {
    64.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterTask {
    pub id: String,
    pub device: String,
    #[serde(default)]
    pub queue: u16,
    #[serde(default = "default_interval")]
    pub interval_s: f64,
    /// Inter-arrival histogram of the counted frames.
    #[serde(default)]
    pub histogram: Option<HistogramSpec>,
}

fn default_interval() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSpec {
    #[serde(default = "default_outlier_rate")]
    pub outlier_rate: f64,
    #[serde(default = "default_outlier_bound")]
    pub outlier_bound_ns: f64,
    #[serde(default = "default_read_gap")]
    pub read_gap_ns: f64,
}

fn default_outlier_rate() -> f64 {
    0.05
}

fn default_outlier_bound() -> f64 {
    10_000.0
}

fn default_read_gap() -> f64 {
    512.0
}

impl Default for SyncSpec {
    fn default() -> Self {
        SyncSpec {
            outlier_rate: default_outlier_rate(),
            outlier_bound_ns: default_outlier_bound(),
            read_gap_ns: default_read_gap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyTask {
    pub id: String,
    pub tx: QueueRef,
    pub rx: QueueRef,
    pub samples: u64,
    /// Resynchronize the two clocks before each probe.
    #[serde(default = "yes")]
    pub resync: bool,
    #[serde(default)]
    pub sync: SyncSpec,
    #[serde(default = "default_pause")]
    pub pause_ns: f64,
    #[serde(default = "default_timeout")]
    pub timeout_ns: f64,
    #[serde(default)]
    pub start_ns: f64,
    #[serde(default = "ptp_udp_template")]
    pub template: PacketTemplate,
    #[serde(default)]
    pub filter: PtpFilter,
}

fn yes() -> bool {
    true
}

fn default_pause() -> f64 {
    1_000.0
}

fn default_timeout() -> f64 {
    10_000_000.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DutTask {
    pub id: String,
    /// Device whose received frames enter the queue (all of its queues).
    pub ingress: String,
    /// Where forwarded frames leave.
    pub egress: QueueRef,
    #[serde(default)]
    pub model: DutModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Tx,
    Rx,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, RuntimeError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario =
            serde_path_to_error::deserialize(de).map_err(|e| RuntimeError::ConfigInvalid {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self, RuntimeError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuntimeError::ConfigInvalid {
            path: String::new(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d.id == id)
    }

    /// Link model for frames leaving `device`, if it is cabled.
    pub fn link_from(&self, device: usize) -> Option<(LinkModel, usize)> {
        let id = &self.devices[device].id;
        self.links.iter().find_map(|l| {
            let peer = if &l.a == id {
                &l.b
            } else if &l.b == id {
                &l.a
            } else {
                return None;
            };
            let dev = &self.devices[device];
            let mut model =
                LinkModel::new(l.length_m, l.vp_fraction, l.k_ns, dev.line_rate_bps).ok()?;
            model.aggregate_cap_bps = dev.aggregate_cap_bps;
            if let Some(p) = l.rx_phase_ns {
                model.rx_phase_ns = p;
            }
            model.jitter = l.jitter;
            Some((model, self.device_index(peer)?))
        })
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let invalid =
            |path: String, message: String| Err(RuntimeError::ConfigInvalid { path, message });
        if self.version != SCENARIO_VERSION {
            return invalid(
                "version".into(),
                format!(
                    "unsupported version {}, expected {SCENARIO_VERSION}",
                    self.version
                ),
            );
        }
        let mut ids = BTreeSet::new();
        for (i, d) in self.devices.iter().enumerate() {
            if !ids.insert(d.id.as_str()) {
                return invalid(
                    format!("devices[{i}].id"),
                    format!("duplicate device `{}`", d.id),
                );
            }
            if d.queues == 0 {
                return invalid(
                    format!("devices[{i}].queues"),
                    "a device needs at least one queue".into(),
                );
            }
            if d.clock_drift.abs() >= 1e-3 {
                return invalid(
                    format!("devices[{i}].clock_drift"),
                    format!("drift {} out of range", d.clock_drift),
                );
            }
            if let Err(e) = LinkModel::new(0.0, 1.0, 0.0, d.line_rate_bps) {
                return invalid(format!("devices[{i}].line_rate_bps"), e.to_string());
            }
        }
        let mut cabled = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            for (end, id) in [("a", &l.a), ("b", &l.b)] {
                let Some(dev) = self.device_index(id) else {
                    return invalid(
                        format!("links[{i}].{end}"),
                        format!("unknown device `{id}`"),
                    );
                };
                if !cabled.insert(dev) {
                    return invalid(
                        format!("links[{i}].{end}"),
                        format!("device `{id}` is already cabled"),
                    );
                }
            }
            if l.a == l.b {
                return invalid(
                    format!("links[{i}].b"),
                    "a link needs two distinct devices".into(),
                );
            }
            let (ra, rb) = (
                self.devices[self.device_index(&l.a).unwrap()].line_rate_bps,
                self.devices[self.device_index(&l.b).unwrap()].line_rate_bps,
            );
            if ra != rb {
                return invalid(
                    format!("links[{i}]"),
                    format!("line rates differ ({ra} vs {rb})"),
                );
            }
            if let Err(e) = LinkModel::new(l.length_m, l.vp_fraction, l.k_ns, ra) {
                return invalid(format!("links[{i}]"), e.to_string());
            }
        }

        let mut task_ids = BTreeSet::new();
        let mut bindings: BTreeMap<(usize, Direction, u16), &str> = BTreeMap::new();
        for (i, task) in self.tasks.iter().enumerate() {
            let base = format!("tasks[{i}]");
            if !task_ids.insert(task.id()) {
                return invalid(
                    format!("{base}.id"),
                    format!("duplicate task `{}`", task.id()),
                );
            }
            for (field, dev, dir, queue) in self.bindings_of(task) {
                let Some(d) = self.device_index(&dev) else {
                    return invalid(format!("{base}.{field}"), format!("unknown device `{dev}`"));
                };
                let queues = self.devices[d].queues;
                let qs: Vec<u16> = match queue {
                    Some(q) if q >= queues => {
                        return invalid(
                            format!("{base}.{field}"),
                            format!("queue {q} does not exist on `{dev}` ({queues} queues)"),
                        )
                    }
                    Some(q) => vec![q],
                    None => (0..queues).collect(),
                };
                for q in qs {
                    if let Some(first) = bindings.insert((d, dir, q), task.id()) {
                        return Err(RuntimeError::QueueConflict {
                            device: dev.clone(),
                            queue: q,
                            first: first.to_string(),
                            second: task.id().to_string(),
                        });
                    }
                }
            }
            self.validate_task(task, &base)?;
        }
        self.check_forwarding_acyclic()
    }

    /// `(field, device, direction, queue)`; `None` binds every queue.
    fn bindings_of(&self, task: &TaskSpec) -> Vec<(&'static str, String, Direction, Option<u16>)> {
        match task {
            TaskSpec::Generator(g) => {
                vec![("device", g.device.clone(), Direction::Tx, Some(g.queue))]
            }
            TaskSpec::Counter(c) => {
                vec![("device", c.device.clone(), Direction::Rx, Some(c.queue))]
            }
            TaskSpec::Latency(l) => vec![
                ("tx", l.tx.device.clone(), Direction::Tx, Some(l.tx.queue)),
                ("rx", l.rx.device.clone(), Direction::Rx, Some(l.rx.queue)),
            ],
            TaskSpec::Dut(d) => vec![
                ("ingress", d.ingress.clone(), Direction::Rx, None),
                (
                    "egress",
                    d.egress.device.clone(),
                    Direction::Tx,
                    Some(d.egress.queue),
                ),
            ],
        }
    }

    fn validate_task(&self, task: &TaskSpec, base: &str) -> Result<(), RuntimeError> {
        let invalid = |field: &str, message: String| {
            Err(RuntimeError::ConfigInvalid {
                path: format!("{base}.{field}"),
                message,
            })
        };
        match task {
            TaskSpec::Generator(g) => {
                if let Err(e) = g.pattern.validate() {
                    return invalid("pattern", e.to_string());
                }
                if let Err(e) = g.template.make() {
                    return invalid("template", e.to_string());
                }
                if g.duration_s.is_none()
                    && g.packets.is_none()
                    && !matches!(g.pattern, Pattern::Custom { .. })
                {
                    return invalid(
                        "duration_s",
                        "a generator needs duration_s or packets".into(),
                    );
                }
                if let Some(d) = g.duration_s {
                    if !(d > 0.0 && d.is_finite()) {
                        return invalid("duration_s", format!("duration {d} must be positive"));
                    }
                }
                if g.rate_control == RateControl::Hardware
                    && !matches!(g.pattern, Pattern::Cbr { .. })
                {
                    return invalid(
                        "rate_control",
                        "hardware rate control supports cbr patterns only".into(),
                    );
                }
                if let Some(gap) = &g.gap {
                    if let Err(e) = gap.validate() {
                        return invalid("gap", e.to_string());
                    }
                }
                let probe = g.template.make().expect("checked above");
                for (j, m) in g.modifiers.iter().enumerate() {
                    if let Err(e) = probe.layout().resolve(&m.field) {
                        return invalid(&format!("modifiers[{j}].field"), e.to_string());
                    }
                }
            }
            TaskSpec::Counter(c) => {
                if !(c.interval_s > 0.0) {
                    return invalid("interval_s", "interval must be positive".into());
                }
                if let Some(h) = &c.histogram {
                    if !(h.bin_width_ns > 0.0) {
                        return invalid(
                            "histogram.bin_width_ns",
                            "bin width must be positive".into(),
                        );
                    }
                }
            }
            TaskSpec::Latency(l) => {
                if l.samples == 0 {
                    return invalid("samples", "at least one sample".into());
                }
                if let Err(e) = l.template.make() {
                    return invalid("template", e.to_string());
                }
                if !(0.0..=1.0).contains(&l.sync.outlier_rate) {
                    return invalid("sync.outlier_rate", "probability outside [0, 1]".into());
                }
                if !(l.timeout_ns > 0.0) {
                    return invalid("timeout_ns", "timeout must be positive".into());
                }
            }
            TaskSpec::Dut(d) => {
                if let Err(e) = d.model.validate() {
                    return invalid("model", e.to_string());
                }
                if d.ingress == d.egress.device {
                    return invalid("egress", "ingress and egress must differ".into());
                }
            }
        }
        Ok(())
    }

    /// Frames forwarded by devices under test must not come back to the
    /// same device.
    fn check_forwarding_acyclic(&self) -> Result<(), RuntimeError> {
        let mut next: BTreeMap<usize, usize> = BTreeMap::new();
        for t in &self.tasks {
            if let TaskSpec::Dut(d) = t {
                let ingress = self.device_index(&d.ingress).expect("validated");
                let egress = self.device_index(&d.egress.device).expect("validated");
                if let Some((_, peer)) = self.link_from(egress) {
                    next.insert(ingress, peer);
                }
            }
        }
        for &start in next.keys() {
            let mut seen = BTreeSet::from([start]);
            let mut cur = start;
            while let Some(&n) = next.get(&cur) {
                if !seen.insert(n) {
                    return Err(RuntimeError::ConfigInvalid {
                        path: "tasks".into(),
                        message: format!("forwarding loop through device `{}`", self.devices[n].id),
                    });
                }
                cur = n;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "version": 1,
        "seed": 3,
        "devices": [{"id": "a", "queues": 2}, {"id": "b", "queues": 2}],
        "links": [{"a": "a", "b": "b", "length_m": 2.0, "vp_fraction": 0.72, "k_ns": 310.7}],
        "tasks": [
            {"kind": "generator", "id": "g0", "device": "a", "queue": 0,
             "pattern": {"cbr": {"rate_pps": 1000000.0}}, "packets": 10},
            {"kind": "generator", "id": "g1", "device": "a", "queue": 1,
             "pattern": {"cbr": {"rate_pps": 500000.0}}, "packets": 10},
            {"kind": "counter", "id": "c0", "device": "b", "queue": 0}
        ]
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Scenario::from_json(BASIC).unwrap();
        assert_eq!(s.tasks.len(), 3);
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn queue_conflict() {
        let text = BASIC.replace(
            r#""id": "g1", "device": "a", "queue": 1"#,
            r#""id": "g1", "device": "a", "queue": 0"#,
        );
        match Scenario::from_json(&text) {
            Err(RuntimeError::QueueConflict {
                device,
                queue,
                first,
                second,
            }) => {
                assert_eq!(
                    (device.as_str(), queue, first.as_str(), second.as_str()),
                    ("a", 0, "g0", "g1")
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_paths() {
        let text = BASIC.replace(r#""length_m": 2.0"#, r#""length_m": "long""#);
        match Scenario::from_json(&text) {
            Err(RuntimeError::ConfigInvalid { path, .. }) => assert_eq!(path, "links[0].length_m"),
            other => panic!("{other:?}"),
        }
        let text = BASIC.replace(r#""version": 1"#, r#""version": 2"#);
        assert!(
            matches!(Scenario::from_json(&text), Err(RuntimeError::ConfigInvalid { path, .. }) if path == "version")
        );
        let text = BASIC.replace(r#""b": "b""#, r#""b": "zz""#);
        assert!(
            matches!(Scenario::from_json(&text), Err(RuntimeError::ConfigInvalid { path, .. }) if path == "links[0].b")
        );
        let text = BASIC.replace(r#""queue": 1"#, r#""queue": 5"#);
        assert!(
            matches!(Scenario::from_json(&text), Err(RuntimeError::ConfigInvalid { path, .. }) if path == "tasks[1].device")
        );
    }

    #[test]
    fn forwarding_loop_is_rejected() {
        let text = r#"{
            "version": 1,
            "devices": [{"id": "a"}, {"id": "b"}, {"id": "c"}, {"id": "d"}],
            "links": [
                {"a": "a", "b": "b", "length_m": 1.0, "vp_fraction": 0.7, "k_ns": 0.0},
                {"a": "c", "b": "d", "length_m": 1.0, "vp_fraction": 0.7, "k_ns": 0.0}
            ],
            "tasks": [
                {"kind": "dut", "id": "x", "ingress": "b", "egress": {"device": "c", "queue": 0}},
                {"kind": "dut", "id": "y", "ingress": "d", "egress": {"device": "a", "queue": 0}}
            ]
        }"#;
        assert!(
            matches!(Scenario::from_json(text), Err(RuntimeError::ConfigInvalid { path, .. }) if path == "tasks")
        );
    }
}
