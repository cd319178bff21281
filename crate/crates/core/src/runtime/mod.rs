// SPDX-License-Identifier: Apache-2.0

//! Scenario execution: devices, cables, tasks and their results.

mod engine;
mod generator;
pub mod pcap;
mod report;
pub mod scenario;

pub use engine::{launch, launch_with, Artifacts, LaunchOptions, RunOutput};
pub use generator::{FrameKind, GenSummary, Generator, TxFrame};
pub use report::{
    write_outputs, DeviceReport, HistogramReport, OutputFormat, RunReport, TaskReport, TaskResult,
};
pub use scenario::{
    CounterTask, DeviceSpec, DutTask, GeneratorTask, HistogramSpec, LatencyTask, LinkSpec,
    QueueRef, RateControl, Scenario, SyncSpec, TaskSpec, SCENARIO_VERSION,
};

use thiserror::Error;

/// Environment variable consulted when the scenario seed is not overridden
/// on the command line.
pub const SEED_ENV: &str = "MGSIM_SEED";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("invalid configuration at `{path}`: {message}")]
    ConfigInvalid { path: String, message: String },
    #[error("queue {queue} of device `{device}` is bound by both `{first}` and `{second}`")]
    QueueConflict {
        device: String,
        queue: u16,
        first: String,
        second: String,
    },
    #[error("i/o: {0}")]
    Io(String),
    #[error("task `{task}` failed: {message}")]
    Task { task: String, message: String },
}

impl RuntimeError {
    /// Configuration problems are detected before anything runs.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            RuntimeError::ConfigInvalid { .. } | RuntimeError::QueueConflict { .. }
        )
    }
}

impl From<std::io::Error> for RuntimeError {
    fn from(e: std::io::Error) -> Self {
        RuntimeError::Io(e.to_string())
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of one task's random stream.
pub fn derive_seed(scenario_seed: u64, task_id: &str) -> u64 {
    scenario_seed ^ fnv1a(task_id)
}

/// Command line beats environment beats the scenario file.
pub fn resolve_seed(
    scenario_seed: u64,
    env: Option<&str>,
    cli: Option<u64>,
) -> Result<u64, RuntimeError> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env.map(str::trim) {
        Some(v) if !v.is_empty() => v.parse().map_err(|_| RuntimeError::ConfigInvalid {
            path: SEED_ENV.into(),
            message: format!("`{v}` is not an unsigned integer"),
        }),
        _ => Ok(scenario_seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_vectors() {
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a("foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn seeds_differ_per_task() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(0, "a"), fnv1a("a"));
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(1, Some("2"), Some(3)), Ok(3));
        assert_eq!(resolve_seed(1, Some("2"), None), Ok(2));
        assert_eq!(resolve_seed(1, Some(" "), None), Ok(1));
        assert_eq!(resolve_seed(1, None, None), Ok(1));
        assert!(resolve_seed(1, Some("x"), None).unwrap_err().is_config());
    }
}
