// SPDX-License-Identifier: Apache-2.0

//! `mgsim` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use mgsim_core::measure::{predict_throughput, CostModel};
use mgsim_core::ratectl::{classify_gap_ns, GapClass, GapParams};
use mgsim_core::runtime::{
    launch_with, resolve_seed, write_outputs, LaunchOptions, OutputFormat, Scenario, SEED_ENV,
};
use mgsim_core::wireclock::line_rate_pps;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mgsim",
    version,
    about = "Simulated high-speed packet generation and measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Plain,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write its results.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed and MGSIM_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "mgsim-out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Keep the FCS in pcap captures.
        #[arg(long)]
        with_fcs: bool,
        /// Run everything on the calling thread.
        #[arg(long)]
        single_worker: bool,
    },
    /// Cycles per packet and single-core rate of a set of operations.
    Estimate {
        /// Comma-separated operation names.
        ops: String,
        /// Core clock in GHz.
        #[arg(long, default_value_t = 2.4)]
        freq: f64,
    },
    /// Line rate in packets per second.
    Linerate {
        /// Frame size in bytes, FCS included.
        #[arg(long)]
        frame: usize,
        #[arg(long, value_parser = parse_rate)]
        rate: u64,
    },
    /// Whether a gap between two frames can be produced exactly.
    Gapcheck {
        #[arg(long, allow_negative_numbers = true)]
        gap_ns: f64,
        #[arg(long, value_parser = parse_rate)]
        rate: u64,
    },
}

/// Accepts `10000000000`, `10e9` or `1.5e9`.
fn parse_rate(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return if v > 0 {
            Ok(v)
        } else {
            Err("rate must be positive".into())
        };
    }
    let v: f64 = s
        .parse()
        .map_err(|_| format!("`{s}` is not a rate in bit/s"))?;
    if !(v >= 1.0 && v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64) {
        return Err(format!("`{s}` is not a whole positive bit rate"));
    }
    Ok(v as u64)
}

fn gap_verdict(gap_ns: f64, rate: u64) -> String {
    let params = GapParams::default();
    let (class, bytes) = classify_gap_ns(gap_ns, rate, &params);
    match class {
        GapClass::BackToBack => "BackToBack (0 bytes)".to_string(),
        GapClass::Exact => format!("Exact ({bytes} bytes)"),
        GapClass::Approximated if bytes < params.min_filler_wire as f64 => format!(
            "Approximated ({bytes} bytes, below {}-byte filler minimum)",
            params.min_filler_wire
        ),
        GapClass::Approximated => {
            format!("Approximated ({bytes} bytes, not a whole number of bytes)")
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out: dir,
            format,
            with_fcs,
            single_worker,
        } => {
            let mut s = match Scenario::from_path(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let env = std::env::var(SEED_ENV).ok();
            s.seed = match resolve_seed(s.seed, env.as_deref(), seed) {
                Ok(v) => v,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let options = LaunchOptions {
                parallel: !single_worker,
            };
            let result = launch_with(&s, &options).and_then(|o| {
                let format = match format {
                    Format::Csv => OutputFormat::Csv,
                    Format::Plain => OutputFormat::Plain,
                };
                write_outputs(&o, &dir, format, with_fcs).map(|_| o)
            });
            match result {
                Ok(o) => {
                    let _ = writeln!(
                        out,
                        "ran {} tasks on {} devices (seed {}), {} simulated ns; results in {}",
                        o.report.tasks.len(),
                        o.report.devices.len(),
                        s.seed,
                        o.report.end_time_ns,
                        dir.display()
                    );
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    if e.is_config() {
                        EXIT_CONFIG
                    } else {
                        EXIT_RUNTIME
                    }
                }
            }
        }
        Command::Estimate { ops, freq } => {
            let names: Vec<&str> = ops
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let model = CostModel::default();
            let cycles = match model.estimate_cycles(&names) {
                Ok(c) => c,
                Err(e) => {
                    let known: Vec<&str> = model.operations().collect();
                    let _ = writeln!(err, "error: {e} (known: {})", known.join(", "));
                    return EXIT_CONFIG;
                }
            };
            match predict_throughput(cycles, freq * 1e9) {
                Ok(t) => {
                    let _ = writeln!(out, "{:.1}±{:.1} cycles/pkt", cycles.mean, cycles.sigma);
                    let _ = writeln!(
                        out,
                        "{:.2} Mpps at {freq} GHz (±{:.2})",
                        t.mpps,
                        t.half_width()
                    );
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Linerate { frame, rate } => {
            let pps = line_rate_pps(frame, rate);
            let _ = writeln!(out, "{} pps ({pps:.2})", pps.floor() as u64);
            EXIT_OK
        }
        Command::Gapcheck { gap_ns, rate } => {
            if !(gap_ns >= 0.0 && gap_ns.is_finite()) {
                let _ = writeln!(err, "error: gap must be a non-negative number of ns");
                return EXIT_CONFIG;
            }
            let _ = writeln!(out, "{}", gap_verdict(gap_ns, rate));
            EXIT_OK
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(parse_rate("10e9"), Ok(10_000_000_000));
        assert_eq!(parse_rate("1000000000"), Ok(1_000_000_000));
        assert!(parse_rate("0").is_err());
        assert!(parse_rate("1.5").is_err());
        assert!(parse_rate("fast").is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(
            gap_verdict(30.0, 10_000_000_000),
            "Approximated (37.5 bytes, below 76-byte filler minimum)"
        );
        assert_eq!(gap_verdict(0.0, 10_000_000_000), "BackToBack (0 bytes)");
        assert_eq!(gap_verdict(60.8, 10_000_000_000), "Exact (76 bytes)");
        assert_eq!(
            gap_verdict(100.1, 10_000_000_000),
            "Approximated (125.125 bytes, not a whole number of bytes)"
        );
    }
}
