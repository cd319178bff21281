// SPDX-License-Identifier: Apache-2.0

use std::io::Read;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::RateError;
use crate::time::{SimTime, TICKS_PER_SEC};

/// Inter-departure pattern of a traffic source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    Cbr {
        rate_pps: f64,
    },
    Poisson {
        rate_pps: f64,
    },
    Bursts {
        burst_len: u32,
        intra_gap_ns: f64,
        inter_burst_ns: f64,
    },
    Custom {
        deltas_ns: Vec<f64>,
    },
}

impl Pattern {
    pub fn validate(&self) -> Result<(), RateError> {
        let bad = |s: String| Err(RateError::InvalidPattern(s));
        match self {
            Pattern::Cbr { rate_pps } | Pattern::Poisson { rate_pps } => {
                if !(*rate_pps > 0.0 && rate_pps.is_finite()) {
                    return bad(format!("rate_pps must be positive, got {rate_pps}"));
                }
            }
            Pattern::Bursts {
                burst_len,
                intra_gap_ns,
                inter_burst_ns,
            } => {
                if *burst_len == 0 {
                    return bad("burst_len must be at least 1".into());
                }
                if !(*intra_gap_ns > 0.0 && *inter_burst_ns > 0.0) {
                    return bad("burst gaps must be positive".into());
                }
            }
            Pattern::Custom { deltas_ns } => {
                if let Some(d) = deltas_ns.iter().find(|d| !(**d > 0.0)) {
                    return bad(format!("custom inter-departure {d} is not positive"));
                }
            }
        }
        Ok(())
    }

    /// Long-run packet rate, if defined.
    pub fn mean_rate_pps(&self) -> Option<f64> {
        match self {
            Pattern::Cbr { rate_pps } | Pattern::Poisson { rate_pps } => Some(*rate_pps),
            Pattern::Bursts {
                burst_len,
                intra_gap_ns,
                inter_burst_ns,
            } => {
                let n = f64::from(*burst_len);
                let cycle_ns = (n - 1.0) * intra_gap_ns + inter_burst_ns;
                Some(n * 1e9 / cycle_ns)
            }
            Pattern::Custom { deltas_ns } if !deltas_ns.is_empty() => {
                let total: f64 = deltas_ns.iter().sum();
                Some(deltas_ns.len() as f64 * 1e9 / total)
            }
            Pattern::Custom { .. } => None,
        }
    }
}

/// Stateful generator of inter-departure times.
#[derive(Clone, Debug)]
pub struct PatternSource {
    pattern: Pattern,
    position: usize,
    exp: Option<Exp<f64>>,
}

impl PatternSource {
    pub fn new(pattern: Pattern) -> Result<Self, RateError> {
        pattern.validate()?;
        let exp = match &pattern {
            Pattern::Poisson { rate_pps } => {
                // draws in ticks
                Some(Exp::new(*rate_pps / TICKS_PER_SEC as f64).expect("positive rate"))
            }
            _ => None,
        };
        Ok(PatternSource {
            pattern,
            position: 0,
            exp,
        })
    }

    pub fn pattern(&self) -> &Pattern {
        &self.pattern
    }

    pub fn next_interdeparture<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<SimTime, RateError> {
        let delta = match &self.pattern {
            Pattern::Cbr { rate_pps } => {
                SimTime::from_ticks((TICKS_PER_SEC as f64 / rate_pps).round() as i64)
            }
            Pattern::Poisson { .. } => {
                let exp = self.exp.as_ref().expect("built with the source");
                SimTime::from_ticks(exp.sample(rng).round() as i64)
            }
            Pattern::Bursts {
                burst_len,
                intra_gap_ns,
                inter_burst_ns,
            } => {
                let last_in_burst = self.position % *burst_len as usize == *burst_len as usize - 1;
                SimTime::from_ns_f64(if last_in_burst {
                    *inter_burst_ns
                } else {
                    *intra_gap_ns
                })
            }
            Pattern::Custom { deltas_ns } => match deltas_ns.get(self.position) {
                Some(d) => SimTime::from_ns_f64(*d),
                None => return Err(RateError::Exhausted),
            },
        };
        self.position += 1;
        Ok(delta)
    }
}

/// Enforces a minimum spacing (the payload's serialization time) while
/// keeping the long-run rate: a draw shorter than the minimum delays the
/// packet, and the delay is absorbed by later, longer draws.
#[derive(Clone, Debug)]
pub struct PacedSource {
    source: PatternSource,
    min_gap: SimTime,
    ideal: SimTime,
    actual: SimTime,
}

impl PacedSource {
    pub fn new(source: PatternSource, min_gap: SimTime) -> Self {
        PacedSource {
            source,
            min_gap,
            ideal: SimTime::ZERO,
            actual: SimTime::ZERO,
        }
    }

    pub fn next_interdeparture<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<SimTime, RateError> {
        self.ideal += self.source.next_interdeparture(rng)?;
        let next = self.ideal.max(self.actual + self.min_gap);
        let delta = next - self.actual;
        self.actual = next;
        Ok(delta)
    }

    /// How far the realized schedule currently lags the ideal one.
    pub fn backlog(&self) -> SimTime {
        self.actual - self.ideal
    }
}

/// Reads a one-column CSV of inter-departure times in nanoseconds. A
/// non-numeric first row is taken as a header.
pub fn load_custom_csv<R: Read>(reader: R) -> Result<Vec<f64>, RateError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| RateError::Csv(e.to_string()))?;
        let Some(cell) = record.get(0) else { continue };
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => out.push(v),
            Ok(v) => {
                return Err(RateError::Csv(format!(
                    "row {}: {v} is not a positive duration",
                    i + 1
                )))
            }
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(RateError::Csv(format!(
                    "row {}: cannot parse `{cell}`",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn cbr_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = PatternSource::new(Pattern::Cbr { rate_pps: 1e6 }).unwrap();
        for _ in 0..10 {
            assert_eq!(
                s.next_interdeparture(&mut rng).unwrap(),
                SimTime::from_ns(1000)
            );
        }
    }

    #[test]
    fn bursts_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = PatternSource::new(Pattern::Bursts {
            burst_len: 3,
            intra_gap_ns: 67.2,
            inter_burst_ns: 10_000.0,
        })
        .unwrap();
        let got: Vec<SimTime> = (0..6)
            .map(|_| s.next_interdeparture(&mut rng).unwrap())
            .collect();
        let a = SimTime::from_ticks(672_000);
        let b = SimTime::from_ns(10_000);
        assert_eq!(got, vec![a, a, b, a, a, b]);
    }

    #[test]
    fn custom_replays_then_exhausts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = PatternSource::new(Pattern::Custom {
            deltas_ns: vec![100.0, 250.4],
        })
        .unwrap();
        assert_eq!(
            s.next_interdeparture(&mut rng).unwrap(),
            SimTime::from_ns(100)
        );
        assert_eq!(
            s.next_interdeparture(&mut rng).unwrap(),
            SimTime::from_ticks(2_504_000)
        );
        assert_eq!(s.next_interdeparture(&mut rng), Err(RateError::Exhausted));
    }

    #[test]
    fn invalid_patterns() {
        assert!(PatternSource::new(Pattern::Cbr { rate_pps: 0.0 }).is_err());
        assert!(PatternSource::new(Pattern::Poisson { rate_pps: f64::NAN }).is_err());
        assert!(PatternSource::new(Pattern::Custom {
            deltas_ns: vec![1.0, -1.0]
        })
        .is_err());
        assert!(PatternSource::new(Pattern::Bursts {
            burst_len: 0,
            intra_gap_ns: 1.0,
            inter_burst_ns: 1.0
        })
        .is_err());
    }

    #[test]
    fn paced_source_keeps_minimum_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let min = SimTime::from_ticks(672_000);
        let mut s = PacedSource::new(
            PatternSource::new(Pattern::Poisson { rate_pps: 1e6 }).unwrap(),
            min,
        );
        let mut total = SimTime::ZERO;
        for _ in 0..100_000 {
            let d = s.next_interdeparture(&mut rng).unwrap();
            assert!(d >= min);
            total += d;
        }
        // the lag behind the ideal schedule stays bounded
        assert!(s.backlog() < SimTime::from_ns(1_000));
        assert!(total > SimTime::ZERO);
    }

    #[test]
    fn csv_loading() {
        let data = "interdeparture_ns\n1000\n 67.2 \n\n2000.5\n";
        assert_eq!(
            load_custom_csv(data.as_bytes()).unwrap(),
            vec![1000.0, 67.2, 2000.5]
        );
        assert!(load_custom_csv("10\nabc\n".as_bytes()).is_err());
        assert!(load_custom_csv("10\n-3\n".as_bytes()).is_err());
    }
}
