use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use super::{cell, MetricsReport, METRICS_CSV_HEADER};
use crate::routing::ProtocolKind;
use crate::sim::{run, ConfigError, RunError, RunOptions, ScenarioConfig};

/// Run length the pause-time axis is quoted against. Sweeps over shorter
/// runs shrink pause times by `sim_duration / REFERENCE_PERIOD`.
pub const REFERENCE_PERIOD: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("bad range `{0}`")]
    BadRange(String),
    #[error("sweep needs at least one {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {protocol} pause={pause} seed={seed} failed: {source}")]
    Run {
        protocol: ProtocolKind,
        pause: f64,
        seed: u64,
        source: RunError,
    },
}

/// `start:end:step`, both ends included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauseRange {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl PauseRange {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for PauseRange {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SweepError::BadRange(s.to_string());
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let r = match parts[..] {
            [v] => PauseRange {
                start: v,
                end: v,
                step: 1.0,
            },
            [start, end, step] => PauseRange { start, end, step },
            _ => return Err(bad()),
        };
        if !(r.step > 0.0) || r.end < r.start || r.start < 0.0 {
            return Err(bad());
        }
        Ok(r)
    }
}

/// `first..last` (inclusive), `first..=last`, or a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn values(&self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }
}

impl FromStr for SeedRange {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SweepError::BadRange(s.to_string());
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
        let r = match s.split_once("..") {
            Some((a, b)) => SeedRange {
                first: num(a)?,
                last: num(b.strip_prefix('=').unwrap_or(b))?,
            },
            None => {
                let v = num(s)?;
                SeedRange { first: v, last: v }
            }
        };
        if r.last < r.first {
            return Err(bad());
        }
        Ok(r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    /// Pause times in simulated seconds.
    pub pause_times: Vec<f64>,
    pub protocols: Vec<ProtocolKind>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.pause_times.is_empty() {
            return Err(SweepError::Empty("pause time"));
        }
        if self.protocols.is_empty() {
            return Err(SweepError::Empty("protocol"));
        }
        if self.seeds.is_empty() {
            return Err(SweepError::Empty("seed"));
        }
        for &p in &self.pause_times {
            let mut c = self.base.clone();
            c.pause_time = p;
            c.validate()?;
        }
        Ok(())
    }

    /// The grid in CSV order: protocol, then pause, then seed.
    pub fn grid(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &protocol in &self.protocols {
            for &pause in &self.pause_times {
                for &seed in &self.seeds {
                    let mut c = self.base.clone();
                    c.protocol = protocol;
                    c.pause_time = pause;
                    c.rng_seed = seed;
                    out.push(c);
                }
            }
        }
        out
    }
}

/// Mean over the seeds of one (protocol, pause) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedRow {
    pub protocol: ProtocolKind,
    pub pause_time: f64,
    pub pdr: Option<f64>,
    pub avg_delay: Option<f64>,
    pub overhead: f64,
    pub detected_active: f64,
    pub detected_passive: f64,
    pub false_positives: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl AveragedRow {
    /// Averages `rows`, skipping no-traffic sentinels.
    pub fn of(rows: &[MetricsReport]) -> AveragedRow {
        let first = &rows[0];
        AveragedRow {
            protocol: first.protocol,
            pause_time: first.pause_time,
            pdr: mean(rows.iter().filter_map(|r| r.pdr)),
            avg_delay: mean(rows.iter().filter_map(|r| r.avg_delay)),
            overhead: mean(rows.iter().map(|r| r.overhead)).unwrap_or(0.0),
            detected_active: mean(rows.iter().map(|r| r.detected_active as f64)).unwrap_or(0.0),
            detected_passive: mean(rows.iter().map(|r| r.detected_passive as f64)).unwrap_or(0.0),
            false_positives: mean(rows.iter().map(|r| r.false_positives as f64)).unwrap_or(0.0),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},avg,{},{},{},{},{},{}",
            self.protocol,
            self.pause_time,
            cell(self.pdr),
            cell(self.avg_delay),
            cell(Some(self.overhead)),
            self.detected_active,
            self.detected_passive,
            self.false_positives
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// In grid order.
    pub runs: Vec<MetricsReport>,
    /// One per (protocol, pause), in grid order.
    pub averages: Vec<AveragedRow>,
}

impl SweepResult {
    pub fn average(&self, protocol: ProtocolKind, pause_time: f64) -> Option<&AveragedRow> {
        self.averages
            .iter()
            .find(|a| a.protocol == protocol && a.pause_time == pause_time)
    }

    pub fn series(&self, protocol: ProtocolKind) -> impl Iterator<Item = &AveragedRow> {
        self.averages.iter().filter(move |a| a.protocol == protocol)
    }

    /// Each (protocol, pause) group's seed rows followed by its average row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_CSV_HEADER);
        s.push('\n');
        for avg in &self.averages {
            for r in self
                .runs
                .iter()
                .filter(|r| r.protocol == avg.protocol && r.pause_time == avg.pause_time)
            {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            s.push_str(&avg.csv_row());
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for SweepResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv())
    }
}

/// Runs the whole grid, in parallel across runs.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let runs = spec
        .grid()
        .par_iter()
        .map(|c| {
            run(c, RunOptions::default())
                .map(|out| out.report)
                .map_err(|source| SweepError::Run {
                    protocol: c.protocol,
                    pause: c.pause_time,
                    seed: c.rng_seed,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let averages = runs
        .chunks(spec.seeds.len())
        .map(AveragedRow::of)
        .collect();
    Ok(SweepResult { runs, averages })
}
