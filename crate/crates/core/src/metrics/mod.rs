//! Per-run metrics, pause-time sweeps and chart output.

pub mod plot;
pub mod sweep;

use std::fmt;

use thiserror::Error;

use crate::routing::ProtocolKind;

pub use plot::write_plots;
pub use sweep::{run_sweep, AveragedRow, PauseRange, SeedRange, SweepError, SweepResult, SweepSpec, REFERENCE_PERIOD};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("accounting error: {delivered} delivered but only {sent} sent")]
    DeliveredExceedsSent { delivered: u64, sent: u64 },
}

/// Delivered over sent, in percent. `None` when nothing was sent.
pub fn compute_pdr(delivered: u64, sent: u64) -> Result<Option<f64>, MetricsError> {
    if delivered > sent {
        return Err(MetricsError::DeliveredExceedsSent { delivered, sent });
    }
    if sent == 0 {
        return Ok(None);
    }
    Ok(Some(100.0 * delivered as f64 / sent as f64))
}

/// Mean of `receive - send` over delivered packets. `None` when there are none.
pub fn compute_avg_delay(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    Some(pairs.iter().map(|(s, r)| r - s).sum::<f64>() / pairs.len() as f64)
}

/// Control transmissions per delivered data packet. Infinite when control
/// traffic delivered nothing.
pub fn compute_overhead(control_tx: u64, delivered: u64) -> f64 {
    match (control_tx, delivered) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (c, d) => c as f64 / d as f64,
    }
}

pub const METRICS_CSV_HEADER: &str =
    "protocol,pause_time_s,seed,pdr_percent,avg_delay_s,overhead_ratio,detected_active,detected_passive,false_positives";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub protocol: ProtocolKind,
    pub pause_time: f64,
    pub seed: u64,
    pub pdr: Option<f64>,
    pub avg_delay: Option<f64>,
    pub overhead: f64,
    pub detected_active: u64,
    pub detected_passive: u64,
    pub false_positives: u64,
}

/// Values a CSV cell can hold, with the no-traffic and infinite sentinels.
pub(crate) fn cell(v: Option<f64>) -> String {
    match v {
        None => "NA".to_string(),
        Some(x) if x.is_infinite() => "inf".to_string(),
        Some(x) => format!("{x}"),
    }
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.protocol,
            self.pause_time,
            self.seed,
            cell(self.pdr),
            cell(self.avg_delay),
            cell(Some(self.overhead)),
            self.detected_active,
            self.detected_passive,
            self.false_positives
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{METRICS_CSV_HEADER}")?;
        write!(f, "{}", self.csv_row())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdr_examples() {
        assert_eq!(compute_pdr(95, 100), Ok(Some(95.0)));
        assert_eq!(compute_pdr(0, 100), Ok(Some(0.0)));
        assert_eq!(compute_pdr(0, 0), Ok(None));
        assert!(compute_pdr(101, 100).is_err());
    }

    #[test]
    fn delay_examples() {
        let d = compute_avg_delay(&[(0.0, 0.1), (0.0, 0.3)]).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        assert_eq!(compute_avg_delay(&[]), None);
    }

    #[test]
    fn overhead_examples() {
        assert_eq!(compute_overhead(240, 100), 2.4);
        assert_eq!(compute_overhead(0, 100), 0.0);
        assert_eq!(compute_overhead(0, 0), 0.0);
        assert!(compute_overhead(5, 0).is_infinite());
    }

    #[test]
    fn csv_sentinels() {
        let r = MetricsReport {
            protocol: ProtocolKind::Tap3,
            pause_time: 0.0,
            seed: 3,
            pdr: None,
            avg_delay: None,
            overhead: f64::INFINITY,
            detected_active: 0,
            detected_passive: 0,
            false_positives: 0,
        };
        assert_eq!(r.csv_row(), "tap3,0,3,NA,NA,inf,0,0,0");
    }
}
