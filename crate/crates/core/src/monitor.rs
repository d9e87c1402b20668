//! Learned sequence-number behavior and per-sample classification.
//!
//! A node collects 3-component samples from the route replies it handles,
//! takes their mean, and uses the largest squared distance from that mean as
//! its threshold. Anything strictly farther than the threshold is malicious.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonitorError {
    #[error("window not trained")]
    NotTrained,
}

/// One observation: source sequence, originator sequence and the
/// destination-sequence advance between request and reply.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeqVector {
    pub sseq: f64,
    pub oseq: f64,
    pub dseq_delta: f64,
}

impl SeqVector {
    pub fn new(sseq: f64, oseq: f64, dseq_delta: f64) -> Self {
        SeqVector {
            sseq,
            oseq,
            dseq_delta,
        }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.sseq, self.oseq, self.dseq_delta]
    }

    pub fn from_components(c: [f64; 3]) -> Self {
        SeqVector::new(c[0], c[1], c[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Normal,
    Malicious,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Malicious => "malicious",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub label: Label,
    pub distance: f64,
}

pub fn mean_vector(samples: &[SeqVector]) -> Result<[f64; 3], MonitorError> {
    if samples.is_empty() {
        return Err(MonitorError::NotTrained);
    }
    let mut acc = [0.0f64; 3];
    for s in samples {
        for (a, c) in acc.iter_mut().zip(s.components()) {
            *a += c;
        }
    }
    let n = samples.len() as f64;
    Ok(acc.map(|a| a / n))
}

/// Squared Euclidean distance `|y - mean|^2`.
pub fn distance(sample: &SeqVector, mean: &[f64; 3]) -> f64 {
    sample
        .components()
        .iter()
        .zip(mean)
        .map(|(y, m)| (y - m) * (y - m))
        .sum()
}

/// The training maximum of `distance(sample, mean)`.
pub fn train_threshold(samples: &[SeqVector]) -> Result<f64, MonitorError> {
    let mean = mean_vector(samples)?;
    Ok(samples
        .iter()
        .map(|s| distance(s, &mean))
        .fold(0.0, f64::max))
}

/// A bounded training set plus the mean and threshold learned from it.
///
/// The set is assumed clean when first trained. Later batches are merged only
/// when none of their samples was judged malicious; the oldest samples are
/// evicted so the stored count never grows.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingWindow {
    samples: VecDeque<SeqVector>,
    mean: Option<[f64; 3]>,
    threshold: Option<f64>,
    window_index: u64,
}

impl Default for TrainingWindow {
    fn default() -> Self {
        TrainingWindow::new()
    }
}

impl TrainingWindow {
    pub fn new() -> Self {
        TrainingWindow {
            samples: VecDeque::new(),
            mean: None,
            threshold: None,
            window_index: 0,
        }
    }

    /// Builds and trains a window in one go.
    pub fn trained(samples: impl IntoIterator<Item = SeqVector>) -> Result<Self, MonitorError> {
        let mut w = TrainingWindow::new();
        for s in samples {
            w.push_untrained(s);
        }
        w.train()?;
        Ok(w)
    }

    /// Adds a sample during the initial learning interval.
    pub fn push_untrained(&mut self, sample: SeqVector) {
        self.samples.push_back(sample);
        self.mean = None;
        self.threshold = None;
    }

    /// Fits mean and threshold to the current samples.
    pub fn train(&mut self) -> Result<f64, MonitorError> {
        let samples = self.samples.make_contiguous();
        let mean = mean_vector(samples)?;
        let th = samples.iter().map(|s| distance(s, &mean)).fold(0.0, f64::max);
        self.mean = Some(mean);
        self.threshold = Some(th);
        Ok(th)
    }

    pub fn is_trained(&self) -> bool {
        self.threshold.is_some()
    }

    pub fn samples(&self) -> impl Iterator<Item = &SeqVector> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> Option<[f64; 3]> {
        self.mean
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    pub fn classify(&self, sample: &SeqVector) -> Result<Verdict, MonitorError> {
        let (Some(mean), Some(th)) = (self.mean, self.threshold) else {
            return Err(MonitorError::NotTrained);
        };
        let d = distance(sample, &mean);
        let label = if d > th { Label::Malicious } else { Label::Normal };
        Ok(Verdict { label, distance: d })
    }

    /// Folds a classified batch into the window. Returns whether it merged.
    pub fn advance(&mut self, new_samples: &[SeqVector]) -> Result<bool, MonitorError> {
        if !self.is_trained() {
            return Err(MonitorError::NotTrained);
        }
        self.window_index += 1;
        for s in new_samples {
            if self.classify(s)?.label == Label::Malicious {
                return Ok(false);
            }
        }
        if new_samples.is_empty() {
            return Ok(false);
        }
        let cap = self.samples.len();
        for s in new_samples {
            self.samples.push_back(*s);
        }
        while self.samples.len() > cap {
            self.samples.pop_front();
        }
        self.train()?;
        Ok(true)
    }
}

/// Free-function form of [`TrainingWindow::classify`].
pub fn classify(sample: &SeqVector, window: &TrainingWindow) -> Result<Verdict, MonitorError> {
    window.classify(sample)
}

/// Returns the advanced window; a rejected batch leaves it untouched apart
/// from the interval counter.
pub fn advance_window(window: &TrainingWindow, new_samples: &[SeqVector]) -> Result<TrainingWindow, MonitorError> {
    let mut next = window.clone();
    if !next.advance(new_samples)? {
        // A rejected batch keeps the window bit-identical.
        return Ok(window.clone());
    }
    Ok(next)
}

/// One verdict as a trace row: `node_id,sseq,oseq,dseq_delta,distance,threshold,label`.
pub fn verdict_csv_row(node_id: u64, sample: &SeqVector, verdict: &Verdict, threshold: f64) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{},{},{},{},{}",
        node_id,
        sample.sseq,
        sample.oseq,
        sample.dseq_delta,
        verdict.distance,
        threshold,
        verdict.label.as_str()
    );
    s
}

pub const VERDICT_CSV_HEADER: &str = "node_id,sseq,oseq,dseq_delta,distance,threshold,label";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(a: f64, b: f64, c: f64) -> SeqVector {
        SeqVector::new(a, b, c)
    }

    #[test]
    fn mean_of_two() {
        assert_eq!(mean_vector(&[v(1., 1., 1.), v(3., 3., 3.)]).unwrap(), [2., 2., 2.]);
        assert_eq!(mean_vector(&[v(5., 2., 0.)]).unwrap(), [5., 2., 0.]);
        assert_eq!(mean_vector(&[]), Err(MonitorError::NotTrained));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&v(2., 2., 2.), &[2., 2., 2.]), 0.0);
        assert_eq!(distance(&v(4., 4., 4.), &[2., 2., 2.]), 12.0);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(train_threshold(&[v(1., 1., 1.), v(3., 3., 3.)]).unwrap(), 3.0);
        assert_eq!(train_threshold(&[v(7., 1., 2.)]).unwrap(), 0.0);
        assert!(train_threshold(&[]).is_err());
    }

    #[test]
    fn classify_examples() {
        let w = TrainingWindow::trained([v(1., 1., 1.), v(3., 3., 3.)]).unwrap();
        let far = w.classify(&v(10., 10., 10.)).unwrap();
        assert_eq!(far.distance, 192.0);
        assert_eq!(far.label, Label::Malicious);
        for s in w.samples() {
            assert_eq!(w.classify(s).unwrap().label, Label::Normal);
        }
        // d = 3 exactly: (3,1,1) is at squared distance 1+1+1 from (2,2,2).
        let edge = w.classify(&v(3., 1., 1.)).unwrap();
        assert_eq!(edge.distance, 3.0);
        assert_eq!(edge.label, Label::Normal);
    }

    #[test]
    fn untrained_refuses() {
        let w = TrainingWindow::new();
        assert_eq!(w.classify(&v(0., 0., 0.)), Err(MonitorError::NotTrained));
        assert!(advance_window(&w, &[v(0., 0., 0.)]).is_err());
    }

    #[test]
    fn advance_merges_normal_batch() {
        let w = TrainingWindow::trained([v(1., 1., 1.), v(3., 3., 3.), v(2., 2., 2.)]).unwrap();
        let next = advance_window(&w, &[v(2., 2., 3.)]).unwrap();
        assert_eq!(next.len(), 3);
        // oldest (1,1,1) evicted
        let kept: Vec<_> = next.samples().copied().collect();
        assert_eq!(kept, vec![v(3., 3., 3.), v(2., 2., 2.), v(2., 2., 3.)]);
        assert_ne!(next.mean(), w.mean());
    }

    #[test]
    fn advance_rejects_batch_with_malicious() {
        let w = TrainingWindow::trained([v(1., 1., 1.), v(3., 3., 3.)]).unwrap();
        let next = advance_window(&w, &[v(2., 2., 2.), v(50., 0., 0.)]).unwrap();
        assert_eq!(next, w);
    }

    #[test]
    fn advance_with_identical_batch_is_idempotent() {
        let base = [v(1., 1., 1.), v(3., 3., 3.)];
        let w = TrainingWindow::trained(base).unwrap();
        let next = advance_window(&w, &base).unwrap();
        assert_eq!(next.mean(), w.mean());
        assert_eq!(next.threshold(), w.threshold());
    }

    #[test]
    fn csv_row_shape() {
        let w = TrainingWindow::trained([v(1., 1., 1.), v(3., 3., 3.)]).unwrap();
        let s = v(10., 10., 10.);
        let row = verdict_csv_row(4, &s, &w.classify(&s).unwrap(), 3.0);
        assert_eq!(row, "4,10,10,10,192,3,malicious");
    }

    fn arb_vec() -> impl Strategy<Value = SeqVector> {
        (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(a, b, c)| v(a, b, c))
    }

    proptest! {
        #[test]
        fn training_samples_always_normal(samples in prop::collection::vec(arb_vec(), 1..40)) {
            let w = TrainingWindow::trained(samples.clone()).unwrap();
            for s in &samples {
                prop_assert_eq!(w.classify(s).unwrap().label, Label::Normal);
            }
        }

        #[test]
        fn threshold_is_attained(samples in prop::collection::vec(arb_vec(), 1..40)) {
            let w = TrainingWindow::trained(samples.clone()).unwrap();
            let mean = w.mean().unwrap();
            let th = w.threshold().unwrap();
            prop_assert!(samples.iter().any(|s| distance(s, &mean) == th));
        }

        #[test]
        fn distance_translation_invariant(y in arb_vec(), m in arb_vec(), c in arb_vec()) {
            let shifted = v(y.sseq + c.sseq, y.oseq + c.oseq, y.dseq_delta + c.dseq_delta);
            let mean = [m.sseq + c.sseq, m.oseq + c.oseq, m.dseq_delta + c.dseq_delta];
            let a = distance(&y, &m.components());
            let b = distance(&shifted, &mean);
            prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0));
        }

        #[test]
        fn uniform_scaling_preserves_labels(
            samples in prop::collection::vec(arb_vec(), 1..20),
            q in arb_vec(),
            k in 0.01..100.0f64,
        ) {
            // Powers of two keep the arithmetic exact, so labels compare reliably.
            let k = 2f64.powi(k.log2().round() as i32);
            let scale = |s: &SeqVector| v(s.sseq * k, s.oseq * k, s.dseq_delta * k);
            let w = TrainingWindow::trained(samples.clone()).unwrap();
            let ws = TrainingWindow::trained(samples.iter().map(scale)).unwrap();
            prop_assert_eq!(w.classify(&q).unwrap().label, ws.classify(&scale(&q)).unwrap().label);
            let th = w.threshold().unwrap();
            prop_assert!((ws.threshold().unwrap() - th * k * k).abs() <= 1e-9 * (th * k * k).max(1.0));
        }

        #[test]
        fn advance_never_grows(
            samples in prop::collection::vec(arb_vec(), 1..20),
            batch in prop::collection::vec(arb_vec(), 0..10),
        ) {
            let w = TrainingWindow::trained(samples).unwrap();
            let n = w.len();
            let next = advance_window(&w, &batch).unwrap();
            prop_assert!(next.len() <= n);
        }
    }
}
