//! Stratified splitting, classification metrics, latency measurement and
//! model comparison reports.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::baselines::{Classifier, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::parallel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class, `round(test_frac * count)` shuffled rows go to the test side.
/// Both index lists come back ascending.
pub fn split_train_test(labels: &[u8], test_frac: f64, seed: u64) -> Result<Split> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::param(format!("test fraction {test_frac} outside (0, 1)")));
    }
    let mut r = rng::seeded(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(Error::Degenerate(format!("class {class} has {} rows; stratification needs 2", idx.len())));
        }
        idx.shuffle(&mut r);
        let k = (test_frac * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Degenerate(format!("split of {} rows leaves an empty side", labels.len())));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(truth: &[u8], pred: &[u8]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == 1, p == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let mut degenerate = false;
        let accuracy = ratio(c.tp + c.tn, c.total(), &mut degenerate);
        let precision = ratio(c.tp, c.tp + c.fp, &mut degenerate);
        let recall = ratio(c.tp, c.tp + c.fn_, &mut degenerate);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate = true;
            0.0
        };
        Metrics { accuracy, precision, recall, f1, degenerate }
    }
}

pub fn compute_metrics(truth: &[u8], pred: &[u8]) -> Result<Metrics> {
    Ok(Metrics::from_counts(&ConfusionCounts::from_predictions(truth, pred)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Latency {
    /// Median over measured passes of wall time per row, in microseconds.
    pub us_per_sample: f64,
    pub min_us_per_sample: f64,
    pub passes: usize,
}

/// Times `passes` full single-threaded prediction passes over `matrix`
/// after `warmup` unmeasured ones.
pub fn bench_latency(model: &dyn Classifier, matrix: &FeatureMatrix, warmup: usize, passes: usize) -> Result<Latency> {
    if matrix.n_rows() == 0 {
        return Err(Error::Empty("latency matrix"));
    }
    let passes = passes.max(1);
    parallel::sequential(|| {
        for _ in 0..warmup {
            std::hint::black_box(model.predict(matrix)?);
        }
        let mut times = Vec::with_capacity(passes);
        for _ in 0..passes {
            let t = Instant::now();
            std::hint::black_box(model.predict(matrix)?);
            times.push(t.elapsed().as_secs_f64() * 1e6 / matrix.n_rows() as f64);
        }
        times.sort_by(f64::total_cmp);
        Ok(Latency { us_per_sample: times[times.len() / 2], min_us_per_sample: times[0], passes })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub model: String,
    pub metrics: Metrics,
    pub latency: Option<Latency>,
}

/// Fits each spec on the training rows and scores it on the test rows.
/// Latency is measured only when `measure_latency` is set.
pub fn compare_models(
    specs: &[(String, ModelSpec)],
    train: (&FeatureMatrix, &[u8]),
    test: (&FeatureMatrix, &[u8]),
    measure_latency: bool,
) -> Result<Vec<ModelReport>> {
    specs
        .iter()
        .map(|(name, spec)| {
            let t = Instant::now();
            let model = spec.fit(train.0, train.1)?;
            log::info!("{name}: trained in {:.2}s", t.elapsed().as_secs_f64());
            evaluate(name, model.as_ref(), test, measure_latency)
        })
        .collect()
}

pub fn evaluate(
    name: &str,
    model: &dyn Classifier,
    test: (&FeatureMatrix, &[u8]),
    measure_latency: bool,
) -> Result<ModelReport> {
    let pred = model.predict(test.0)?;
    let metrics = compute_metrics(test.1, &pred)?;
    let latency = if measure_latency { Some(bench_latency(model, test.0, 3, 10)?) } else { None };
    Ok(ModelReport { model: name.to_string(), metrics, latency })
}

/// `model,accuracy,precision,recall,f1,pred_time_us`; the latency cell is
/// empty when it was not measured.
pub fn write_report_csv<W: Write>(reports: &[ModelReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "accuracy", "precision", "recall", "f1", "pred_time_us"])?;
    for r in reports {
        let m = &r.metrics;
        out.write_record([
            r.model.clone(),
            format!("{:.6}", m.accuracy),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            r.latency.map(|l| format!("{:.4}", l.us_per_sample)).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("report", e))?;
    Ok(())
}

/// Fixed-width table with percentages.
pub fn format_table(reports: &[ModelReport]) -> String {
    let mut s = format!(
        "{:<22} {:>9} {:>10} {:>8} {:>8} {:>14}\n",
        "model", "accuracy", "precision", "recall", "f1", "time/sample us"
    );
    for r in reports {
        let m = &r.metrics;
        let lat = r.latency.map(|l| format!("{:.3}", l.us_per_sample)).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<22} {:>9.3} {:>10.3} {:>8.3} {:>8.3} {:>14}\n",
            r.model,
            100.0 * m.accuracy,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1,
            lat
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_is_stratified_and_rounded() {
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i < 130)).collect();
        let s = split_train_test(&labels, 0.2, 1).unwrap();
        assert_eq!(s.test.len(), 200);
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == 1).count(), 26);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(s, split_train_test(&labels, 0.2, 1).unwrap());
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split_train_test(&[0, 0, 1, 1], 0.0, 1).is_err());
        assert!(split_train_test(&[0, 0, 1, 1], 1.0, 1).is_err());
        assert!(split_train_test(&[0, 0, 0, 1], 0.5, 1).is_err());
    }

    #[test]
    fn split_hundred_rows() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 10 < 3)).collect();
        let s = split_train_test(&labels, 0.2, 4).unwrap();
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == 1).count(), 6);
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == 0).count(), 14);
    }

    #[test]
    fn hand_counted_metrics() {
        let c = ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 6 };
        let m = Metrics::from_counts(&c);
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn latency_grows_with_trees() {
        use crate::gbdt::{GbdtParams, GradientBoostedEnsemble};
        use rand::Rng;
        let mut r = rng::seeded(2);
        let rows: Vec<Vec<f64>> = (0..2000).map(|_| (0..6).map(|_| r.random::<f64>()).collect()).collect();
        let y: Vec<u8> = rows.iter().map(|x| u8::from(x[0] * x[1] + x[2] > 0.7)).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let p = GbdtParams { n_estimators: 60, min_samples_leaf: 5, ..Default::default() };
        let full = GradientBoostedEnsemble::fit(&m, &y, &p).unwrap();
        let half = full.truncated(full.trees.len() / 2);
        let a = bench_latency(&full, &m, 3, 10).unwrap();
        let b = bench_latency(&half, &m, 3, 10).unwrap();
        assert!(a.us_per_sample > 0.0 && a.us_per_sample.is_finite());
        assert!(a.us_per_sample >= 0.8 * b.us_per_sample, "{a:?} vs {b:?}");
    }

    #[test]
    fn worked_example() {
        let truth = [1, 1, 1, 0, 0, 0, 0, 1];
        let pred = [1, 1, 0, 0, 0, 1, 0, 1];
        let m = compute_metrics(&truth, &pred).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert!((m.f1 - 0.75).abs() < 1e-15);
        assert!(!m.degenerate);
    }

    #[test]
    fn no_positive_predictions_is_degenerate() {
        let m = compute_metrics(&[0, 1], &[0, 0]).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn report_csv_leaves_latency_blank() {
        let r = ModelReport {
            model: "gbdt".into(),
            metrics: compute_metrics(&[1, 0], &[1, 0]).unwrap(),
            latency: None,
        };
        let mut buf = Vec::new();
        write_report_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "gbdt,1.000000,1.000000,1.000000,1.000000,");
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_consistent(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (t, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let c = ConfusionCounts::from_predictions(&t, &p).unwrap();
            prop_assert_eq!(c.total(), t.len());
            let m = Metrics::from_counts(&c);
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            prop_assert!(m.f1 + 1e-12 >= m.precision.min(m.recall));
        }
    }
}
