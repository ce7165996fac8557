//! Random search over GBDT hyperparameters and importance-based feature
//! compaction.

use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, split_train_test, Metrics};
use crate::gbdt::{GbdtParams, GradientBoostedEnsemble};
use crate::matrix::FeatureMatrix;
use crate::parallel;
use crate::rng;

/// Inclusive integer ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub n_estimators: (usize, usize),
    pub max_depth: (usize, usize),
    pub num_leaves: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace { n_estimators: (10, 50), max_depth: (3, 8), num_leaves: (4, 20) }
    }
}

fn width(r: (usize, usize)) -> usize {
    r.1 - r.0 + 1
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: (usize, usize), min: usize| r.0 >= min && r.0 <= r.1;
        if !ok(self.n_estimators, 1) || !ok(self.max_depth, 1) || !ok(self.num_leaves, 2) {
            return Err(Error::param(format!("invalid search space {self:?}")));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        width(self.n_estimators) * width(self.max_depth) * width(self.num_leaves)
    }

    /// The `i`-th point in (n_estimators, max_depth, num_leaves) row-major
    /// order.
    pub fn point(&self, i: usize) -> (usize, usize, usize) {
        let (wd, wl) = (width(self.max_depth), width(self.num_leaves));
        let l = i % wl;
        let d = (i / wl) % wd;
        let e = i / (wl * wd);
        (self.n_estimators.0 + e, self.max_depth.0 + d, self.num_leaves.0 + l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub space: SearchSpace,
    pub n_trials: usize,
    pub validation_frac: f64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig { space: SearchSpace::default(), n_trials: 20, validation_frac: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub trial: usize,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub num_leaves: usize,
    pub metrics: Metrics,
    /// 1 for the selected trial, by the selection ordering.
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub trials: Vec<Trial>,
    /// Index into `trials` of the selected configuration.
    pub best: usize,
    pub best_params: GbdtParams,
    /// Validation metrics of `base` (the untuned configuration) on the same
    /// split.
    pub untuned: Metrics,
}

fn better(a: &Trial, b: &Trial) -> bool {
    let (ma, mb) = (&a.metrics, &b.metrics);
    ma.f1
        .total_cmp(&mb.f1)
        .then(ma.accuracy.total_cmp(&mb.accuracy))
        .then(b.n_estimators.cmp(&a.n_estimators))
        .is_gt()
}

/// Distinct point indices drawn uniformly without replacement; more trials
/// than points are clamped.
pub fn sample_points(space: &SearchSpace, n_trials: usize, seed: u64) -> Vec<usize> {
    let size = space.size();
    if n_trials > size {
        log::warn!("{n_trials} trials requested but the space has {size} points; clamping");
    }
    index::sample(&mut rng::seeded(seed), size, n_trials.min(size)).into_vec()
}

/// Samples `n_trials` distinct points of the space, fits each on a
/// stratified training part of the data and scores F1 on the held-out
/// validation part. Ties on F1 go to higher accuracy, then fewer trees,
/// then the earlier trial.
pub fn random_search(
    matrix: &FeatureMatrix,
    labels: &[u8],
    base: &GbdtParams,
    cfg: &TuningConfig,
    seed: u64,
) -> Result<TuningResult> {
    cfg.space.validate()?;
    if cfg.n_trials == 0 {
        return Err(Error::param("n_trials must be at least 1"));
    }
    let split = split_train_test(labels, cfg.validation_frac, rng::derive(seed, 0))?;
    let fit_x = matrix.select_rows(&split.train);
    let fit_y: Vec<u8> = split.train.iter().map(|&i| labels[i]).collect();
    let val_x = matrix.select_rows(&split.test);
    let val_y: Vec<u8> = split.test.iter().map(|&i| labels[i]).collect();

    let points = sample_points(&cfg.space, cfg.n_trials, rng::derive(seed, 1));
    let n_trials = points.len();
    let score = |p: &GbdtParams| -> Result<Metrics> {
        let model = GradientBoostedEnsemble::fit(&fit_x, &fit_y, p)?;
        compute_metrics(&val_y, &model.predict(&val_x)?)
    };
    let trials: Vec<Result<Trial>> = parallel::map_range(n_trials, |t| {
        let (n_estimators, max_depth, num_leaves) = cfg.space.point(points[t]);
        let p = GbdtParams {
            n_estimators,
            max_depth,
            num_leaves,
            seed: rng::derive(seed, 2 + t as u64),
            ..base.clone()
        };
        Ok(Trial { trial: t, n_estimators, max_depth, num_leaves, metrics: score(&p)?, rank: 0 })
    });
    let mut trials: Vec<Trial> = trials.into_iter().collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| {
        if better(&trials[a], &trials[b]) {
            std::cmp::Ordering::Less
        } else if better(&trials[b], &trials[a]) {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });
    for (r, &i) in order.iter().enumerate() {
        trials[i].rank = r + 1;
    }
    let best = order[0];
    let b = &trials[best];
    let best_params = GbdtParams {
        n_estimators: b.n_estimators,
        max_depth: b.max_depth,
        num_leaves: b.num_leaves,
        ..base.clone()
    };
    let untuned = score(base)?;
    Ok(TuningResult { trials, best, best_params, untuned })
}

/// `trial,n_estimators,max_depth,num_leaves,accuracy,precision,recall,f1,rank`
pub fn write_trials_csv<W: Write>(trials: &[Trial], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "n_estimators", "max_depth", "num_leaves", "accuracy", "precision", "recall", "f1", "rank"])?;
    for t in trials {
        let m = &t.metrics;
        out.write_record([
            t.trial.to_string(),
            t.n_estimators.to_string(),
            t.max_depth.to_string(),
            t.num_leaves.to_string(),
            format!("{:.6}", m.accuracy),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            t.rank.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("trials", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSelection {
    /// Retained columns, most important first.
    pub ranked: Vec<usize>,
    /// Share of total gain the retained columns carry.
    pub retained_share: f64,
}

impl FeatureSelection {
    pub fn ascending(&self) -> Vec<usize> {
        let mut v = self.ranked.clone();
        v.sort_unstable();
        v
    }
}

/// Shortest prefix of columns, by descending importance (ties to the lower
/// index), whose cumulative gain reaches `threshold` of the total.
pub fn select_features(importances: &[f64], threshold: f64) -> Result<FeatureSelection> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param(format!("gain threshold {threshold} outside (0, 1]")));
    }
    if importances.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::param("importances must be non-negative"));
    }
    let total: f64 = importances.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("model has no split gain to rank features by".into()));
    }
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut ranked = Vec::new();
    for j in order {
        ranked.push(j);
        acc += importances[j];
        if acc >= threshold * total {
            break;
        }
    }
    Ok(FeatureSelection { ranked, retained_share: acc / total })
}

/// Refits on the `selected` columns (ascending) and records them as the
/// model's feature map.
pub fn retrain_compact(
    matrix: &FeatureMatrix,
    labels: &[u8],
    params: &GbdtParams,
    selected: &FeatureSelection,
) -> Result<GradientBoostedEnsemble> {
    let cols = selected.ascending();
    let sub = matrix.select_columns(&cols)?;
    let mut model = GradientBoostedEnsemble::fit(&sub, labels, params)?;
    model.feature_map = cols;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn default_space_size_and_corners() {
        let s = SearchSpace::default();
        assert_eq!(s.size(), 41 * 6 * 17);
        assert_eq!(s.point(0), (10, 3, 4));
        assert_eq!(s.point(s.size() - 1), (50, 8, 20));
        let all: HashSet<_> = (0..s.size()).map(|i| s.point(i)).collect();
        assert_eq!(all.len(), s.size());
    }

    #[test]
    fn selection_examples() {
        let s = select_features(&[0.5, 0.3, 0.15, 0.05], 0.9).unwrap();
        assert_eq!(s.ranked, vec![0, 1, 2]);
        assert!((s.retained_share - 0.95).abs() < 1e-12);
        let s = select_features(&[0.0, 1.0, 0.0], 0.9).unwrap();
        assert_eq!(s.ranked, vec![1]);
        let s = select_features(&[0.25; 4], 0.5).unwrap();
        assert_eq!(s.ranked, vec![0, 1]);
        assert!(select_features(&[0.0, 0.0], 0.9).is_err());
    }

    #[test]
    fn selection_prefix_is_minimal() {
        let mut r = rng::seeded(5);
        for _ in 0..200 {
            let imp: Vec<f64> = (0..12).map(|_| if r.random_bool(0.3) { 0.0 } else { r.random::<f64>() }).collect();
            if imp.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let s = select_features(&imp, 0.9).unwrap();
            let total: f64 = imp.iter().sum();
            let kept: f64 = s.ranked.iter().map(|&j| imp[j]).sum();
            assert!(kept >= 0.9 * total);
            let without_last: f64 = s.ranked[..s.ranked.len() - 1].iter().map(|&j| imp[j]).sum();
            assert!(without_last < 0.9 * total);
        }
    }

    #[test]
    fn sampling_covers_space_uniformly() {
        // chi-square over n_estimators marginal, 41 cells
        let s = SearchSpace::default();
        let mut counts = [0usize; 41];
        let draws = 400;
        for seed in 0..draws {
            for i in index::sample(&mut rng::seeded(seed), s.size(), 20) {
                counts[s.point(i).0 - 10] += 1;
            }
        }
        let expected = (draws as f64 * 20.0) / 41.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 40 degrees of freedom, 99.9th percentile is about 73.4
        assert!(chi2 < 73.4, "{chi2}");
    }

    #[test]
    fn small_space_frequencies_within_three_sigma() {
        let s = SearchSpace { n_estimators: (1, 2), max_depth: (1, 2), num_leaves: (2, 3) };
        let draws = 10_000;
        let mut counts = vec![0usize; s.size()];
        for seed in 0..draws {
            counts[sample_points(&s, 1, seed)[0]] += 1;
        }
        let p = 1.0 / s.size() as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{c} vs {mean}");
        }
    }

    #[test]
    fn oversized_trial_count_is_clamped() {
        let s = SearchSpace { n_estimators: (5, 5), max_depth: (2, 3), num_leaves: (4, 4) };
        let mut v = sample_points(&s, 10, 1);
        v.sort_unstable();
        assert_eq!(v, vec![0, 1]);
    }

    fn data(n: usize) -> (FeatureMatrix, Vec<u8>) {
        let mut r = rng::seeded(9);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| r.random::<f64>()).collect()).collect();
        let y = rows.iter().map(|x| u8::from(x[1] + 0.3 * x[3] > 0.8)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn search_is_reproducible_and_picks_best() {
        let (m, y) = data(600);
        let base = GbdtParams { min_samples_leaf: 5, ..Default::default() };
        let cfg = TuningConfig { n_trials: 6, ..Default::default() };
        let a = random_search(&m, &y, &base, &cfg, 3).unwrap();
        let b = parallel::sequential(|| random_search(&m, &y, &base, &cfg, 3).unwrap());
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.trials.len(), 6);
        let best = &a.trials[a.best];
        assert!(a.trials.iter().all(|t| t.metrics.f1 <= best.metrics.f1));
        assert_eq!(a.best_params.n_estimators, best.n_estimators);
        assert_eq!(best.rank, 1);
        let mut ranks: Vec<usize> = a.trials.iter().map(|t| t.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn single_point_space_returns_it() {
        let (m, y) = data(300);
        let base = GbdtParams { min_samples_leaf: 5, ..Default::default() };
        let cfg = TuningConfig {
            space: SearchSpace { n_estimators: (42, 42), max_depth: (6, 6), num_leaves: (18, 18) },
            n_trials: 3,
            ..Default::default()
        };
        let out = random_search(&m, &y, &base, &cfg, 1).unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!((out.best_params.n_estimators, out.best_params.max_depth, out.best_params.num_leaves), (42, 6, 18));
    }

    #[test]
    fn dropping_constant_column_keeps_predictions() {
        let (m, y) = data(400);
        let with_const = m.hstack(&FeatureMatrix::from_rows(&vec![vec![0.5]; 400]).unwrap()).unwrap();
        let p = GbdtParams { n_estimators: 10, min_samples_leaf: 5, ..Default::default() };
        let full = GradientBoostedEnsemble::fit(&with_const, &y, &p).unwrap();
        assert_eq!(full.feature_importances[5], 0.0);
        let sel = FeatureSelection { ranked: vec![0, 1, 2, 3, 4], retained_share: 1.0 };
        let compact = retrain_compact(&with_const, &y, &p, &sel).unwrap();
        let a = full.predict_raw(&with_const).unwrap();
        let b = compact.predict_raw(&m).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9));
    }

    #[test]
    fn compact_retrain_maps_columns() {
        let (m, y) = data(400);
        let p = GbdtParams { n_estimators: 10, min_samples_leaf: 5, ..Default::default() };
        let full = GradientBoostedEnsemble::fit(&m, &y, &p).unwrap();
        let sel = select_features(&full.feature_importances, 0.9).unwrap();
        assert!(sel.ranked.contains(&1));
        let compact = retrain_compact(&m, &y, &p, &sel).unwrap();
        assert_eq!(compact.feature_map, sel.ascending());
        let sub = m.select_columns(&compact.feature_map).unwrap();
        assert_eq!(compact.predict(&sub).unwrap().len(), 400);
    }
}
