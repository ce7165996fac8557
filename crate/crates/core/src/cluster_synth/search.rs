//! Random search over the cluster count, preferring the smallest k whose
//! clustering isolates the rule-flagged rows.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{kmeans_fit, rowwise_flags, AnomalyRules, ClusterModel, KMeansConfig};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::parallel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSearchConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub n_trials: usize,
    /// Minimum flagged share for a cluster to count as an anomaly cluster.
    pub purity: f64,
    /// Isolation score a k must reach to be accepted.
    pub required_score: f64,
}

impl Default for ClusterSearchConfig {
    fn default() -> Self {
        ClusterSearchConfig { k_min: 5, k_max: 100, n_trials: 20, purity: 0.99, required_score: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTrial {
    pub k: usize,
    pub score: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone)]
pub struct ClusterSearch {
    pub k: usize,
    pub score: f64,
    /// False when no sampled k reached `required_score`; `k` is then the
    /// best-scoring one.
    pub criterion_met: bool,
    pub trials: Vec<KTrial>,
    pub model: ClusterModel,
}

/// Share of flagged rows that sit in clusters whose members are at least
/// `purity` flagged. 1.0 when nothing is flagged.
pub fn isolation_score(assignments: &[usize], k: usize, flags: &[bool], purity: f64) -> f64 {
    let total = flags.iter().filter(|&&f| f).count();
    if total == 0 {
        return 1.0;
    }
    let mut size = vec![0usize; k];
    let mut flagged = vec![0usize; k];
    for (&a, &f) in assignments.iter().zip(flags) {
        size[a] += 1;
        flagged[a] += usize::from(f);
    }
    let isolated: usize = (0..k)
        .filter(|&c| size[c] > 0 && flagged[c] as f64 >= purity * size[c] as f64)
        .map(|c| flagged[c])
        .sum();
    isolated as f64 / total as f64
}

pub fn search_cluster_count(
    matrix: &FeatureMatrix,
    raw_values: &[f64],
    cfg: &ClusterSearchConfig,
    kmeans: &KMeansConfig,
    rules: &AnomalyRules,
    seed: u64,
) -> Result<ClusterSearch> {
    rules.validate()?;
    if raw_values.len() != matrix.n_rows() {
        return Err(Error::shape("raw values and matrix rows differ"));
    }
    if cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(Error::param(format!("bad k range [{}, {}]", cfg.k_min, cfg.k_max)));
    }
    let k_max = cfg.k_max.min(matrix.n_rows());
    if cfg.k_min > k_max {
        return Err(Error::param(format!("k_min {} exceeds {} rows", cfg.k_min, matrix.n_rows())));
    }
    let span = k_max - cfg.k_min + 1;
    let n_trials = cfg.n_trials.clamp(1, span);
    let mut r = rng::seeded(seed);
    let mut ks: Vec<usize> = index::sample(&mut r, span, n_trials).into_iter().map(|i| cfg.k_min + i).collect();
    ks.sort_unstable();

    let flags = rowwise_flags(raw_values, rules);
    let fits: Vec<(f64, ClusterModel)> = parallel::map_slice(&ks, |&k| {
        let km = KMeansConfig { k, seed: rng::derive(seed, k as u64), ..kmeans.clone() };
        let model = kmeans_fit(matrix, &km).expect("k within row count");
        (isolation_score(&model.assignments, k, &flags, cfg.purity), model)
    });

    let trials: Vec<KTrial> = fits
        .iter()
        .map(|(score, m)| KTrial { k: m.k, score: *score, inertia: m.inertia })
        .collect();
    // ks ascending: the first passing entry is the smallest k.
    let pick = match fits.iter().position(|(s, _)| *s >= cfg.required_score) {
        Some(i) => (i, true),
        None => {
            let i = (0..fits.len())
                .max_by(|&a, &b| fits[a].0.total_cmp(&fits[b].0).then(b.cmp(&a)))
                .expect("at least one trial");
            log::warn!(
                "no cluster count in [{}, {}] reached isolation score {}; using k = {} (score {:.4})",
                cfg.k_min,
                k_max,
                cfg.required_score,
                fits[i].1.k,
                fits[i].0
            );
            (i, false)
        }
    };
    let (score, model) = fits.into_iter().nth(pick.0).unwrap();
    Ok(ClusterSearch { k: model.k, score, criterion_met: pick.1, trials, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn single_point_space() {
        let mut r = rng::seeded(1);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![r.random(), r.random()]).collect();
        let raw: Vec<f64> = (0..60).map(|_| 0.1 + 0.01 * r.random::<f64>()).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let cfg = ClusterSearchConfig { k_min: 7, k_max: 7, n_trials: 5, ..Default::default() };
        let out = search_cluster_count(&m, &raw, &cfg, &KMeansConfig::default(), &AnomalyRules::default(), 3).unwrap();
        assert_eq!(out.k, 7);
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn isolation_score_counts_pure_clusters() {
        let a = [0, 0, 1, 1, 1, 2];
        let f = [true, true, false, false, true, true];
        assert_eq!(isolation_score(&a, 3, &f, 0.99), 0.75);
        assert_eq!(isolation_score(&a, 3, &[false; 6], 0.99), 1.0);
    }

    #[test]
    fn bad_ranges_rejected() {
        let m = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let cfg = ClusterSearchConfig { k_min: 5, k_max: 4, ..Default::default() };
        assert!(search_cluster_count(&m, &[0.1, 0.1], &cfg, &KMeansConfig::default(), &AnomalyRules::default(), 0).is_err());
    }
}
