//! SMOTE over the minority rows and assembly of the attack dataset.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::kmeans::sq_dist;
use crate::dataset::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::parallel;
use crate::preprocess::{inject_noise_rows, NoiseConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub n_synthetic: usize,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig { n_synthetic: 0, k_neighbors: 5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub synthetic: FeatureMatrix,
    /// Neighbour count actually used (clamped to minority size - 1).
    pub k_used: usize,
}

/// The `k` nearest other rows of every row, by (distance, index).
pub fn nearest_neighbors(rows: &FeatureMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = rows.n_rows();
    parallel::map_range(n, |i| {
        let mut d: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (sq_dist(rows.row(i), rows.row(j)), j)).collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k, by);
            d.truncate(k);
        }
        d.sort_by(by);
        d.into_iter().map(|(_, j)| j).collect()
    })
}

/// Each synthetic row is `x + u * (nn - x)` for a uniformly chosen minority
/// row `x`, one of its `k` nearest minority neighbours `nn`, and
/// `u ~ U[0, 1)` shared across coordinates.
pub fn smote_oversample(minority: &FeatureMatrix, cfg: &SmoteConfig) -> Result<SmoteOutput> {
    let m = minority.n_rows();
    if m < 2 {
        return Err(Error::Degenerate(format!("SMOTE needs at least 2 minority rows, got {m}")));
    }
    if cfg.k_neighbors == 0 {
        return Err(Error::param("k_neighbors must be at least 1"));
    }
    let k = if cfg.k_neighbors >= m {
        log::warn!("k_neighbors {} >= minority count {m}; clamping to {}", cfg.k_neighbors, m - 1);
        m - 1
    } else {
        cfg.k_neighbors
    };
    let neighbors = nearest_neighbors(minority, k);

    let d = minority.n_cols();
    let mut rng = rng::seeded(cfg.seed);
    let mut values = Vec::with_capacity(cfg.n_synthetic * d);
    for _ in 0..cfg.n_synthetic {
        let base = rng.random_range(0..m);
        let nn = neighbors[base][rng.random_range(0..k)];
        let gap: f64 = rng.random();
        let (x, y) = (minority.row(base), minority.row(nn));
        values.extend(x.iter().zip(y).map(|(a, b)| a + gap * (b - a)));
    }
    let synthetic = FeatureMatrix::new(values, cfg.n_synthetic, minority.columns().to_vec())?;
    Ok(SmoteOutput { synthetic, k_used: k })
}

/// Appends `smote.n_synthetic` SMOTE rows (label 1, synthetic) built from
/// the positive rows of `labeled`, applies noise, then shuffles rows with
/// `shuffle_seed`.
pub fn build_attack_dataset(
    labeled: &LabeledDataset,
    smote: &SmoteConfig,
    noise: &NoiseConfig,
    shuffle_seed: u64,
) -> Result<LabeledDataset> {
    let mut combined = labeled.clone();
    if smote.n_synthetic > 0 {
        let minority = labeled.matrix.select_rows(&labeled.positive_rows());
        let out = smote_oversample(&minority, smote)?;
        let synth = LabeledDataset::new(
            out.synthetic,
            vec![1; smote.n_synthetic],
            vec![Provenance::Synthetic; smote.n_synthetic],
        )?;
        combined = combined.concat(&synth)?;
    }

    let mask: Option<Vec<bool>> = noise
        .synthetic_only
        .then(|| combined.provenance.iter().map(|&p| p == Provenance::Synthetic).collect());
    combined.matrix = inject_noise_rows(&combined.matrix, noise, mask.as_deref())?;

    let mut order: Vec<usize> = (0..combined.len()).collect();
    order.shuffle(&mut rng::seeded(shuffle_seed));
    Ok(combined.select_rows(&order))
}
