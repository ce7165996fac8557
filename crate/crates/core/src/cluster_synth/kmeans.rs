//! Lloyd's algorithm with k-means++ seeding.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::parallel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent k-means++ starts; the lowest-inertia fit wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 8, seed: 0, max_iters: 300, tol: 1e-4, restarts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub n_cols: usize,
    /// Row-major `k x n_cols`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub seed: u64,
    pub n_iter: usize,
    /// Inertia after every assignment step, first entry from the seeding.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.n_cols..(c + 1) * self.n_cols]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Nearest centroid per row, ties to the lowest index.
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<usize>> {
        if matrix.n_cols() != self.n_cols {
            return Err(Error::shape(format!("model has {} columns, matrix {}", self.n_cols, matrix.n_cols())));
        }
        Ok(assign(matrix, &self.centroids, self.k).0)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[f64], k: usize) -> (usize, f64) {
    let d = row.len();
    let mut best = (0, f64::INFINITY);
    for c in 0..k {
        let dist = sq_dist(row, &centroids[c * d..(c + 1) * d]);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn assign(matrix: &FeatureMatrix, centroids: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let pairs = parallel::map_range(matrix.n_rows(), |i| nearest(matrix.row(i), centroids, k));
    pairs.into_iter().unzip()
}

fn plus_plus_init(matrix: &FeatureMatrix, k: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let n = matrix.n_rows();
    let d = matrix.n_cols();
    let mut centroids = Vec::with_capacity(k * d);
    centroids.extend_from_slice(matrix.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = parallel::map_range(n, |i| sq_dist(matrix.row(i), &centroids[..d]));
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(matrix.row(pick));
        let newest = &centroids[start..start + d];
        let upd = parallel::map_range(n, |i| sq_dist(matrix.row(i), newest));
        for (cur, new) in d2.iter_mut().zip(upd) {
            if new < *cur {
                *cur = new;
            }
        }
    }
    centroids
}

fn fit_once(matrix: &FeatureMatrix, cfg: &KMeansConfig, seed: u64) -> ClusterModel {
    let (n, d, k) = (matrix.n_rows(), matrix.n_cols(), cfg.k);
    let mut rng = rng::seeded(seed);
    let mut centroids = plus_plus_init(matrix, k, &mut rng);
    let (mut assignments, mut d2) = assign(matrix, &centroids, k);
    let mut history = vec![d2.iter().sum::<f64>()];
    let mut n_iter = 0;

    while n_iter < cfg.max_iters {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(matrix.row(i)) {
                *s += x;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    next[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
        // Empty clusters take over the rows farthest from their centroids.
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(b.cmp(&a)))
                .expect("n >= k >= 1");
            next[c * d..(c + 1) * d].copy_from_slice(matrix.row(far));
            d2[far] = 0.0;
        }
        let shift = (0..k)
            .map(|c| sq_dist(&next[c * d..(c + 1) * d], &centroids[c * d..(c + 1) * d]).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        (assignments, d2) = assign(matrix, &centroids, k);
        let inertia: f64 = d2.iter().sum();
        debug_assert!(
            inertia <= history.last().unwrap() * (1.0 + 1e-12) + 1e-12,
            "inertia rose from {} to {inertia}",
            history.last().unwrap()
        );
        history.push(inertia);
        n_iter += 1;
        if shift < cfg.tol {
            break;
        }
    }

    ClusterModel {
        k,
        n_cols: d,
        centroids,
        assignments,
        inertia: *history.last().unwrap(),
        seed,
        n_iter,
        inertia_history: history,
    }
}

pub fn kmeans_fit(matrix: &FeatureMatrix, cfg: &KMeansConfig) -> Result<ClusterModel> {
    if cfg.k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if cfg.k > matrix.n_rows() {
        return Err(Error::param(format!("k = {} exceeds {} rows", cfg.k, matrix.n_rows())));
    }
    let restarts = cfg.restarts.max(1);
    let fits: Vec<ClusterModel> = (0..restarts)
        .map(|r| {
            let seed = if r == 0 { cfg.seed } else { rng::derive(cfg.seed, r as u64) };
            fit_once(matrix, cfg, seed)
        })
        .collect();
    let best = fits
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.inertia.total_cmp(&b.inertia).then(ia.cmp(ib)))
        .map(|(_, m)| m)
        .expect("at least one restart");
    Ok(best)
}
