//! Support vector machines: a linear model trained with full-batch Pegasos
//! and an RBF model trained with SMO (second-order working-set selection).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::parallel;

const TAU: f64 = 1e-12;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// RBF width; `None` uses `1 / (d * var(X))`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Kernel row cache budget in MiB.
    pub cache_mb: usize,
    pub max_rows: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            kernel: Kernel::Rbf,
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 200_000,
            cache_mb: 256,
            max_rows: 20_000,
        }
    }
}

impl SvmParams {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::param("C must be positive"));
        }
        if self.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(Error::param("gamma must be positive"));
        }
        if n > self.max_rows {
            return Err(Error::param(format!("SVM limited to {} rows, got {n}", self.max_rows)));
        }
        Ok(())
    }
}

#[inline]
fn signed(y: u8) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

fn check_data(matrix: &FeatureMatrix, labels: &[u8]) -> Result<()> {
    if matrix.n_rows() == 0 {
        return Err(Error::Empty("training matrix"));
    }
    if labels.len() != matrix.n_rows() {
        return Err(Error::shape("labels and rows differ"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Degenerate("SVM needs both classes".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- linear

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    /// Weights followed by the bias.
    pub theta: Vec<f64>,
    pub objective: f64,
}

#[inline]
fn affine(theta: &[f64], row: &[f64]) -> f64 {
    let d = row.len();
    row.iter().zip(&theta[..d]).map(|(x, w)| x * w).sum::<f64>() + theta[d]
}

/// `lambda / 2 * |theta|^2 + mean(max(0, 1 - y * (w.x + b)))` (the bias is
/// regularised as an augmented constant feature) and a subgradient.
pub fn hinge_objective_grad(theta: &[f64], matrix: &FeatureMatrix, labels: &[u8], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let (n, d) = (matrix.n_rows(), matrix.n_cols());
    if theta.len() != d + 1 || labels.len() != n {
        return Err(Error::shape("theta, matrix and labels disagree"));
    }
    if n == 0 {
        return Err(Error::Empty("training matrix"));
    }
    let parts = parallel::map_range(n.div_ceil(CHUNK), |c| {
        let mut loss = 0.0;
        let mut g = vec![0.0; d + 1];
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let row = matrix.row(i);
            let y = signed(labels[i]);
            let m = 1.0 - y * affine(theta, row);
            if m > 0.0 {
                loss += m;
                for (gj, x) in g.iter_mut().zip(row) {
                    *gj -= y * x;
                }
                g[d] -= y;
            }
        }
        (loss, g)
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let nf = n as f64;
    loss /= nf;
    for (g, t) in grad.iter_mut().zip(theta) {
        *g = *g / nf + lambda * t;
        loss += 0.5 * lambda * t * t;
    }
    Ok((loss, grad))
}

impl LinearSvm {
    pub fn fit(matrix: &FeatureMatrix, labels: &[u8], params: &SvmParams) -> Result<Self> {
        check_data(matrix, labels)?;
        params.validate(0)?;
        let n = matrix.n_rows();
        let lambda = 1.0 / (params.c * n as f64);
        let radius = 1.0 / lambda.sqrt();
        let mut theta = vec![0.0; matrix.n_cols() + 1];
        let (mut best_obj, _) = hinge_objective_grad(&theta, matrix, labels, lambda)?;
        let mut best = theta.clone();
        let iters = params.max_iter.min(2000);
        for t in 1..=iters {
            let (obj, g) = hinge_objective_grad(&theta, matrix, labels, lambda)?;
            if obj < best_obj {
                best_obj = obj;
                best.clone_from(&theta);
            }
            let eta = 1.0 / (lambda * t as f64);
            theta.iter_mut().zip(&g).for_each(|(w, gi)| *w -= eta * gi);
            let norm = theta.iter().map(|w| w * w).sum::<f64>().sqrt();
            if norm > radius {
                theta.iter_mut().for_each(|w| *w *= radius / norm);
            }
        }
        let (obj, _) = hinge_objective_grad(&theta, matrix, labels, lambda)?;
        if obj < best_obj {
            best_obj = obj;
            best = theta;
        }
        Ok(LinearSvm { theta: best, objective: best_obj })
    }

    pub fn decision_function(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.n_cols() + 1 != self.theta.len() {
            return Err(Error::shape("column count differs from training"));
        }
        Ok(matrix.rows().map(|r| affine(&self.theta, r)).collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.decision_function(matrix)?.into_iter().map(|f| u8::from(f > 0.0)).collect())
    }
}

// ---------------------------------------------------------------- rbf

#[derive(Debug, Clone, PartialEq)]
pub struct RbfSvm {
    pub gamma: f64,
    /// Support vectors, row-major.
    pub support: FeatureMatrix,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub n_iter: usize,
}

/// `1 / (d * var(X))` over all entries, 1.0 for a constant matrix.
pub fn gamma_scale(matrix: &FeatureMatrix) -> f64 {
    let v = matrix.values();
    let n = v.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (matrix.n_cols() as f64 * var)
    } else {
        1.0
    }
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

/// Least-recently-used cache of full kernel rows.
struct KernelCache<'a> {
    matrix: &'a FeatureMatrix,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    last_used: Vec<u64>,
    clock: u64,
    capacity: usize,
    cached: usize,
}

impl<'a> KernelCache<'a> {
    fn new(matrix: &'a FeatureMatrix, gamma: f64, budget_mb: usize) -> Self {
        let n = matrix.n_rows();
        let row_bytes = (n * 8).max(1);
        let capacity = (budget_mb * 1024 * 1024 / row_bytes).max(2);
        KernelCache { matrix, gamma, rows: vec![None; n], last_used: vec![0; n], clock: 0, capacity, cached: 0 }
    }

    /// Loads row `i`, never evicting row `keep`.
    fn ensure(&mut self, i: usize, keep: usize) {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if self.rows[i].is_some() {
            return;
        }
        if self.cached >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&k| k != i && k != keep && self.rows[k].is_some())
                .min_by_key(|&k| self.last_used[k])
                .expect("cache non-empty");
            self.rows[victim] = None;
            self.cached -= 1;
        }
        let (m, g) = (self.matrix, self.gamma);
        let xi = m.row(i);
        let mut row = vec![0.0; m.n_rows()];
        parallel::for_each_chunk_mut(&mut row, CHUNK, |c, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = rbf(xi, m.row(c * CHUNK + k), g);
            }
        });
        self.rows[i] = Some(row);
        self.cached += 1;
    }

    fn row(&self, i: usize) -> &[f64] {
        self.rows[i].as_deref().expect("ensured")
    }
}

impl RbfSvm {
    pub fn fit(matrix: &FeatureMatrix, labels: &[u8], params: &SvmParams) -> Result<Self> {
        check_data(matrix, labels)?;
        params.validate(matrix.n_rows())?;
        let n = matrix.n_rows();
        let c = params.c;
        let gamma = params.gamma.unwrap_or_else(|| gamma_scale(matrix));
        let y: Vec<f64> = labels.iter().map(|&l| signed(l)).collect();
        let mut alpha = vec![0.0; n];
        // G = Q alpha - 1 with Q_ij = y_i y_j K_ij; K_ii = 1 for RBF.
        let mut grad = vec![-1.0; n];
        let mut cache = KernelCache::new(matrix, gamma, params.cache_mb);
        let up = |a: f64, y: f64| if y > 0.0 { a < c } else { a > 0.0 };
        let low = |a: f64, y: f64| if y > 0.0 { a > 0.0 } else { a < c };

        let mut n_iter = 0;
        while n_iter < params.max_iter {
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                    gmax = -y[t] * grad[t];
                    i = t;
                }
            }
            if i == usize::MAX {
                break;
            }
            cache.ensure(i, i);
            let ki = cache.row(i);
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut best_obj = f64::INFINITY;
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let diff = gmax + v;
                if diff > 0.0 {
                    let quad = (2.0 - 2.0 * ki[t]).max(TAU);
                    let obj = -diff * diff / quad;
                    if obj < best_obj {
                        best_obj = obj;
                        j = t;
                    }
                }
            }
            if gmax + gmax2 < params.tol || j == usize::MAX {
                break;
            }
            n_iter += 1;
            let kij = ki[j];
            cache.ensure(j, i);
            let (ai, aj) = (alpha[i], alpha[j]);
            let quad = (2.0 - 2.0 * kij).max(TAU);
            let (mut ni, mut nj);
            if y[i] != y[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = ai - aj;
                ni = ai + delta;
                nj = aj + delta;
                if diff > 0.0 {
                    if nj < 0.0 {
                        nj = 0.0;
                        ni = diff;
                    }
                } else if ni < 0.0 {
                    ni = 0.0;
                    nj = -diff;
                }
                if diff > 0.0 {
                    if ni > c {
                        ni = c;
                        nj = c - diff;
                    }
                } else if nj > c {
                    nj = c;
                    ni = c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = ai + aj;
                ni = ai - delta;
                nj = aj + delta;
                if sum > c {
                    if ni > c {
                        ni = c;
                        nj = sum - c;
                    }
                } else if nj < 0.0 {
                    nj = 0.0;
                    ni = sum;
                }
                if sum > c {
                    if nj > c {
                        nj = c;
                        ni = sum - c;
                    }
                } else if ni < 0.0 {
                    ni = 0.0;
                    nj = sum;
                }
            }
            alpha[i] = ni;
            alpha[j] = nj;
            let (di, dj) = (ni - ai, nj - aj);
            let (ki, kj) = (cache.row(i), cache.row(j));
            let (yi, yj) = (y[i], y[j]);
            for t in 0..n {
                grad[t] += y[t] * (yi * ki[t] * di + yj * kj[t] * dj);
            }
        }
        if n_iter >= params.max_iter {
            log::warn!("SMO stopped at max_iter {} before reaching tol {}", params.max_iter, params.tol);
        }

        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum_free) = (0usize, 0.0);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if alpha[t] >= c {
                if y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if alpha[t] <= 0.0 {
                if y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };

        let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
        let dual_coef = sv.iter().map(|&t| alpha[t] * y[t]).collect();
        Ok(RbfSvm { gamma, support: matrix.select_rows(&sv), dual_coef, rho, n_iter })
    }

    pub fn n_support(&self) -> usize {
        self.dual_coef.len()
    }

    #[inline]
    pub fn decision_row(&self, row: &[f64]) -> f64 {
        let mut s = -self.rho;
        for (sv, a) in self.support.rows().zip(&self.dual_coef) {
            s += a * rbf(sv, row, self.gamma);
        }
        s
    }

    pub fn decision_function(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.n_cols() != self.support.n_cols() {
            return Err(Error::shape("column count differs from training"));
        }
        Ok(matrix.rows().map(|r| self.decision_row(r)).collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.decision_function(matrix)?.into_iter().map(|f| u8::from(f > 0.0)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn ring(n: usize) -> (FeatureMatrix, Vec<u8>) {
        let mut r = rng::seeded(3);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>() * 2.0 - 1.0, r.random::<f64>() * 2.0 - 1.0]).collect();
        let y = rows.iter().map(|x| u8::from(x[0] * x[0] + x[1] * x[1] < 0.4)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn rbf_learns_ring() {
        let (m, y) = ring(400);
        let svm = RbfSvm::fit(&m, &y, &SvmParams { c: 10.0, gamma: Some(2.0), ..Default::default() }).unwrap();
        let acc = svm.predict(&m).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(acc >= 380, "{acc}");
        assert!(svm.dual_coef.iter().all(|a| a.abs() <= 10.0 + 1e-9));
        let balance: f64 = svm.dual_coef.iter().sum();
        assert!(balance.abs() < 1e-6, "{balance}");
    }

    #[test]
    fn tiny_cache_gives_same_model() {
        let (m, y) = ring(120);
        let p = SvmParams { gamma: Some(1.0), ..Default::default() };
        let a = RbfSvm::fit(&m, &y, &p).unwrap();
        let b = RbfSvm::fit(&m, &y, &SvmParams { cache_mb: 0, ..p }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_separates_halfplane() {
        let mut r = rng::seeded(4);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        let y: Vec<u8> = rows.iter().map(|x| u8::from(x[0] > 0.5)).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let svm = LinearSvm::fit(&m, &y, &SvmParams { kernel: Kernel::Linear, c: 100.0, ..Default::default() }).unwrap();
        let acc = svm.predict(&m).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count();
        assert!(acc >= 285, "{acc}");
    }

    #[test]
    fn row_limit_and_single_class() {
        let (m, y) = ring(50);
        assert!(RbfSvm::fit(&m, &y, &SvmParams { max_rows: 10, ..Default::default() }).is_err());
        assert!(RbfSvm::fit(&m, &[1; 50], &SvmParams::default()).is_err());
    }

    #[test]
    fn gamma_scale_value() {
        let m = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(gamma_scale(&m), 2.0);
    }
}
