use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::sigmoid;
use crate::matrix::FeatureMatrix;
use crate::parallel;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub max_iter: usize,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { learning_rate: 1.0, max_iter: 2000, l2: 1e-4, tol: 1e-6 }
    }
}

/// `theta` is the weight vector followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub theta: Vec<f64>,
    pub n_iter: usize,
}

fn check(theta: &[f64], matrix: &FeatureMatrix, labels: &[u8]) -> Result<()> {
    if theta.len() != matrix.n_cols() + 1 {
        return Err(Error::shape(format!("theta has {} entries for {} columns", theta.len(), matrix.n_cols())));
    }
    if labels.len() != matrix.n_rows() {
        return Err(Error::shape("labels and rows differ"));
    }
    if matrix.n_rows() == 0 {
        return Err(Error::Empty("training matrix"));
    }
    Ok(())
}

#[inline]
fn margin(theta: &[f64], row: &[f64]) -> f64 {
    let d = row.len();
    row.iter().zip(&theta[..d]).map(|(x, w)| x * w).sum::<f64>() + theta[d]
}

/// Mean log-loss plus `l2 / 2 * |w|^2`, and its gradient with respect to
/// `theta`. Row sums run over fixed chunks so results do not depend on the
/// thread count.
pub fn logistic_loss_grad(theta: &[f64], matrix: &FeatureMatrix, labels: &[u8], l2: f64) -> Result<(f64, Vec<f64>)> {
    check(theta, matrix, labels)?;
    let (n, d) = (matrix.n_rows(), matrix.n_cols());
    let parts = parallel::map_range(n.div_ceil(CHUNK), |c| {
        let mut loss = 0.0;
        let mut g = vec![0.0; d + 1];
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let row = matrix.row(i);
            let z = margin(theta, row);
            let y = f64::from(labels[i]);
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            loss += softplus - y * z;
            let r = sigmoid(z) - y;
            for (gj, x) in g.iter_mut().zip(row) {
                *gj += r * x;
            }
            g[d] += r;
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
    grad.iter_mut().for_each(|g| *g /= nf);
    for j in 0..d {
        loss += 0.5 * l2 * theta[j] * theta[j];
        grad[j] += l2 * theta[j];
    }
    Ok((loss, grad))
}

impl LogisticRegression {
    /// Full-batch gradient descent from zero.
    pub fn fit(matrix: &FeatureMatrix, labels: &[u8], params: &LogRegParams) -> Result<Self> {
        if !(params.learning_rate > 0.0) {
            return Err(Error::param("learning_rate must be positive"));
        }
        let mut theta = vec![0.0; matrix.n_cols() + 1];
        let mut n_iter = 0;
        for it in 0..params.max_iter {
            let (_, g) = logistic_loss_grad(&theta, matrix, labels, params.l2)?;
            n_iter = it + 1;
            if g.iter().map(|x| x * x).sum::<f64>().sqrt() < params.tol {
                break;
            }
            theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= params.learning_rate * gi);
        }
        Ok(LogisticRegression { theta, n_iter })
    }

    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        if matrix.n_cols() + 1 != self.theta.len() {
            return Err(Error::shape("column count differs from training"));
        }
        Ok(matrix.rows().map(|r| sigmoid(margin(&self.theta, r))).collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(matrix)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }
}
