use serde::{Deserialize, Serialize};

use super::binning::BinMapper;
use super::flat::{FlatForest, Source};
use super::grower::{grow_tree, GrowLimits, GrowthStep};
use super::tree::Tree;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::parallel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub num_leaves: usize,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub min_samples_leaf: usize,
    pub l2_reg: f64,
    /// Accepted for reproducibility bookkeeping; training has no random
    /// component.
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_estimators: 100,
            max_depth: 8,
            num_leaves: 31,
            learning_rate: 0.1,
            n_bins: 255,
            min_samples_leaf: 20,
            l2_reg: 1.0,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::param("n_estimators must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::param("max_depth must be at least 1"));
        }
        if self.num_leaves < 2 {
            return Err(Error::param("num_leaves must be at least 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::param(format!("learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if !(2..=255).contains(&self.n_bins) {
            return Err(Error::param(format!("n_bins {} outside [2, 255]", self.n_bins)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::param("min_samples_leaf must be at least 1"));
        }
        if !(self.l2_reg >= 0.0) || !self.l2_reg.is_finite() {
            return Err(Error::param("l2_reg must be a finite non-negative number"));
        }
        Ok(())
    }

    fn limits(&self) -> GrowLimits {
        GrowLimits {
            num_leaves: self.num_leaves,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l2_reg: self.l2_reg,
            learning_rate: self.learning_rate,
        }
    }
}

/// Binary log-loss gradient boosted trees.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoostedEnsemble {
    pub trees: Vec<Tree>,
    pub base_score: f32,
    pub params: GbdtParams,
    /// Total split gain per input column.
    pub feature_importances: Vec<f64>,
    /// Original column index of each input column (identity for a model
    /// trained on the full matrix).
    pub feature_map: Vec<usize>,
    /// Training log-loss before boosting and after each tree.
    pub train_loss: Vec<f64>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_loss(raw: &[f64], labels: &[u8]) -> f64 {
    let s: f64 = raw
        .iter()
        .zip(labels)
        .map(|(&f, &y)| {
            // log(1 + e^f) - y f, stable for large |f|
            let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
            softplus - f64::from(y) * f
        })
        .sum();
    s / raw.len() as f64
}

impl GradientBoostedEnsemble {
    pub fn fit(matrix: &FeatureMatrix, labels: &[u8], params: &GbdtParams) -> Result<Self> {
        Self::fit_inner(matrix, labels, params, None)
    }

    /// Like [`fit`](Self::fit), also recording every accepted split.
    pub fn fit_traced(matrix: &FeatureMatrix, labels: &[u8], params: &GbdtParams) -> Result<(Self, Vec<GrowthStep>)> {
        let mut steps = Vec::new();
        let model = Self::fit_inner(matrix, labels, params, Some(&mut steps))?;
        Ok((model, steps))
    }

    fn fit_inner(
        matrix: &FeatureMatrix,
        labels: &[u8],
        params: &GbdtParams,
        mut trace: Option<&mut Vec<GrowthStep>>,
    ) -> Result<Self> {
        params.validate()?;
        let n = matrix.n_rows();
        if n == 0 {
            return Err(Error::Empty("training matrix"));
        }
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::param("labels must be 0 or 1"));
        }
        let d = matrix.n_cols();
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        let p = (n_pos as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let base_score = (p / (1.0 - p)).ln() as f32;
        let mut model = GradientBoostedEnsemble {
            trees: Vec::new(),
            base_score,
            params: params.clone(),
            feature_importances: vec![0.0; d],
            feature_map: (0..d).collect(),
            train_loss: Vec::new(),
        };
        let mut raw = vec![f64::from(base_score); n];
        model.train_loss.push(log_loss(&raw, labels));
        if n_pos == 0 || n_pos == n {
            log::warn!("single-class training target; fitting a constant model");
            return Ok(model);
        }

        let mapper = BinMapper::fit(matrix, params.n_bins);
        let binned = mapper.bin_matrix(matrix);
        let lim = params.limits();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for round in 0..params.n_estimators {
            for i in 0..n {
                let p = sigmoid(raw[i]);
                grad[i] = p - f64::from(labels[i]);
                hess[i] = p * (1.0 - p);
            }
            let grown = grow_tree(&binned, &mapper, &grad, &hess, &lim, trace.as_deref_mut().map(|t| (t, round)));
            if grown.tree.nodes.len() == 1 {
                log::debug!("no admissible split at round {round}; stopping");
                break;
            }
            for (value, rows) in &grown.leaves {
                for &r in rows {
                    raw[r as usize] += f64::from(*value);
                }
            }
            for node in grown.tree.nodes.iter().filter(|n| !n.is_leaf()) {
                model.feature_importances[node.feature] += node.gain;
            }
            model.trees.push(grown.tree);
            model.train_loss.push(log_loss(&raw, labels));
        }
        Ok(model)
    }

    pub fn n_input_cols(&self) -> usize {
        self.feature_map.len()
    }

    fn check_cols(&self, matrix: &FeatureMatrix) -> Result<()> {
        if matrix.n_cols() != self.n_input_cols() {
            return Err(Error::shape(format!("model expects {} columns, got {}", self.n_input_cols(), matrix.n_cols())));
        }
        Ok(())
    }

    #[inline]
    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        let mut s = f64::from(self.base_score);
        for t in &self.trees {
            s += f64::from(t.predict_row(row));
        }
        s
    }

    pub fn predict_raw(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_cols(matrix)?;
        Ok(self.flat().score(matrix, f64::from(self.base_score)))
    }

    fn flat(&self) -> FlatForest {
        let mut f = FlatForest::new((0..self.n_input_cols()).collect());
        for t in &self.trees {
            f.push_tree(t.nodes.iter().map(|n| {
                if n.is_leaf() {
                    Source::Leaf(n.leaf_value)
                } else {
                    Source::Split { slot: n.feature, threshold: n.threshold, left: n.left as usize, right: n.right as usize }
                }
            }));
        }
        f
    }

    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_raw(matrix)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(matrix)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    /// Row-parallel raw scores for bulk scoring.
    pub fn predict_raw_parallel(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_cols(matrix)?;
        let mut out = vec![0.0; matrix.n_rows()];
        const CHUNK: usize = 1024;
        parallel::for_each_chunk_mut(&mut out, CHUNK, |c, chunk| {
            for (i, o) in chunk.iter_mut().enumerate() {
                *o = self.predict_raw_row(matrix.row(c * CHUNK + i));
            }
        });
        Ok(out)
    }

    /// Importances scaled to sum to 1 (all zero for a tree-less model).
    pub fn normalized_importances(&self) -> Vec<f64> {
        let total: f64 = self.feature_importances.iter().sum();
        if total > 0.0 {
            self.feature_importances.iter().map(|g| g / total).collect()
        } else {
            vec![0.0; self.feature_importances.len()]
        }
    }

    /// The first `n` trees, sharing base score and columns.
    pub fn truncated(&self, n: usize) -> Self {
        let mut m = self.clone();
        m.trees.truncate(n);
        m.train_loss.truncate(n + 1);
        m.feature_importances = vec![0.0; self.n_input_cols()];
        for node in m.trees.iter().flat_map(|t| &t.nodes).filter(|n| !n.is_leaf()) {
            m.feature_importances[node.feature] += node.gain;
        }
        m
    }

    pub fn n_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}
