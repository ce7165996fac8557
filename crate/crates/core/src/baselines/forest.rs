use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{BinMapper, Node, Tree};
use crate::matrix::FeatureMatrix;
use crate::parallel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per node; `None` means `round(sqrt(d))`.
    pub max_features: Option<usize>,
    pub n_bins: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 100,
            max_depth: 12,
            min_samples_leaf: 1,
            max_features: None,
            n_bins: 255,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Bagged Gini trees with majority vote (ties vote 0).
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub n_cols: usize,
    pub params: ForestParams,
}

struct Builder<'a> {
    binned: &'a [Vec<u8>],
    mapper: &'a BinMapper,
    labels: &'a [u8],
    params: &'a ForestParams,
    m_try: usize,
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn leaf(&mut self, pos: usize, n: usize) -> usize {
        // strict majority for class 1
        let v = if 2 * pos > n { 1.0 } else { 0.0 };
        self.nodes.push(Node::leaf(v, n as u32));
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: Vec<u32>, depth: usize, rng: &mut rng::Rng) -> usize {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.labels[r as usize] == 1).count();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || pos == 0 || pos == n || n < 2 * min_leaf {
            return self.leaf(pos, n);
        }
        let d = self.binned.len();
        let parent = gini(pos, n);
        let mut best: Option<(usize, usize, f64)> = None;
        let mut features: Vec<usize> = index::sample(rng, d, self.m_try).into_vec();
        features.sort_unstable();
        for f in features {
            let nb = self.mapper.n_bins(f);
            if nb < 2 {
                continue;
            }
            let mut count = vec![[0usize; 2]; nb];
            let col = &self.binned[f];
            for &r in &rows {
                count[col[r as usize] as usize][self.labels[r as usize] as usize] += 1;
            }
            let (mut nl, mut pl) = (0usize, 0usize);
            for (b, c) in count.iter().enumerate().take(nb - 1) {
                nl += c[0] + c[1];
                pl += c[1];
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let child = (nl as f64 * gini(pl, nl) + nr as f64 * gini(pos - pl, nr)) / n as f64;
                let gain = parent - child;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, b, gain));
                }
            }
        }
        let Some((f, b, gain)) = best else {
            return self.leaf(pos, n);
        };
        let col = &self.binned[f];
        let (left, right): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| col[r as usize] as usize <= b);
        let me = self.nodes.len();
        self.nodes.push(Node {
            feature: f,
            threshold: self.mapper.thresholds[f][b],
            leaf_value: 0.0,
            left: -1,
            right: -1,
            gain: gain.max(0.0) * n as f64,
            count: n as u32,
        });
        let l = self.build(left, depth + 1, rng);
        let r = self.build(right, depth + 1, rng);
        self.nodes[me].left = l as i32;
        self.nodes[me].right = r as i32;
        me
    }
}

impl RandomForest {
    pub fn fit(matrix: &FeatureMatrix, labels: &[u8], params: &ForestParams) -> Result<Self> {
        let n = matrix.n_rows();
        if n == 0 {
            return Err(Error::Empty("training matrix"));
        }
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
        }
        if params.n_estimators == 0 || params.max_depth == 0 {
            return Err(Error::param("forest needs at least one tree of depth at least 1"));
        }
        let d = matrix.n_cols();
        let m_try = params
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().round() as usize)
            .clamp(1, d.max(1));
        let mapper = BinMapper::fit(matrix, params.n_bins);
        let binned = mapper.bin_matrix(matrix);
        let trees = parallel::map_range(params.n_estimators, |t| {
            let mut rng = rng::seeded(rng::derive(params.seed, t as u64));
            let rows: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            let mut b = Builder { binned: &binned, mapper: &mapper, labels, params, m_try, nodes: Vec::new() };
            b.build(rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        });
        Ok(RandomForest { trees, n_cols: d, params: params.clone() })
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let votes = self.trees.iter().filter(|t| t.predict_row(row) > 0.5).count();
        u8::from(2 * votes > self.trees.len())
    }

    /// Share of trees voting 1.
    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check(matrix)?;
        let k = self.trees.len() as f64;
        Ok(matrix
            .rows()
            .map(|r| self.trees.iter().filter(|t| t.predict_row(r) > 0.5).count() as f64 / k)
            .collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        self.check(matrix)?;
        Ok(matrix.rows().map(|r| self.predict_row(r)).collect())
    }

    fn check(&self, matrix: &FeatureMatrix) -> Result<()> {
        if matrix.n_cols() != self.n_cols {
            return Err(Error::shape(format!("forest expects {} columns, got {}", self.n_cols, matrix.n_cols())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor(n: usize) -> (FeatureMatrix, Vec<u8>) {
        let mut r = rng::seeded(11);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        let y = rows.iter().map(|x| u8::from((x[0] > 0.5) != (x[1] > 0.5))).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn learns_xor() {
        let (m, y) = xor(1000);
        let p = ForestParams { n_estimators: 20, max_features: Some(2), seed: 1, ..Default::default() };
        let f = RandomForest::fit(&m, &y, &p).unwrap();
        let acc = f.predict(&m).unwrap().iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / 1000.0;
        assert!(acc > 0.95, "{acc}");
    }

    #[test]
    fn deterministic_across_threads() {
        let (m, y) = xor(300);
        let p = ForestParams { n_estimators: 8, seed: 5, ..Default::default() };
        let a = parallel::sequential(|| RandomForest::fit(&m, &y, &p).unwrap());
        let b = parallel::with_threads(4, || RandomForest::fit(&m, &y, &p).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn trees_respect_depth() {
        let (m, y) = xor(300);
        let p = ForestParams { n_estimators: 4, max_depth: 3, ..Default::default() };
        let f = RandomForest::fit(&m, &y, &p).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 3));
    }
}
