//! Batched tree walker shared by the in-memory ensemble and loaded blobs.
//!
//! Rows are scored in blocks of `LANES`. Each block gathers the model's
//! input columns as f32, then walks every tree for all lanes in lockstep for
//! exactly the tree's depth. Leaves point at themselves, so the walk has no
//! data-dependent branches and the lanes' load chains overlap. Scores are
//! summed per row in tree order and match the row-at-a-time path bit for bit.

use crate::matrix::FeatureMatrix;

const LANES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct FlatNode {
    threshold: f32,
    slot: u32,
    children: [u32; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FlatForest {
    /// Matrix column read for each gathered slot.
    columns: Vec<usize>,
    nodes: Vec<FlatNode>,
    values: Vec<f32>,
    roots: Vec<u32>,
    depths: Vec<u32>,
}

/// One node of a source tree, with children relative to the tree start.
pub(crate) enum Source {
    Leaf(f32),
    Split { slot: usize, threshold: f32, left: usize, right: usize },
}

impl FlatForest {
    pub(crate) fn new(columns: Vec<usize>) -> Self {
        FlatForest { columns, nodes: Vec::new(), values: Vec::new(), roots: Vec::new(), depths: Vec::new() }
    }

    /// Appends one tree given in pre-order (children after their parent).
    pub(crate) fn push_tree(&mut self, tree: impl ExactSizeIterator<Item = Source>) {
        let base = self.nodes.len();
        let n = tree.len();
        let mut depth = vec![0u32; n];
        let mut max_depth = 0;
        for (i, node) in tree.enumerate() {
            let me = (base + i) as u32;
            match node {
                Source::Leaf(v) => {
                    self.nodes.push(FlatNode { threshold: f32::INFINITY, slot: 0, children: [me, me] });
                    self.values.push(v);
                }
                Source::Split { slot, threshold, left, right } => {
                    depth[left] = depth[i] + 1;
                    depth[right] = depth[i] + 1;
                    max_depth = max_depth.max(depth[i] + 1);
                    self.nodes.push(FlatNode {
                        threshold,
                        slot: slot as u32,
                        children: [(base + left) as u32, (base + right) as u32],
                    });
                    self.values.push(0.0);
                }
            }
        }
        self.roots.push(base as u32);
        self.depths.push(max_depth);
    }

    /// Raw scores for every row; `matrix` must be wide enough for `columns`.
    pub(crate) fn score(&self, matrix: &FeatureMatrix, base: f64) -> Vec<f64> {
        let width = self.columns.len().max(1);
        let mut out = Vec::with_capacity(matrix.n_rows());
        let mut buf = vec![0f32; LANES * width];
        for start in (0..matrix.n_rows()).step_by(LANES) {
            let lanes = LANES.min(matrix.n_rows() - start);
            for l in 0..lanes {
                let row = matrix.row(start + l);
                for (s, &c) in self.columns.iter().enumerate() {
                    buf[l * width + s] = row[c] as f32;
                }
            }
            let mut acc = [base; LANES];
            for (&root, &depth) in self.roots.iter().zip(&self.depths) {
                let mut idx = [root as usize; LANES];
                for _ in 0..depth {
                    for l in 0..lanes {
                        let n = &self.nodes[idx[l]];
                        let x = buf[l * width + n.slot as usize];
                        idx[l] = n.children[usize::from(!(x <= n.threshold))] as usize;
                    }
                }
                for l in 0..lanes {
                    acc[l] += f64::from(self.values[idx[l]]);
                }
            }
            out.extend_from_slice(&acc[..lanes]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use crate::gbdt::{GbdtParams, GradientBoostedEnsemble};
    use crate::matrix::FeatureMatrix;
    use crate::model_store::{export_compact, load_compact};
    use rand::Rng;

    #[test]
    fn batched_scores_match_row_walk_bitwise() {
        let mut r = crate::rng::seeded(5);
        // 203 rows: the last block is partial
        let rows: Vec<Vec<f64>> = (0..203).map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<u8> = rows.iter().map(|x| u8::from(x[0] * x[1] + 0.3 * x[2] > 0.0)).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let params = GbdtParams { n_estimators: 25, num_leaves: 9, min_samples_leaf: 3, ..Default::default() };
        let model = GradientBoostedEnsemble::fit(&m, &labels, &params).unwrap();
        let batched = model.predict_raw(&m).unwrap();
        let compact = load_compact(&export_compact(&model).unwrap()).unwrap();
        let from_blob = compact.predict_raw(&m).unwrap();
        for (i, row) in m.rows().enumerate() {
            assert_eq!(batched[i].to_bits(), model.predict_raw_row(row).to_bits());
            assert_eq!(from_blob[i].to_bits(), compact.predict_raw_row(row).to_bits());
        }
    }
}
