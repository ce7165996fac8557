//! `RDS1`: a flat little-endian encoding of a boosted ensemble, and the
//! packed in-memory model decoded from it.
//!
//! ```text
//! "RDS1" | u16 version | f32 base_score
//! u16 n_columns | n_columns x u16 original column index
//! u16 n_trees
//! per tree: u32 n_nodes | n_nodes x (u16 slot | f32 threshold_or_value | i32 left | i32 right)
//! ```
//! A slot of `0xFFFF` marks a leaf; leaves carry `-1` children. Internal
//! nodes reference children with a larger index inside the same tree.

use std::path::Path;

use crate::error::{DecodeError, Error, Result};
use crate::gbdt::flat::{FlatForest, Source};
use crate::gbdt::GradientBoostedEnsemble;
use crate::matrix::FeatureMatrix;

pub const MAGIC: [u8; 4] = *b"RDS1";
pub const VERSION: u16 = 1;
const LEAF_SLOT: u16 = 0xFFFF;
const LEAF: u32 = u32::MAX;
const NODE_BYTES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq)]
#[repr(C)]
struct PackedNode {
    /// Original column index, or `LEAF`.
    column: u32,
    /// Threshold on internal nodes, raw-score contribution on leaves.
    value: f32,
    left: u32,
    right: u32,
}

/// Decoded ensemble with every tree in one contiguous node array and node
/// columns resolved to original-matrix indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactModel {
    base_score: f32,
    columns: Vec<u16>,
    roots: Vec<u32>,
    nodes: Vec<PackedNode>,
    flat: FlatForest,
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn checked_u16(n: usize, what: &str) -> Result<u16> {
    u16::try_from(n).map_err(|_| Error::Encode(format!("{what} {n} exceeds u16")))
}

/// Encodes `model`; node features become slots into its `feature_map`.
pub fn export_compact(model: &GradientBoostedEnsemble) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + model.n_nodes() * NODE_BYTES);
    out.extend_from_slice(&MAGIC);
    push_u16(&mut out, VERSION);
    out.extend_from_slice(&model.base_score.to_le_bytes());
    push_u16(&mut out, checked_u16(model.feature_map.len(), "column count")?);
    for &c in &model.feature_map {
        push_u16(&mut out, checked_u16(c, "column index")?);
    }
    push_u16(&mut out, checked_u16(model.trees.len(), "tree count")?);
    for tree in &model.trees {
        let n = u32::try_from(tree.nodes.len()).map_err(|_| Error::Encode("tree too large".into()))?;
        out.extend_from_slice(&n.to_le_bytes());
        for node in &tree.nodes {
            if node.is_leaf() {
                push_u16(&mut out, LEAF_SLOT);
                out.extend_from_slice(&node.leaf_value.to_le_bytes());
            } else {
                let slot = checked_u16(node.feature, "feature slot")?;
                if slot == LEAF_SLOT {
                    return Err(Error::Encode("feature slot collides with leaf marker".into()));
                }
                push_u16(&mut out, slot);
                out.extend_from_slice(&node.threshold.to_le_bytes());
            }
            out.extend_from_slice(&node.left.to_le_bytes());
            out.extend_from_slice(&node.right.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> std::result::Result<[u8; N], DecodeError> {
        let end = self.pos.checked_add(N).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(DecodeError::Truncated { offset: self.pos, needed: N });
        };
        let bytes = self.buf[self.pos..end].try_into().expect("length checked");
        self.pos = end;
        Ok(bytes)
    }
    fn u16(&mut self) -> std::result::Result<u16, DecodeError> {
        self.take().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> std::result::Result<u32, DecodeError> {
        self.take().map(u32::from_le_bytes)
    }
    fn i32(&mut self) -> std::result::Result<i32, DecodeError> {
        self.take().map(i32::from_le_bytes)
    }
    fn f32(&mut self) -> std::result::Result<f32, DecodeError> {
        self.take().map(f32::from_le_bytes)
    }
}

/// Decodes and validates an `RDS1` blob.
pub fn load_compact(bytes: &[u8]) -> std::result::Result<CompactModel, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take()?;
    if magic != MAGIC {
        return Err(DecodeError::BadMagic { found: magic });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(DecodeError::Version(version));
    }
    let base_score = r.f32()?;
    if !base_score.is_finite() {
        return Err(DecodeError::NonFinite { offset: r.pos - 4 });
    }
    let n_cols = r.u16()? as usize;
    let mut columns = Vec::with_capacity(n_cols);
    for _ in 0..n_cols {
        let c = r.u16()?;
        if columns.contains(&c) {
            return Err(DecodeError::DuplicateColumn(c));
        }
        columns.push(c);
    }
    let n_trees = r.u16()? as usize;
    let mut roots = Vec::with_capacity(n_trees);
    let mut nodes: Vec<PackedNode> = Vec::new();
    let mut flat = FlatForest::new(columns.iter().map(|&c| c as usize).collect());
    for t in 0..n_trees {
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(DecodeError::EmptyTree { tree: t });
        }
        // Refuse counts the remaining input cannot hold before allocating.
        if n.saturating_mul(NODE_BYTES) > bytes.len() - r.pos {
            return Err(DecodeError::Truncated { offset: r.pos, needed: n.saturating_mul(NODE_BYTES) });
        }
        let offset = nodes.len();
        roots.push(offset as u32);
        let mut tree = Vec::with_capacity(n);
        for i in 0..n {
            let slot = r.u16()?;
            let value = r.f32()?;
            let left = r.i32()?;
            let right = r.i32()?;
            if !value.is_finite() {
                return Err(DecodeError::NonFinite { offset: r.pos - 12 });
            }
            if slot == LEAF_SLOT {
                if left != -1 || right != -1 {
                    return Err(DecodeError::MalformedNode { tree: t, node: i });
                }
                nodes.push(PackedNode { column: LEAF, value, left: LEAF, right: LEAF });
                tree.push(Source::Leaf(value));
                continue;
            }
            if slot as usize >= n_cols {
                return Err(DecodeError::FeatureOutOfRange { tree: t, node: i, slot });
            }
            for child in [left, right] {
                if child <= i as i32 || child as usize >= n {
                    return Err(DecodeError::ChildOutOfRange { tree: t, node: i, child });
                }
            }
            nodes.push(PackedNode {
                column: u32::from(columns[slot as usize]),
                value,
                left: (offset + left as usize) as u32,
                right: (offset + right as usize) as u32,
            });
            tree.push(Source::Split { slot: slot as usize, threshold: value, left: left as usize, right: right as usize });
        }
        flat.push_tree(tree.into_iter());
    }
    if r.pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(CompactModel { base_score, columns, roots, nodes, flat })
}

pub fn save_blob(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_blob(path: &Path) -> Result<CompactModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(load_compact(&bytes)?)
}

impl CompactModel {
    pub fn base_score(&self) -> f32 {
        self.base_score
    }

    /// Original column indices the model reads.
    pub fn columns(&self) -> &[u16] {
        &self.columns
    }

    pub fn n_trees(&self) -> usize {
        self.roots.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Smallest row width the model can read.
    pub fn min_width(&self) -> usize {
        self.columns.iter().map(|&c| c as usize + 1).max().unwrap_or(0)
    }

    #[inline]
    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        let mut s = f64::from(self.base_score);
        for &root in &self.roots {
            let mut i = root as usize;
            loop {
                let n = &self.nodes[i];
                if n.column == LEAF {
                    s += f64::from(n.value);
                    break;
                }
                i = if (row[n.column as usize] as f32) <= n.value { n.left } else { n.right } as usize;
            }
        }
        s
    }

    fn check(&self, matrix: &FeatureMatrix) -> Result<()> {
        if matrix.n_cols() < self.min_width() {
            return Err(Error::shape(format!("model reads column {}, matrix has {}", self.min_width() - 1, matrix.n_cols())));
        }
        Ok(())
    }

    pub fn predict_raw(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check(matrix)?;
        Ok(self.flat.score(matrix, f64::from(self.base_score)))
    }

    pub fn predict_proba(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.predict_raw(matrix)?.into_iter().map(crate::gbdt::sigmoid).collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(matrix)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    /// Re-encodes to `RDS1`; `encode(load_compact(b)) == b` for valid `b`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.nodes.len() * NODE_BYTES);
        out.extend_from_slice(&MAGIC);
        push_u16(&mut out, VERSION);
        out.extend_from_slice(&self.base_score.to_le_bytes());
        push_u16(&mut out, self.columns.len() as u16);
        for &c in &self.columns {
            push_u16(&mut out, c);
        }
        push_u16(&mut out, self.roots.len() as u16);
        for (t, &root) in self.roots.iter().enumerate() {
            let end = self.roots.get(t + 1).map_or(self.nodes.len(), |&r| r as usize);
            let start = root as usize;
            out.extend_from_slice(&((end - start) as u32).to_le_bytes());
            for n in &self.nodes[start..end] {
                if n.column == LEAF {
                    push_u16(&mut out, LEAF_SLOT);
                    out.extend_from_slice(&n.value.to_le_bytes());
                    out.extend_from_slice(&(-1i32).to_le_bytes());
                    out.extend_from_slice(&(-1i32).to_le_bytes());
                } else {
                    let slot = self.columns.iter().position(|&c| u32::from(c) == n.column).expect("resolved column");
                    push_u16(&mut out, slot as u16);
                    out.extend_from_slice(&n.value.to_le_bytes());
                    out.extend_from_slice(&((n.left as usize - start) as i32).to_le_bytes());
                    out.extend_from_slice(&((n.right as usize - start) as i32).to_le_bytes());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{GbdtParams, Node, Tree};
    use proptest::prelude::*;

    fn two_tree_model() -> GradientBoostedEnsemble {
        let split = |feature, threshold| Node { feature, threshold, leaf_value: 0.0, left: 1, right: 2, gain: 1.0, count: 0 };
        GradientBoostedEnsemble {
            trees: vec![
                Tree { nodes: vec![split(0, 0.5), Node::leaf(-0.25, 0), Node::leaf(0.75, 0)] },
                Tree::single_leaf(0.125, 0),
            ],
            base_score: -1.0,
            params: GbdtParams::default(),
            feature_importances: vec![1.0, 0.0],
            feature_map: vec![3, 1],
            train_loss: Vec::new(),
        }
    }

    #[test]
    fn byte_layout() {
        let b = export_compact(&two_tree_model()).unwrap();
        assert_eq!(&b[..4], b"RDS1");
        assert_eq!(b.len(), 4 + 2 + 4 + 2 + 2 * 2 + 2 + (4 + 3 * 14) + (4 + 14));
        assert_eq!(u16::from_le_bytes([b[10], b[11]]), 2);
        assert_eq!(u16::from_le_bytes([b[12], b[13]]), 3);
    }

    #[test]
    fn round_trip_and_predict() {
        let model = two_tree_model();
        let blob = export_compact(&model).unwrap();
        let c = load_compact(&blob).unwrap();
        assert_eq!(c.encode(), blob);
        assert_eq!(c.min_width(), 4);
        // column 3 of the original row is slot 0 of the model
        let full = FeatureMatrix::from_rows(&[vec![9.0, 9.0, 9.0, 0.1], vec![0.0, 0.0, 0.0, 0.9]]).unwrap();
        let narrow = full.select_columns(&[3, 1]).unwrap();
        assert_eq!(c.predict_raw(&full).unwrap(), model.predict_raw(&narrow).unwrap());
        assert_eq!(c.predict_raw(&full).unwrap(), vec![-1.0 - 0.25 + 0.125, -1.0 + 0.75 + 0.125]);
        assert!(c.predict(&narrow).is_err());
    }

    #[test]
    fn decode_errors() {
        let blob = export_compact(&two_tree_model()).unwrap();
        let mut bad = blob.clone();
        bad[0] = b'X';
        assert!(matches!(load_compact(&bad), Err(DecodeError::BadMagic { .. })));
        assert!(load_compact(&bad).unwrap_err().to_string().contains("RDS1"));

        let mut bad = blob.clone();
        bad[4] = 2;
        assert_eq!(load_compact(&bad), Err(DecodeError::Version(2)));

        assert!(matches!(load_compact(&blob[..blob.len() - 1]), Err(DecodeError::Truncated { .. })));

        let mut bad = blob.clone();
        bad.push(0);
        assert!(matches!(load_compact(&bad), Err(DecodeError::TrailingBytes(1))));

        // first node of tree 0 starts after the 4-byte node count
        let node0 = 4 + 2 + 4 + 2 + 4 + 2 + 4;
        let mut bad = blob.clone();
        bad[node0 + 6..node0 + 10].copy_from_slice(&7i32.to_le_bytes());
        assert!(matches!(load_compact(&bad), Err(DecodeError::ChildOutOfRange { child: 7, .. })));

        let mut bad = blob.clone();
        bad[node0..node0 + 2].copy_from_slice(&5u16.to_le_bytes());
        assert!(matches!(load_compact(&bad), Err(DecodeError::FeatureOutOfRange { slot: 5, .. })));

        let mut bad = blob.clone();
        bad[14..16].copy_from_slice(&3u16.to_le_bytes());
        assert_eq!(load_compact(&bad), Err(DecodeError::DuplicateColumn(3)));

        let mut bad = blob.clone();
        bad[node0 - 4..node0].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(load_compact(&bad), Err(DecodeError::EmptyTree { tree: 0 }));
    }

    #[test]
    fn self_loop_is_rejected() {
        let mut model = two_tree_model();
        model.trees[0].nodes[0].left = 0;
        let blob = export_compact(&model).unwrap();
        assert!(matches!(load_compact(&blob), Err(DecodeError::ChildOutOfRange { child: 0, .. })));
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = load_compact(&bytes);
        }

        #[test]
        fn mutated_blobs_never_panic(pos in 0usize..64, byte in any::<u8>()) {
            let mut blob = export_compact(&two_tree_model()).unwrap();
            let p = pos % blob.len();
            blob[p] = byte;
            if let Ok(m) = load_compact(&blob) {
                prop_assert_eq!(m.encode(), blob);
            }
        }
    }
}
