/// Sentinel child index on leaves.
pub const NO_CHILD: i32 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Input column tested by an internal node.
    pub feature: usize,
    /// Rows with `x[feature] as f32 <= threshold` go left.
    pub threshold: f32,
    /// Raw-score contribution of a leaf (learning rate applied).
    pub leaf_value: f32,
    pub left: i32,
    pub right: i32,
    /// Split gain of an internal node, 0 on leaves.
    pub gain: f64,
    /// Training rows that reached this node.
    pub count: u32,
}

impl Node {
    pub fn leaf(value: f32, count: u32) -> Self {
        Node { feature: 0, threshold: 0.0, leaf_value: value, left: NO_CHILD, right: NO_CHILD, gain: 0.0, count }
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.left < 0
    }
}

/// Binary tree in pre-order: node 0 is the root and every child index is
/// greater than its parent's.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn single_leaf(value: f32, count: u32) -> Self {
        Tree { nodes: vec![Node::leaf(value, count)] }
    }

    #[inline]
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return i;
            }
            i = if (row[n.feature] as f32) <= n.threshold { n.left } else { n.right } as usize;
        }
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f32 {
        self.nodes[self.leaf_index(row)].leaf_value
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.is_leaf() {
                depth[n.left as usize] = depth[i] + 1;
                depth[n.right as usize] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    /// Re-lays out nodes given in arbitrary order (root at `root`) into
    /// pre-order.
    pub(crate) fn into_preorder(nodes: Vec<Node>, root: usize) -> Tree {
        let mut out = Vec::with_capacity(nodes.len());
        // (source index, parent slot in `out`, is_left)
        let mut stack = vec![(root, usize::MAX, false)];
        while let Some((src, parent, is_left)) = stack.pop() {
            let slot = out.len();
            let n = nodes[src].clone();
            if parent != usize::MAX {
                let p: &mut Node = &mut out[parent];
                if is_left {
                    p.left = slot as i32;
                } else {
                    p.right = slot as i32;
                }
            }
            if !n.is_leaf() {
                stack.push((n.right as usize, slot, false));
                stack.push((n.left as usize, slot, true));
            }
            out.push(n);
        }
        Tree { nodes: out }
    }
}
