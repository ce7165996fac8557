//! Leaf-wise (best-first) growth of one regression tree on binned features.

use super::binning::BinMapper;
use super::tree::{Node, Tree};
use crate::parallel;

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    g: f64,
    h: f64,
    n: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowLimits {
    pub num_leaves: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_reg: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
}

/// One accepted split, with the best gain any candidate of any open leaf
/// offered at that moment.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthStep {
    pub round: usize,
    pub feature: usize,
    pub threshold: f32,
    pub chosen_gain: f64,
    pub best_candidate_gain: f64,
}

struct OpenLeaf {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
    g: f64,
    h: f64,
    hist: Vec<Vec<Bin>>,
    best: Option<Split>,
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Rows of each leaf with the leaf's value, for the score update.
    pub leaves: Vec<(f32, Vec<u32>)>,
}

#[inline]
fn score(g: f64, h: f64, l2: f64) -> f64 {
    let d = h + l2;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

fn build_hist(binned: &[Vec<u8>], mapper: &BinMapper, rows: &[u32], grad: &[f64], hess: &[f64]) -> Vec<Vec<Bin>> {
    parallel::map_range(binned.len(), |f| {
        let col = &binned[f];
        let mut hist = vec![Bin::default(); mapper.n_bins(f)];
        for &r in rows {
            let b = &mut hist[col[r as usize] as usize];
            b.g += grad[r as usize];
            b.h += hess[r as usize];
            b.n += 1;
        }
        hist
    })
}

/// Calls `visit(feature, bin, gain)` for every admissible split of a leaf, in
/// (feature, bin) order.
fn for_each_candidate(leaf: &OpenLeaf, lim: &GrowLimits, mut visit: impl FnMut(usize, usize, f64)) {
    let n = leaf.rows.len();
    if leaf.depth >= lim.max_depth || n < 2 * lim.min_samples_leaf.max(1) {
        return;
    }
    let parent = score(leaf.g, leaf.h, lim.l2_reg);
    for (f, hist) in leaf.hist.iter().enumerate() {
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for (b, bin) in hist.iter().enumerate().take(hist.len().saturating_sub(1)) {
            gl += bin.g;
            hl += bin.h;
            nl += bin.n as usize;
            let nr = n - nl;
            if nl < lim.min_samples_leaf.max(1) || nr < lim.min_samples_leaf.max(1) {
                continue;
            }
            let (gr, hr) = (leaf.g - gl, leaf.h - hl);
            if hl + lim.l2_reg <= 0.0 || hr + lim.l2_reg <= 0.0 {
                continue;
            }
            let gain = 0.5 * (score(gl, hl, lim.l2_reg) + score(gr, hr, lim.l2_reg) - parent);
            visit(f, b, gain);
        }
    }
}

fn best_split(leaf: &OpenLeaf, lim: &GrowLimits) -> Option<Split> {
    let mut best: Option<Split> = None;
    for_each_candidate(leaf, lim, |feature, bin, gain| {
        if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
            best = Some(Split { feature, bin, gain });
        }
    });
    best
}

fn leaf_value(g: f64, h: f64, lim: &GrowLimits) -> f32 {
    let d = h + lim.l2_reg;
    if d > 0.0 {
        (-g / d * lim.learning_rate) as f32
    } else {
        0.0
    }
}

pub(crate) fn grow_tree(
    binned: &[Vec<u8>],
    mapper: &BinMapper,
    grad: &[f64],
    hess: &[f64],
    lim: &GrowLimits,
    mut trace: Option<(&mut Vec<GrowthStep>, usize)>,
) -> Grown {
    let n = grad.len();
    let rows: Vec<u32> = (0..n as u32).collect();
    let open_leaf = |node: usize, rows: Vec<u32>, depth: usize| {
        let g: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
        let mut leaf = OpenLeaf { node, rows, depth, g, h, hist: Vec::new(), best: None };
        if depth < lim.max_depth && leaf.rows.len() >= 2 * lim.min_samples_leaf.max(1) {
            leaf.hist = build_hist(binned, mapper, &leaf.rows, grad, hess);
            leaf.best = best_split(&leaf, lim);
        }
        leaf
    };

    let mut nodes = vec![Node::leaf(0.0, n as u32)];
    let mut open = vec![open_leaf(0, rows, 0)];
    while open.len() < lim.num_leaves.max(1) {
        let mut pick: Option<(usize, Split)> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(s) = leaf.best {
                if pick.is_none_or(|(_, p)| s.gain > p.gain) {
                    pick = Some((i, s));
                }
            }
        }
        let Some((i, split)) = pick else { break };

        let threshold = mapper.thresholds[split.feature][split.bin];
        if let Some((steps, round)) = trace.as_mut() {
            let mut best_candidate = f64::NEG_INFINITY;
            for leaf in &open {
                for_each_candidate(leaf, lim, |_, _, g| best_candidate = best_candidate.max(g));
            }
            steps.push(GrowthStep {
                round: *round,
                feature: split.feature,
                threshold,
                chosen_gain: split.gain,
                best_candidate_gain: best_candidate,
            });
        }

        let leaf = open.swap_remove(i);
        let col = &binned[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            leaf.rows.iter().partition(|&&r| col[r as usize] as usize <= split.bin);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::leaf(0.0, left_rows.len() as u32));
        nodes.push(Node::leaf(0.0, right_rows.len() as u32));
        let parent = &mut nodes[leaf.node];
        parent.feature = split.feature;
        parent.threshold = threshold;
        parent.left = l as i32;
        parent.right = r as i32;
        parent.gain = split.gain;
        // swap_remove reorders `open`; keep it sorted by node index so that
        // ties between leaves resolve to the earliest-created node.
        open.push(open_leaf(l, left_rows, leaf.depth + 1));
        open.push(open_leaf(r, right_rows, leaf.depth + 1));
        open.sort_by_key(|o| o.node);
    }

    let mut leaves = Vec::with_capacity(open.len());
    for leaf in open {
        let v = leaf_value(leaf.g, leaf.h, lim);
        nodes[leaf.node].leaf_value = v;
        leaves.push((v, leaf.rows));
    }
    Grown { tree: Tree::into_preorder(nodes, 0), leaves }
}
