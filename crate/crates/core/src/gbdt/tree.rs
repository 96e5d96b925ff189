//! Regression trees grown level by level with an exact greedy scan.
//!
//! Split search minimises the squared error of the gradients (variance
//! reduction) over every midpoint between consecutive distinct values of
//! every feature. Leaves take the Newton value `Σg / (Σh + λ)`. Rows go left
//! when `x[feature] <= threshold`.

use rayon::prelude::*;

use crate::embedding::FeatureMatrix;

/// Splits must beat this gain; smaller values are floating-point noise.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_reg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Flat node array with the root at index 0; children always follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        RegressionTree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left
                    } else {
                        right
                    } as usize;
                }
            }
        }
    }

    /// Grows one tree on gradients `grad` and hessians `hess` (one per row).
    pub fn fit(
        x: &FeatureMatrix,
        sorted: &SortedColumns,
        grad: &[f64],
        hess: &[f64],
        params: &TreeParams,
    ) -> Self {
        TreeBuilder::new(x, sorted, grad, hess, params).build().0
    }
}

/// Row indices of each feature column in ascending value order (ties by row).
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &FeatureMatrix) -> Self {
        let order = (0..x.n_cols())
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeStats {
    id: u32,
    count: usize,
    sum_g: f64,
    sum_h: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: u32,
    threshold: f64,
}

#[derive(Clone, Copy)]
struct ScanState {
    left_count: usize,
    left_sum: f64,
    last: f64,
    best: Option<Candidate>,
}

pub(crate) struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    sorted: &'a SortedColumns,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TreeParams,
}

impl<'a> TreeBuilder<'a> {
    pub(crate) fn new(
        x: &'a FeatureMatrix,
        sorted: &'a SortedColumns,
        grad: &'a [f64],
        hess: &'a [f64],
        params: &'a TreeParams,
    ) -> Self {
        debug_assert_eq!(grad.len(), x.n_rows());
        debug_assert_eq!(hess.len(), x.n_rows());
        TreeBuilder {
            x,
            sorted,
            grad,
            hess,
            params,
        }
    }

    /// Returns the tree and the leaf node id of every training row.
    pub(crate) fn build(&self) -> (RegressionTree, Vec<u32>) {
        let n = self.x.n_rows();
        let mut node_of = vec![0u32; n];
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut frontier = self.stats(&node_of, &[0]);
        let min_leaf = self.params.min_samples_leaf.max(1);

        for depth in 0..=self.params.max_depth {
            let splittable: Vec<NodeStats> = frontier
                .iter()
                .copied()
                .filter(|s| depth < self.params.max_depth && s.count >= 2 * min_leaf)
                .collect();
            let best = if splittable.is_empty() {
                Vec::new()
            } else {
                self.best_splits(&node_of, &splittable, nodes.len(), min_leaf)
            };

            let mut split_of: Vec<Option<(u32, f64, u32, u32)>> = vec![None; nodes.len()];
            let mut children = Vec::new();
            for s in &frontier {
                let cand = splittable
                    .iter()
                    .position(|p| p.id == s.id)
                    .and_then(|slot| best[slot])
                    .filter(|c| c.gain > MIN_GAIN);
                match cand {
                    Some(c) => {
                        let left = nodes.len() as u32;
                        let right = left + 1;
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes[s.id as usize] = Node::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left,
                            right,
                        };
                        split_of[s.id as usize] = Some((c.feature, c.threshold, left, right));
                        children.push(left);
                        children.push(right);
                    }
                    None => {
                        nodes[s.id as usize] = Node::Leaf {
                            value: self.leaf_value(s),
                        };
                    }
                }
            }
            if children.is_empty() {
                break;
            }
            for (r, node) in node_of.iter_mut().enumerate() {
                if let Some(Some((f, t, l, rt))) = split_of.get(*node as usize) {
                    *node = if self.x.get(r, *f as usize) <= *t {
                        *l
                    } else {
                        *rt
                    };
                }
            }
            frontier = self.stats(&node_of, &children);
        }
        (RegressionTree { nodes }, node_of)
    }

    fn leaf_value(&self, s: &NodeStats) -> f64 {
        let denom = s.sum_h + self.params.l2_leaf_reg;
        if denom > 0.0 {
            let v = s.sum_g / denom;
            if v.is_finite() {
                return v;
            }
        }
        0.0
    }

    /// Sums accumulated in row order.
    fn stats(&self, node_of: &[u32], ids: &[u32]) -> Vec<NodeStats> {
        let max_id = ids.iter().copied().max().unwrap_or(0) as usize;
        let mut slot = vec![usize::MAX; max_id + 1];
        let mut out: Vec<NodeStats> = ids
            .iter()
            .enumerate()
            .map(|(k, &id)| {
                slot[id as usize] = k;
                NodeStats {
                    id,
                    count: 0,
                    sum_g: 0.0,
                    sum_h: 0.0,
                }
            })
            .collect();
        for (r, &node) in node_of.iter().enumerate() {
            if let Some(&k) = slot.get(node as usize) {
                if k != usize::MAX {
                    out[k].count += 1;
                    out[k].sum_g += self.grad[r];
                    out[k].sum_h += self.hess[r];
                }
            }
        }
        out
    }

    /// Best split per splittable node. Features are scanned in parallel and
    /// reduced in ascending feature order with a strict `>` so ties keep the
    /// lowest feature, and within a feature the lowest threshold.
    fn best_splits(
        &self,
        node_of: &[u32],
        splittable: &[NodeStats],
        n_nodes: usize,
        min_leaf: usize,
    ) -> Vec<Option<Candidate>> {
        let mut slot_of = vec![u32::MAX; n_nodes];
        for (k, s) in splittable.iter().enumerate() {
            slot_of[s.id as usize] = k as u32;
        }
        let init = ScanState {
            left_count: 0,
            left_sum: 0.0,
            last: f64::NEG_INFINITY,
            best: None,
        };
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..self.x.n_cols())
            .into_par_iter()
            .map(|f| {
                let mut states = vec![init; splittable.len()];
                for &r in &self.sorted.order[f] {
                    let r = r as usize;
                    let k = slot_of[node_of[r] as usize];
                    if k == u32::MAX {
                        continue;
                    }
                    let k = k as usize;
                    let v = self.x.get(r, f);
                    let node = &splittable[k];
                    let st = &mut states[k];
                    if v > st.last
                        && st.left_count >= min_leaf
                        && node.count - st.left_count >= min_leaf
                    {
                        let nl = st.left_count as f64;
                        let nr = (node.count - st.left_count) as f64;
                        let sr = node.sum_g - st.left_sum;
                        let gain = st.left_sum * st.left_sum / nl + sr * sr / nr
                            - node.sum_g * node.sum_g / node.count as f64;
                        if st.best.is_none_or(|b| gain > b.gain) {
                            let mut threshold = st.last + (v - st.last) / 2.0;
                            if threshold >= v {
                                threshold = st.last;
                            }
                            st.best = Some(Candidate {
                                gain,
                                feature: f as u32,
                                threshold,
                            });
                        }
                    }
                    st.left_count += 1;
                    st.left_sum += self.grad[r];
                    st.last = v;
                }
                states.into_iter().map(|s| s.best).collect()
            })
            .collect();

        let mut best: Vec<Option<Candidate>> = vec![None; splittable.len()];
        for cands in per_feature {
            for (b, c) in best.iter_mut().zip(cands) {
                if let Some(c) = c {
                    if b.is_none_or(|cur| c.gain > cur.gain) {
                        *b = Some(c);
                    }
                }
            }
        }
        best
    }
}
