//! Second-order regression trees grown by exact greedy search.
//!
//! Splits maximize `G_L^2/H_L + G_R^2/H_R - G^2/H` over sorted unique
//! feature values; with unit hessians that is plain variance reduction.
//! Ties go to the lowest feature index, then the lowest threshold.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

const MIN_CHILD_HESSIAN: f64 = 1e-9;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    /// Leaf values are clamped to +-this (bounded Newton step).
    pub max_leaf: f64,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
            max_depth: 0,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], id: usize) -> usize {
            match &nodes[id] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Children exist, depth fits and leaves are finite.
    pub fn is_well_formed(&self) -> bool {
        let n = self.nodes.len();
        let links_ok = self.nodes.iter().all(|node| match node {
            TreeNode::Leaf { value } => value.is_finite(),
            TreeNode::Split {
                left,
                right,
                threshold,
                ..
            } => *left < n && *right < n && threshold.is_finite(),
        });
        links_ok && self.depth() <= self.max_depth
    }

    /// Fits one tree to gradients `grad` and hessians `hess`. Returns the tree
    /// and the split gain accumulated per feature.
    pub(crate) fn grow(
        x: ArrayView2<f64>,
        grad: &[f64],
        hess: &[f64],
        params: &GrowParams,
    ) -> (Self, Vec<f64>) {
        let mut builder = Builder {
            x,
            grad,
            hess,
            params,
            nodes: Vec::new(),
            gains: vec![0.0; x.ncols()],
        };
        let mut idx: Vec<usize> = (0..x.nrows()).collect();
        builder.build(&mut idx, 0);
        (
            Self {
                nodes: builder.nodes,
                max_depth: params.max_depth,
            },
            builder.gains,
        )
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GrowParams,
    nodes: Vec<TreeNode>,
    gains: Vec<f64>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let v = if h > MIN_CHILD_HESSIAN { -g / h } else { 0.0 };
        v.clamp(-self.params.max_leaf, self.params.max_leaf)
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: self.leaf_value(g, h),
        });
        if depth >= self.params.max_depth || idx.len() < 2 {
            return id;
        }
        let Some(best) = self.best_split(idx, g, h) else {
            return id;
        };
        self.gains[best.feature] += best.gain;
        let f = best.feature;
        let mut left: Vec<usize> = Vec::with_capacity(idx.len());
        let mut right: Vec<usize> = Vec::with_capacity(idx.len());
        for &i in idx.iter() {
            if self.x[[i, f]] <= best.threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        let l = self.build(&mut left, depth + 1);
        let r = self.build(&mut right, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: f,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, idx: &[usize], g: f64, h: f64) -> Option<Candidate> {
        let parent = g * g / h.max(MIN_CHILD_HESSIAN);
        let mut best: Option<Candidate> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let xi = self.x[[i, f]];
                let xn = self.x[[order[w + 1], f]];
                if xi == xn {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < MIN_CHILD_HESSIAN || hr < MIN_CHILD_HESSIAN {
                    continue;
                }
                let gain = gl * gl / hl + gr * gr / hr - parent;
                let better = match &best {
                    None => gain > MIN_GAIN,
                    Some(b) => gain > b.gain + MIN_GAIN * b.gain.abs().max(1.0),
                };
                if better {
                    best = Some(Candidate {
                        feature: f,
                        threshold: 0.5 * (xi + xn),
                        gain,
                    });
                }
            }
        }
        best
    }
}
