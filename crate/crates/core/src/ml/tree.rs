//! Weighted CART regression trees with variance-reduction splits.
//!
//! Split search visits rows sorted by `(feature value, target, weight)`, so
//! every sum is accumulated in an order that depends only on the multiset
//! of rows. Trees are therefore bit-identical under any permutation of the
//! training rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum total weight on each side of a split.
    pub min_leaf: usize,
    /// Features examined per node; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 8, min_leaf: 2, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, got: row.len() });
        }
        Ok(self.predict_row(row))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Fit a tree with unit weight on every row.
pub fn fit_cart<R: Rng + ?Sized>(data: &Dataset, params: &TreeParams, rng: &mut R) -> Result<TreeModel> {
    let weights = vec![1.0; data.len()];
    fit_cart_weighted(data, &weights, params, rng)
}

/// Fit a tree where row `i` counts `weights[i]` times. Rows with zero
/// weight are ignored.
pub fn fit_cart_weighted<R: Rng + ?Sized>(
    data: &Dataset,
    weights: &[f64],
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeModel> {
    if data.is_empty() {
        return Err(Error::InsufficientData { what: "regression tree", needed: 1, got: 0 });
    }
    if weights.len() != data.len() {
        return Err(Error::Validation("one weight per row required".into()));
    }
    let active: Vec<usize> = (0..data.len()).filter(|&i| weights[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::InsufficientData { what: "regression tree (positive weights)", needed: 1, got: 0 });
    }
    let mut builder = Builder { data, weights, params, nodes: Vec::new() };
    builder.grow(active, 0, rng);
    Ok(TreeModel { n_features: data.n_features(), nodes: builder.nodes })
}

struct Builder<'a> {
    data: &'a Dataset,
    weights: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (self.data.target(i), self.weights[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let (s, w) = pairs.iter().fold((0.0, 0.0), |(s, w), (y, wi)| (s + y * wi, w + wi));
        s / w
    }

    fn grow<R: Rng + ?Sized>(&mut self, rows: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(&rows) });

        let total_w: f64 = rows.iter().map(|&i| self.weights[i]).sum();
        let min_leaf = self.params.min_leaf.max(1) as f64;
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let y = self.data.target(i);
            (lo.min(y), hi.max(y))
        });
        if depth >= self.params.max_depth || total_w < 2.0 * min_leaf || lo == hi {
            return idx;
        }

        let p = self.data.n_features();
        let features: Vec<usize> = match self.params.max_features {
            Some(k) if k < p => {
                let mut f: Vec<usize> = rand::seq::index::sample(rng, p, k.max(1)).into_iter().collect();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };

        let mut best: Option<Candidate> = None;
        for &f in &features {
            if let Some(c) = self.best_split(&rows, f, min_leaf) {
                if best.as_ref().map_or(true, |b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else { return idx };
        if !(best.gain > 0.0) {
            return idx;
        }

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.data.value(i, best.feature) <= best.threshold);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[idx] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        idx
    }

    fn best_split(&self, rows: &[usize], feature: usize, min_leaf: f64) -> Option<Candidate> {
        let mut sorted: Vec<(f64, f64, f64)> =
            rows.iter().map(|&i| (self.data.value(i, feature), self.data.target(i), self.weights[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
        if sorted.first()?.0 == sorted.last()?.0 {
            return None;
        }

        let (total_s, total_w) = sorted.iter().fold((0.0, 0.0), |(s, w), (_, y, wi)| (s + y * wi, w + wi));
        let parent = total_s * total_s / total_w;
        let mut best: Option<Candidate> = None;
        let (mut sl, mut wl) = (0.0, 0.0);
        for k in 0..sorted.len() - 1 {
            let (x, y, w) = sorted[k];
            sl += y * w;
            wl += w;
            let next = sorted[k + 1].0;
            if x == next {
                continue;
            }
            let wr = total_w - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let sr = total_s - sl;
            let gain = sl * sl / wl + sr * sr / wr - parent;
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                let mid = 0.5 * (x + next);
                let threshold = if mid < next { mid } else { x };
                best = Some(Candidate { gain, feature, threshold });
            }
        }
        best
    }
}
