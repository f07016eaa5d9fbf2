//! Isolation forest over dense feature rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::ml::mix64;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Harmonic number, exact below 10 and `ln i + gamma` above.
pub fn harmonic(i: usize) -> f64 {
    if i < 10 {
        (1..=i).map(|k| 1.0 / k as f64).sum()
    } else {
        (i as f64).ln() + EULER_GAMMA
    }
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// nodes.
pub fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => 2.0 * harmonic(n - 1) - 2.0 * (n - 1) as f64 / n as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolationParams {
    pub n_trees: usize,
    /// Upper bound on the per-tree subsample; capped at the row count.
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for IsolationParams {
    fn default() -> Self {
        IsolationParams { n_trees: 100, max_samples: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum INode {
    /// `size` training rows ended here.
    External { size: usize },
    /// Rows with `x[feature] <= split` go left.
    Internal { feature: usize, split: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<INode>,
}

impl IsolationTree {
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[idx] {
                INode::External { size } => return depth as f64 + c_factor(size),
                INode::Internal { feature, split, left, right } => {
                    idx = if x[feature] <= split { left } else { right };
                    depth += 1;
                }
            }
        }
    }

    pub fn height(&self) -> usize {
        fn walk(nodes: &[INode], idx: usize) -> usize {
            match nodes[idx] {
                INode::External { .. } => 0,
                INode::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub n_features: usize,
    pub subsample_size: usize,
    pub height_limit: usize,
    pub normalizer: f64,
    pub trees: Vec<IsolationTree>,
}

/// Split attribute and value for a node, or `None` when every attribute
/// is constant over `rows`. Exposed so tests can replay the draw order.
pub(crate) fn draw_split<R: Rng + ?Sized>(data: &[Vec<f64>], rows: &[usize], rng: &mut R) -> Option<(usize, f64)> {
    let p = data[rows[0]].len();
    let ranges: Vec<(usize, f64, f64)> = (0..p)
        .filter_map(|f| {
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(data[i][f]), hi.max(data[i][f])));
            (lo < hi).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return None;
    }
    let (f, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let u: f64 = rng.random();
    let split = (lo + u * (hi - lo)).min(float_below(hi));
    Some((f, split))
}

/// Largest float strictly below a finite `x`.
fn float_below(x: f64) -> f64 {
    if x == 0.0 {
        -f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

pub(crate) fn subsample<R: Rng + ?Sized>(n: usize, psi: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = rand::seq::index::sample(rng, n, psi).into_iter().collect();
    idx.sort_unstable();
    idx
}

pub(crate) fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(tree as u64 + 0x5151)))
}

fn grow<R: Rng + ?Sized>(
    data: &[Vec<f64>],
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    nodes: &mut Vec<INode>,
    rng: &mut R,
) -> usize {
    let idx = nodes.len();
    nodes.push(INode::External { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return idx;
    }
    let Some((feature, split)) = draw_split(data, &rows, rng) else {
        return idx;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data[i][feature] <= split);
    let left = grow(data, l, depth + 1, limit, nodes, rng);
    let right = grow(data, r, depth + 1, limit, nodes, rng);
    nodes[idx] = INode::Internal { feature, split, left, right };
    idx
}

pub fn fit_isolation_forest(data: &[Vec<f64>], params: &IsolationParams) -> Result<IsolationForest> {
    if data.len() < 2 {
        return Err(Error::InsufficientData { what: "isolation forest", needed: 2, got: data.len() });
    }
    if params.n_trees < 1 || params.max_samples < 2 {
        return Err(validation("isolation forest needs n_trees >= 1 and max_samples >= 2"));
    }
    let p = data[0].len();
    if let Some(bad) = data.iter().find(|r| r.len() != p) {
        return Err(Error::SchemaMismatch { expected: p, got: bad.len() });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(validation("isolation forest features must be finite"));
    }
    let psi = params.max_samples.min(data.len());
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let rows = subsample(data.len(), psi, &mut rng);
            let mut nodes = Vec::new();
            grow(data, rows, 0, height_limit, &mut nodes, &mut rng);
            IsolationTree { nodes }
        })
        .collect();
    Ok(IsolationForest { n_features: p, subsample_size: psi, height_limit, normalizer: c_factor(psi), trees })
}

impl IsolationForest {
    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::SchemaMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// s(x) = 2^(-E[h(x)] / c(psi)), in (0, 1].
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(score_from_path(self.mean_path_length(x)?, self.normalizer))
    }

    pub fn score_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.score(r)).collect()
    }
}

pub fn score_from_path(mean_path: f64, normalizer: f64) -> f64 {
    2f64.powf(-mean_path / normalizer)
}

/// Number of rows flagged at a contamination level.
pub fn flag_count(n: usize, contamination: f64) -> Result<usize> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err(validation(format!("contamination {contamination} outside (0, 0.5)")));
    }
    Ok(((contamination * n as f64).round() as usize).max(1).min(n))
}

/// Indices of the `round(c * n)` highest scores (at least one). Equal
/// scores are resolved by ascending `keys`.
pub fn top_scores<K: Ord>(scores: &[f64], keys: &[K], contamination: f64) -> Result<(Vec<usize>, f64)> {
    if scores.is_empty() {
        return Err(Error::InsufficientData { what: "anomaly detection", needed: 1, got: 0 });
    }
    let k = flag_count(scores.len(), contamination)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| keys[a].cmp(&keys[b])));
    order.truncate(k);
    let threshold = scores[*order.last().expect("k >= 1")];
    order.sort_unstable();
    Ok((order, threshold))
}
