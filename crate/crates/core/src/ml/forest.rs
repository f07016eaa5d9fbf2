//! Random forest regression.
//!
//! Bootstrap multiplicities come from a Poisson(1) draw keyed on a hash of
//! each row's content and the tree index, so the sample a tree sees does
//! not depend on where a row sits in the training table.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_cart_weighted, TreeModel, TreeParams};
use super::{mix64, row_hash, Dataset};
use crate::error::{validation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// ceil(sqrt(p))
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().ceil() as usize,
            MaxFeatures::All => p,
            MaxFeatures::Count(k) => k.clamp(1, p.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Poisson(1) draw from a uniform in [0, 1).
fn poisson_one(u: f64) -> u32 {
    let mut k = 0u32;
    let mut p = (-1.0f64).exp();
    let mut cdf = p;
    while u >= cdf && k < 32 {
        k += 1;
        p /= f64::from(k);
        cdf += p;
    }
    k
}

pub(crate) fn bootstrap_weights(data: &Dataset, salt: u64) -> Vec<f64> {
    (0..data.len())
        .map(|i| {
            let h = row_hash(salt, data.row(i), data.target(i));
            let u = (h >> 11) as f64 / (1u64 << 53) as f64;
            f64::from(poisson_one(u))
        })
        .collect()
}

pub fn fit_random_forest(data: &Dataset, params: &ForestParams) -> Result<ForestModel> {
    if params.n_trees < 1 {
        return Err(validation("a forest needs at least one tree"));
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: Some(params.max_features.resolve(data.n_features())),
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let tree_seed = mix64(params.seed ^ mix64(t as u64 + 1));
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let mut weights = if params.bootstrap { bootstrap_weights(data, tree_seed) } else { vec![1.0; data.len()] };
        if weights.iter().all(|&w| w == 0.0) {
            weights = vec![1.0; data.len()];
        }
        trees.push(fit_cart_weighted(data, &weights, &tree_params, &mut rng)?);
    }
    Ok(ForestModel { n_features: data.n_features(), trees })
}
