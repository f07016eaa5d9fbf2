//! Least-squares gradient boosting with shrinkage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_cart, TreeModel, TreeParams};
use super::Dataset;
use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    /// Zero rounds yields the constant mean predictor.
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams { n_rounds: 100, learning_rate: 0.05, max_depth: 3, min_leaf: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbModel {
    pub n_features: usize,
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<TreeModel>,
    /// Training MSE after each round, starting with the constant model.
    pub train_mse: Vec<f64>,
}

impl GbModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

pub fn fit_gradient_boosting(data: &Dataset, params: &BoostingParams) -> Result<GbModel> {
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(validation(format!("learning rate {} outside (0, 1]", params.learning_rate)));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData { what: "gradient boosting", needed: 1, got: 0 });
    }
    let n = data.len();
    let mut sorted = data.targets().to_vec();
    sorted.sort_by(f64::total_cmp);
    // summing in sorted order keeps the fit independent of row order
    let init = sorted.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![init; n];
    let mse = |fitted: &[f64]| data.targets().iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / n as f64;
    let mut train_mse = vec![mse(&fitted)];
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf, max_features: None };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let residuals: Vec<f64> = data.targets().iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let rows: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
        let stage = Dataset::from_rows(&rows, &residuals)?;
        let tree = fit_cart(&stage, &tree_params, &mut rng)?;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.predict_row(data.row(i));
        }
        train_mse.push(mse(&fitted));
        trees.push(tree);
    }
    Ok(GbModel { n_features: data.n_features(), init, learning_rate: params.learning_rate, trees, train_mse })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 10.0, (i % 4) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin() * 3.0 + r[1]).collect();
        Dataset::from_rows(&rows, &y).unwrap()
    }

    #[test]
    fn zero_rounds_is_the_mean() {
        let data = wave();
        let m = fit_gradient_boosting(&data, &BoostingParams { n_rounds: 0, ..Default::default() }).unwrap();
        let mean = data.targets().iter().sum::<f64>() / data.len() as f64;
        assert_eq!(m.predict_row(&[100.0, 0.0]), mean);
    }

    #[test]
    fn training_mse_never_increases() {
        let m = fit_gradient_boosting(&wave(), &BoostingParams { n_rounds: 50, ..Default::default() }).unwrap();
        assert_eq!(m.train_mse.len(), 51);
        for w in m.train_mse.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn single_full_rate_round_interpolates_tiny_data() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let data = Dataset::from_rows(&rows, &[5.0, -1.0, 2.0, 9.0]).unwrap();
        let params = BoostingParams { n_rounds: 1, learning_rate: 1.0, max_depth: 4, min_leaf: 1, seed: 0 };
        let m = fit_gradient_boosting(&data, &params).unwrap();
        for (r, y) in rows.iter().zip(data.targets()) {
            assert!((m.predict_row(r) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_learning_rate() {
        for lr in [0.0, -0.1, 1.5, f64::NAN] {
            let p = BoostingParams { learning_rate: lr, ..Default::default() };
            assert!(fit_gradient_boosting(&wave(), &p).is_err());
        }
    }
}
