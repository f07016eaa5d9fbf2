//! Linear epsilon-insensitive support vector regression trained by
//! averaged stochastic subgradient descent on standardized data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::standardize::Scaler;
use super::Dataset;
use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    /// Insensitive half-width in target units.
    pub epsilon: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams { epsilon: 0.5, lambda: 1e-3, epochs: 100, step: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub scaler: Scaler,
    pub y_mean: f64,
    pub y_std: f64,
    /// Weights and bias in standardized space.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SvrModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.scaler.transform(row);
        let s = self.bias + z.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>();
        self.y_mean + self.y_std * s
    }

    /// Slope of the prediction along one raw feature.
    pub fn raw_slope(&self, feature: usize) -> f64 {
        self.weights[feature] * self.y_std / self.scaler.std[feature]
    }
}

pub fn fit_svr_linear(data: &Dataset, params: &SvrParams) -> Result<SvrModel> {
    if !(params.lambda > 0.0) {
        return Err(validation("lambda must be positive"));
    }
    if !(params.epsilon >= 0.0) {
        return Err(validation("epsilon must be non-negative"));
    }
    if !(params.step > 0.0) {
        return Err(validation("step must be positive"));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData { what: "support vector regression", needed: 1, got: 0 });
    }
    let scaler = Scaler::fit_features(data);
    let (y_mean, y_std) = Scaler::fit_target(data);
    let xs: Vec<Vec<f64>> = data.rows().map(|r| scaler.transform(r)).collect();
    let ys: Vec<f64> = data.targets().iter().map(|y| (y - y_mean) / y_std).collect();
    let eps = params.epsilon / y_std;

    let p = data.n_features();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; p];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let burn_in = params.epochs / 2;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let eta = params.step / (1.0 + epoch as f64).sqrt();
        for &i in &order {
            let pred = b + xs[i].iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>();
            let r = pred - ys[i];
            let g = if r > eps {
                1.0
            } else if r < -eps {
                -1.0
            } else {
                0.0
            };
            for (wi, x) in w.iter_mut().zip(&xs[i]) {
                *wi -= eta * (2.0 * params.lambda * *wi + g * x);
            }
            b -= eta * g;
            if epoch >= burn_in {
                averaged += 1;
                let k = averaged as f64;
                for (a, wi) in w_avg.iter_mut().zip(&w) {
                    *a += (wi - *a) / k;
                }
                b_avg += (b - b_avg) / k;
            }
        }
    }
    if averaged == 0 {
        w_avg = w;
        b_avg = b;
    }
    if w_avg.iter().any(|v| !v.is_finite()) || !b_avg.is_finite() {
        return Err(Error::Training {
            model: "support vector regression",
            epoch: params.epochs,
            reason: "weights became non-finite".into(),
        });
    }
    Ok(SvrModel { scaler, y_mean, y_std, weights: w_avg, bias: b_avg })
}
