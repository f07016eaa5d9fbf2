use serde::{Deserialize, Serialize};

use super::Dataset;

/// Per-column z-score parameters. Constant columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit_features(data: &Dataset) -> Self {
        let p = data.n_features();
        let cols: Vec<Vec<f64>> = (0..p).map(|f| (0..data.len()).map(|i| data.value(i, f)).collect()).collect();
        let (mean, std) = cols.iter().map(|c| moments(c)).unzip();
        Scaler { mean, std }
    }

    pub fn fit_target(data: &Dataset) -> (f64, f64) {
        moments(data.targets())
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

/// Population mean and standard deviation; a zero spread maps to 1.
fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}
