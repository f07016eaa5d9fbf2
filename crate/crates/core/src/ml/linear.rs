//! Least-squares baseline over the leading continuous features.

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::Result;
use crate::stats::ols_fit;

/// Features used by the linear baseline: nominal, device and temperature.
const LINEAR_COLUMNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub n_features: usize,
    pub columns: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let columns: Vec<usize> = (0..data.n_features().min(LINEAR_COLUMNS)).collect();
        let rows: Vec<Vec<f64>> = data.rows().map(|r| columns.iter().map(|&c| r[c]).collect()).collect();
        let names: Vec<String> = columns.iter().map(|c| format!("x{c}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let fit = ols_fit(&rows, data.targets(), &names)?;
        Ok(LinearModel {
            n_features: data.n_features(),
            columns,
            intercept: fit.coefficients[0],
            coefficients: fit.coefficients[1..].to_vec(),
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.columns.iter().zip(&self.coefficients).map(|(&c, b)| row[c] * b).sum::<f64>()
    }
}
