use serde::{Deserialize, Serialize};

use super::special::student_t_quantile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    /// n - 1 denominator.
    pub sample_std: f64,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    /// 95% confidence interval for the mean.
    pub ci95: (f64, f64),
    /// 95% prediction interval for a single new observation.
    pub predictive95: (f64, f64),
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n - 1 denominator), two-pass.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn descriptive_stats(values: &[f64]) -> Result<DescriptiveStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { what: "descriptive statistics", needed: 2, got: n });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("values must be finite".into()));
    }
    let mean = mean(values);
    let sample_std = sample_variance(values).sqrt();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t = student_t_quantile(0.975, (n - 1) as f64)?;
    let half = t * sample_std / (n as f64).sqrt();
    let pred_half = t * sample_std * (1.0 + 1.0 / n as f64).sqrt();
    Ok(DescriptiveStats {
        n,
        mean,
        sample_std,
        min,
        max,
        range: max - min,
        ci95: (mean - half, mean + half),
        predictive95: (mean - pred_half, mean + pred_half),
    })
}
