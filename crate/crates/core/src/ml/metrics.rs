use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// R² (dimensionless), RMSE and MAE in target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl EvalMetrics {
    pub fn mean_of(items: &[EvalMetrics]) -> Option<EvalMetrics> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(EvalMetrics {
            r2: items.iter().map(|m| m.r2).sum::<f64>() / n,
            rmse: items.iter().map(|m| m.rmse).sum::<f64>() / n,
            mae: items.iter().map(|m| m.mae).sum::<f64>() / n,
        })
    }
}

pub fn eval_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<EvalMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(validation(format!("{} targets but {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.is_empty() {
        return Err(Error::InsufficientData { what: "evaluation", needed: 1, got: 0 });
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let sst: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(Error::UndefinedMetric("R² needs non-constant targets".into()));
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    let sae: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum();
    let m = EvalMetrics { r2: 1.0 - sse / sst, rmse: (sse / n).sqrt(), mae: sae / n };
    debug_assert!(m.rmse >= m.mae * (1.0 - 1e-12));
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let m = eval_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((m.mae - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.rmse - 0.5774).abs() < 5e-5);
        assert!((m.r2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_mean_predictors() {
        let y = [1.0, 4.0, 2.0, 8.0];
        assert_eq!(eval_metrics(&y, &y).unwrap(), EvalMetrics { r2: 1.0, rmse: 0.0, mae: 0.0 });
        let m = eval_metrics(&y, &[3.75; 4]).unwrap();
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn constant_truth_is_undefined() {
        assert!(matches!(eval_metrics(&[2.0, 2.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(eval_metrics(&[], &[]).is_err());
        assert!(eval_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..50)) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(m) = eval_metrics(&y, &p) {
                prop_assert!(m.rmse >= m.mae * (1.0 - 1e-12));
                prop_assert!(m.mae >= 0.0);
                prop_assert!(m.r2 <= 1.0);
            }
        }
    }
}
