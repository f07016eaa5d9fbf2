//! Ordinary least squares with coefficient inference, solved through a
//! Householder QR factorization of the design matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::special::{student_t_quantile, student_t_two_sided_p};
use crate::error::{validation, Error, Result};
use crate::metrology::MeasurementRecord;

/// Relative threshold on `|R_jj| / ||X_j||` below which a column counts as
/// linearly dependent on the ones before it.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// Intercept first, then one name per predictor.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub ci95: Vec<(f64, f64)>,
    pub r_squared: f64,
    /// Residual standard error.
    pub sigma: f64,
    pub n: usize,
    pub df_resid: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    /// Prediction for one predictor row (without the intercept column).
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() + 1 != self.coefficients.len() {
            return Err(Error::SchemaMismatch { expected: self.coefficients.len() - 1, got: row.len() });
        }
        Ok(self.coefficients[0] + row.iter().zip(&self.coefficients[1..]).map(|(x, b)| x * b).sum::<f64>())
    }
}

/// Fit `y ~ 1 + X`. `rows` hold predictors only; the intercept is prepended.
pub fn ols_fit(rows: &[Vec<f64>], y: &[f64], predictor_names: &[&str]) -> Result<RegressionResult> {
    let n = rows.len();
    let p = predictor_names.len();
    if y.len() != n {
        return Err(validation(format!("{n} design rows but {} responses", y.len())));
    }
    if n < p + 2 {
        return Err(Error::InsufficientData { what: "least squares regression", needed: p + 2, got: n });
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::SchemaMismatch { expected: p, got: rows[bad].len() });
    }
    if rows.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(validation("design and response must be finite"));
    }

    let k = p + 1;
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let names: Vec<String> =
        std::iter::once("Intercept".to_string()).chain(predictor_names.iter().map(|s| s.to_string())).collect();
    for j in 0..k {
        let col_norm = x.column(j).norm();
        if col_norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * col_norm {
            return Err(Error::SingularDesign { column: names[j].clone() });
        }
    }

    let qty = qr.q().transpose() * &yv;
    let beta = r.solve_upper_triangular(&qty).ok_or_else(|| Error::SingularDesign { column: names[k - 1].clone() })?;

    let fitted = &x * &beta;
    let resid = &yv - fitted;
    let sse = resid.norm_squared();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let df_resid = n - k;
    let sigma2 = sse / df_resid as f64;

    // (X'X)^-1 = R^-1 R^-T
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::SingularDesign { column: names[k - 1].clone() })?;
    let cov_unscaled = &r_inv * r_inv.transpose();

    let t_crit = student_t_quantile(0.975, df_resid as f64)?;
    let mut std_errors = Vec::with_capacity(k);
    let mut t_stats = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    let mut ci95 = Vec::with_capacity(k);
    for j in 0..k {
        let b = beta[j];
        let se = (sigma2 * cov_unscaled[(j, j)]).sqrt();
        let (t, pv) = if se > 0.0 {
            let t = b / se;
            (t, student_t_two_sided_p(t, df_resid as f64)?)
        } else if b == 0.0 {
            (0.0, 1.0)
        } else {
            (b.signum() * f64::INFINITY, 0.0)
        };
        std_errors.push(se);
        t_stats.push(t);
        p_values.push(pv);
        ci95.push((b - t_crit * se, b + t_crit * se));
    }

    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    Ok(RegressionResult {
        names,
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_stats,
        p_values,
        ci95,
        r_squared,
        sigma: sigma2.sqrt(),
        n,
        df_resid,
    })
}

pub const DEVIATION_PREDICTORS: [&str; 3] = ["Nominal", "Device", "Temperature"];

/// Predictor row (nominal mm, CMM indicator, temperature C).
pub fn deviation_predictors(record: &MeasurementRecord) -> Vec<f64> {
    vec![record.nominal_value, record.device.indicator(), record.temperature]
}

/// Deviation (mm) regressed on nominal, device and temperature. Angular
/// features are left out so every response is in millimetres.
pub fn deviation_regression(records: &[MeasurementRecord]) -> Result<RegressionResult> {
    let used: Vec<&MeasurementRecord> = records.iter().filter(|r| r.is_linear_mm()).collect();
    let rows: Vec<Vec<f64>> = used.iter().map(|r| deviation_predictors(r)).collect();
    let y: Vec<f64> = used.iter().map(|r| r.deviation).collect();
    ols_fit(&rows, &y, &DEVIATION_PREDICTORS)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BETA: [f64; 4] = [-0.0152, 0.00015, 0.0112, 0.00078];

    fn design() -> Vec<Vec<f64>> {
        let mut rows = Vec::new();
        for (i, nominal) in [5.0, 12.0, 40.0, 80.0, 150.0, 300.0, 500.0].iter().enumerate() {
            for device in [0.0, 1.0] {
                for temp in [19.7, 20.2, 29.8, 30.4] {
                    rows.push(vec![*nominal, device, temp + 0.01 * i as f64]);
                }
            }
        }
        rows
    }

    #[test]
    fn noiseless_recovery() {
        let rows = design();
        let y: Vec<f64> = rows.iter().map(|r| BETA[0] + BETA[1] * r[0] + BETA[2] * r[1] + BETA[3] * r[2]).collect();
        let fit = ols_fit(&rows, &y, &DEVIATION_PREDICTORS).unwrap();
        for (b, truth) in fit.coefficients.iter().zip(BETA) {
            assert!((b - truth).abs() < 1e-12, "{b} vs {truth}");
        }
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_response() {
        let rows = design();
        let y = vec![0.42; rows.len()];
        let fit = ols_fit(&rows, &y, &DEVIATION_PREDICTORS).unwrap();
        assert!((fit.coefficients[0] - 0.42).abs() < 1e-12);
        for b in &fit.coefficients[1..] {
            assert!(b.abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_columns() {
        let rows = design();
        let y: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| 0.001 * r[0] - 0.3 * r[1] + 0.05 * r[2] + ((i * 7919) % 13) as f64 * 0.01)
            .collect();
        let fit = ols_fit(&rows, &y, &DEVIATION_PREDICTORS).unwrap();
        let resid: Vec<f64> = rows.iter().zip(&y).map(|(r, v)| v - fit.predict(r).unwrap()).collect();
        let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let intercept_dot: f64 = resid.iter().sum();
        assert!(intercept_dot.abs() < 1e-8 * scale * rows.len() as f64);
        for j in 0..3 {
            let dot: f64 = rows.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
            let col_scale = rows.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
            assert!(dot.abs() < 1e-8 * scale * col_scale * rows.len() as f64, "column {j}: {dot}");
        }
    }

    #[test]
    fn rank_deficiency_names_column() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        match ols_fit(&rows, &y, &["a", "b"]) {
            Err(Error::SingularDesign { column }) => assert_eq!(column, "b"),
            other => panic!("expected singular design, got {other:?}"),
        }
        // constant predictor duplicates the intercept
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![3.0, i as f64]).collect();
        assert!(matches!(ols_fit(&rows, &y, &["c", "x"]), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn needs_enough_rows() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(matches!(ols_fit(&rows, &[1.0, 2.0], &["x"]), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn seed_42_campaign_covers_generator_coefficients() {
        let recs = crate::campaign::reference_campaign(42).unwrap();
        let fit = deviation_regression(&recs).unwrap();
        for (i, beta) in BETA.iter().enumerate() {
            let (lo, hi) = fit.ci95[i];
            assert!(lo <= *beta && *beta <= hi, "{}: {beta} not in ({lo}, {hi})", fit.names[i]);
        }
    }
}
