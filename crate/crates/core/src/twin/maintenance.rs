//! Device maintenance rule over recent residuals.
//!
//! A device is due for recalibration when the mean absolute residual over
//! its recent window exceeds twice its noise sigma, or when the means of
//! five consecutive sub-windows move strictly in one direction by at
//! least one sigma overall.

use serde::{Deserialize, Serialize};

use crate::metrology::{DeviceKind, MeasurementRecord};

pub const MIN_MAINTENANCE_RECORDS: usize = 20;
pub const DRIFT_SUB_WINDOWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaintenanceStatus {
    Nominal,
    Recalibrate,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceRecommendation {
    pub device: DeviceKind,
    pub status: MaintenanceStatus,
    pub records: usize,
    /// mm
    pub mean_abs_residual: f64,
    /// mm
    pub sigma: f64,
    /// Signed mean residual per sub-window, oldest first (mm).
    pub sub_window_means: Vec<f64>,
    pub reason: String,
}

/// `window` holds the device's records oldest first; `expected` gives the
/// deviation (mm) a healthy device should show for a record.
pub fn maintenance_recommendation(
    device: DeviceKind,
    window: &[&MeasurementRecord],
    sigma: f64,
    expected: impl Fn(&MeasurementRecord) -> f64,
) -> MaintenanceRecommendation {
    let window: Vec<&MeasurementRecord> =
        window.iter().copied().filter(|r| r.device == device && r.is_linear_mm()).collect();
    let mut rec = MaintenanceRecommendation {
        device,
        status: MaintenanceStatus::Indeterminate,
        records: window.len(),
        mean_abs_residual: 0.0,
        sigma,
        sub_window_means: Vec::new(),
        reason: String::new(),
    };
    if window.len() < MIN_MAINTENANCE_RECORDS {
        rec.reason = format!("{} records, need {MIN_MAINTENANCE_RECORDS}", window.len());
        return rec;
    }
    let residuals: Vec<f64> = window.iter().map(|r| r.deviation - expected(r)).collect();
    rec.mean_abs_residual = residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64;
    let n = residuals.len();
    rec.sub_window_means = (0..DRIFT_SUB_WINDOWS)
        .map(|k| {
            let part = &residuals[k * n / DRIFT_SUB_WINDOWS..(k + 1) * n / DRIFT_SUB_WINDOWS];
            part.iter().sum::<f64>() / part.len() as f64
        })
        .collect();
    let m = &rec.sub_window_means;
    let rising = m.windows(2).all(|w| w[1] > w[0]);
    let falling = m.windows(2).all(|w| w[1] < w[0]);
    let span = (m[DRIFT_SUB_WINDOWS - 1] - m[0]).abs();
    if rec.mean_abs_residual > 2.0 * sigma {
        rec.status = MaintenanceStatus::Recalibrate;
        rec.reason = format!("mean |residual| {:.4} mm exceeds 2 sigma ({:.4} mm)", rec.mean_abs_residual, 2.0 * sigma);
    } else if (rising || falling) && span >= sigma {
        rec.status = MaintenanceStatus::Recalibrate;
        rec.reason = format!("monotone drift of {span:.4} mm across {DRIFT_SUB_WINDOWS} sub-windows");
    } else {
        rec.status = MaintenanceStatus::Nominal;
        rec.reason = "within noise".into();
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::reference_campaign;

    fn cmm_window(n: usize, dev: impl Fn(usize) -> f64) -> Vec<MeasurementRecord> {
        reference_campaign(6)
            .unwrap()
            .into_iter()
            .filter(|r| r.device == DeviceKind::Cmm)
            .take(n)
            .enumerate()
            .map(|(i, mut r)| {
                r.deviation = dev(i);
                r.measured_value = r.nominal_value + r.deviation;
                r
            })
            .collect()
    }

    fn run(recs: &[MeasurementRecord]) -> MaintenanceStatus {
        let refs: Vec<&MeasurementRecord> = recs.iter().collect();
        maintenance_recommendation(DeviceKind::Cmm, &refs, 0.0057, |_| 0.0).status
    }

    #[test]
    fn zero_deviations_are_nominal() {
        assert_eq!(run(&cmm_window(40, |_| 0.0)), MaintenanceStatus::Nominal);
    }

    #[test]
    fn three_sigma_offset_recalibrates() {
        assert_eq!(run(&cmm_window(40, |_| 3.0 * 0.0057)), MaintenanceStatus::Recalibrate);
    }

    #[test]
    fn slow_drift_recalibrates() {
        assert_eq!(run(&cmm_window(50, |i| i as f64 * 0.0003)), MaintenanceStatus::Recalibrate);
    }

    #[test]
    fn nineteen_records_are_indeterminate() {
        assert_eq!(run(&cmm_window(19, |_| 1.0)), MaintenanceStatus::Indeterminate);
        assert_eq!(run(&cmm_window(20, |_| 0.0)), MaintenanceStatus::Nominal);
    }
}
