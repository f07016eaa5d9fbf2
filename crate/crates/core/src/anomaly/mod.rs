//! Anomaly detection on measurement records and evaluation against
//! injected ground truth.
//!
//! The default feature is a robust residual: each deviation minus a
//! least-squares baseline on (nominal, device, temperature), divided by
//! the per-device scaled median absolute deviation. Raw features
//! (deviation, nominal, device, temperature) remain available.

pub mod iforest;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use iforest::{c_factor, fit_isolation_forest, flag_count, top_scores, IsolationForest, IsolationParams};

use crate::campaign::AnomalyLabel;
use crate::error::{validation, Error, Result};
use crate::metrology::{DeviceKind, MeasurementRecord, MM_TO_UM};
use crate::stats::ols_fit;

pub const DEFAULT_CONTAMINATION: f64 = 0.05;

/// Consistency constant turning a MAD into a normal-theory sigma.
const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Robust standardized residual against a linear baseline.
    #[default]
    Residual,
    /// Deviation (µm), nominal (mm), device flag, temperature (C).
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBaseline {
    /// Indices into (nominal, device, temperature) used by the fit.
    pub columns: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Per device: residual median and robust scale, both µm.
    pub scales: Vec<(DeviceKind, f64, f64)>,
}

impl ResidualBaseline {
    fn context(record: &MeasurementRecord) -> [f64; 3] {
        [record.nominal_value, record.device.indicator(), record.temperature]
    }

    fn predict_um(&self, record: &MeasurementRecord) -> f64 {
        let ctx = Self::context(record);
        self.intercept + self.columns.iter().zip(&self.coefficients).map(|(&c, b)| ctx[c] * b).sum::<f64>()
    }

    pub fn residual_um(&self, record: &MeasurementRecord) -> f64 {
        record.deviation * MM_TO_UM - self.predict_um(record)
    }

    pub fn z(&self, record: &MeasurementRecord) -> f64 {
        let r = self.residual_um(record);
        match self.scales.iter().find(|(d, _, _)| *d == record.device) {
            Some(&(_, center, scale)) => (r - center) / scale,
            None => r,
        }
    }

    pub fn fit(records: &[&MeasurementRecord]) -> Result<Self> {
        let ctx: Vec<[f64; 3]> = records.iter().map(|r| Self::context(r)).collect();
        let columns: Vec<usize> = (0..3)
            .filter(|&c| {
                let first = ctx.first().map_or(0.0, |x| x[c]);
                ctx.iter().any(|x| x[c] != first)
            })
            .collect();
        let rows: Vec<Vec<f64>> = ctx.iter().map(|x| columns.iter().map(|&c| x[c]).collect()).collect();
        let y: Vec<f64> = records.iter().map(|r| r.deviation * MM_TO_UM).collect();
        let names: Vec<String> = columns.iter().map(|c| ["Nominal", "Device", "Temperature"][*c].to_string()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let fit = ols_fit(&rows, &y, &names)?;
        let mut baseline = ResidualBaseline {
            columns,
            intercept: fit.coefficients[0],
            coefficients: fit.coefficients[1..].to_vec(),
            scales: Vec::new(),
        };
        for device in DeviceKind::ALL {
            let res: Vec<f64> =
                records.iter().filter(|r| r.device == device).map(|r| baseline.residual_um(r)).collect();
            if res.is_empty() {
                continue;
            }
            let center = median(&res);
            let abs_dev: Vec<f64> = res.iter().map(|r| (r - center).abs()).collect();
            let mut scale = MAD_TO_SIGMA * median(&abs_dev);
            if !(scale > 1e-9) {
                scale = 1.0;
            }
            baseline.scales.push((device, center, scale));
        }
        Ok(baseline)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fitted detector: feature map plus an isolation forest with a
/// threshold calibrated on its own training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyDetector {
    pub mode: FeatureMode,
    pub baseline: Option<ResidualBaseline>,
    pub forest: IsolationForest,
    pub contamination: f64,
    /// Training score of the last flagged row.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record_id: String,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub threshold: f64,
    /// Only records with millimetre deviations are scored.
    pub scored: Vec<ScoredRecord>,
    pub flagged_ids: Vec<String>,
}

impl AnomalyDetector {
    pub fn fit(
        records: &[MeasurementRecord],
        mode: FeatureMode,
        params: &IsolationParams,
        contamination: f64,
    ) -> Result<Self> {
        flag_count(1, contamination)?;
        let used: Vec<&MeasurementRecord> = records.iter().filter(|r| r.is_linear_mm()).collect();
        if used.len() < 2 {
            return Err(Error::InsufficientData { what: "anomaly detector", needed: 2, got: used.len() });
        }
        let baseline = match mode {
            FeatureMode::Residual => Some(ResidualBaseline::fit(&used)?),
            FeatureMode::Raw => None,
        };
        let rows: Vec<Vec<f64>> = used.iter().map(|r| features(mode, baseline.as_ref(), r)).collect();
        let forest = fit_isolation_forest(&rows, params)?;
        let scores = forest.score_all(&rows)?;
        let ids: Vec<&str> = used.iter().map(|r| r.record_id.as_str()).collect();
        let (_, threshold) = top_scores(&scores, &ids, contamination)?;
        Ok(AnomalyDetector { mode, baseline, forest, contamination, threshold })
    }

    pub fn features(&self, record: &MeasurementRecord) -> Option<Vec<f64>> {
        record.is_linear_mm().then(|| features(self.mode, self.baseline.as_ref(), record))
    }

    pub fn score(&self, record: &MeasurementRecord) -> Result<Option<f64>> {
        self.features(record).map(|x| self.forest.score(&x)).transpose()
    }

    /// Streaming decision against the calibrated threshold.
    pub fn is_anomalous(&self, record: &MeasurementRecord) -> Result<bool> {
        Ok(self.score(record)?.is_some_and(|s| s >= self.threshold))
    }

    /// Flag the top `round(contamination * n)` scored records of this
    /// batch, ties resolved by ascending record id.
    pub fn detect(&self, records: &[MeasurementRecord], contamination: f64) -> Result<DetectionOutcome> {
        let used: Vec<&MeasurementRecord> = records.iter().filter(|r| r.is_linear_mm()).collect();
        let rows: Vec<Vec<f64>> = used.iter().map(|r| features(self.mode, self.baseline.as_ref(), r)).collect();
        let scores = self.forest.score_all(&rows)?;
        let ids: Vec<&str> = used.iter().map(|r| r.record_id.as_str()).collect();
        let (flag_idx, threshold) = top_scores(&scores, &ids, contamination)?;
        let flagged: BTreeSet<usize> = flag_idx.into_iter().collect();
        let scored: Vec<ScoredRecord> = used
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(i, (r, &score))| ScoredRecord {
                record_id: r.record_id.clone(),
                score,
                flagged: flagged.contains(&i),
            })
            .collect();
        let flagged_ids = scored.iter().filter(|s| s.flagged).map(|s| s.record_id.clone()).collect();
        Ok(DetectionOutcome { threshold, scored, flagged_ids })
    }
}

fn features(mode: FeatureMode, baseline: Option<&ResidualBaseline>, r: &MeasurementRecord) -> Vec<f64> {
    match (mode, baseline) {
        (FeatureMode::Residual, Some(b)) => vec![b.z(r)],
        _ => vec![r.deviation * MM_TO_UM, r.nominal_value, r.device.indicator(), r.temperature],
    }
}

/// Fit on `records` and flag within the same batch.
pub fn detect_anomalies(
    records: &[MeasurementRecord],
    mode: FeatureMode,
    params: &IsolationParams,
    contamination: f64,
) -> Result<(AnomalyDetector, DetectionOutcome)> {
    let det = AnomalyDetector::fit(records, mode, params, contamination)?;
    let out = det.detect(records, contamination)?;
    Ok((det, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub flagged_ids: Vec<String>,
}

/// Confusion-matrix rates of `flagged_ids` against labels. Records
/// without a label are ignored; a flagged id with no label is an error.
pub fn detection_metrics(flagged_ids: &[String], labels: &[AnomalyLabel]) -> Result<DetectionReport> {
    let truth: HashMap<&str, bool> = labels.iter().map(|l| (l.record_id.as_str(), l.is_anomaly)).collect();
    let flagged: BTreeSet<&str> = flagged_ids.iter().map(String::as_str).collect();
    if let Some(unknown) = flagged.iter().find(|id| !truth.contains_key(*id)) {
        return Err(validation(format!("flagged id {unknown} has no label")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (id, &is_anomaly) in &truth {
        match (flagged.contains(id), is_anomaly) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    if tp + fn_ == 0 {
        return Err(Error::UndefinedMetric("true positive rate needs at least one labelled anomaly".into()));
    }
    let tpr = tp as f64 / (tp + fn_) as f64;
    let fpr = if fp + tn == 0 { 0.0 } else { fp as f64 / (fp + tn) as f64 };
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let f1 = if precision + tpr == 0.0 { 0.0 } else { 2.0 * precision * tpr / (precision + tpr) };
    Ok(DetectionReport {
        tpr,
        fpr,
        precision,
        f1,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        flagged_ids: flagged.iter().map(|s| s.to_string()).collect(),
    })
}
