use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyDetector;
use crate::error::Result;
use crate::metrology::MeasurementRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    OutOfTolerance,
    Anomaly,
    CalibrationDrift,
    /// A scheduled retrain failed; the previous model stays active.
    TrainingFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: u64,
    pub kind: AlertKind,
    pub severity: Severity,
    pub record_id: Option<String>,
    pub message: String,
    pub created_at: DateTime<Utc>,
}

/// An alert before it is numbered and timestamped.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertDraft {
    pub kind: AlertKind,
    pub severity: Severity,
    pub record_id: Option<String>,
    pub message: String,
}

/// Quality alerts for one record: out of tolerance when |deviation|
/// exceeds the band, anomalous when the detector score reaches its
/// calibrated threshold. Both firing raises both to critical.
pub fn evaluate_alerts(record: &MeasurementRecord, detector: Option<&AnomalyDetector>) -> Result<Vec<AlertDraft>> {
    let mut out = Vec::new();
    let verdict = record.verdict()?;
    if !verdict.in_tolerance() {
        out.push(AlertDraft {
            kind: AlertKind::OutOfTolerance,
            severity: Severity::Warning,
            record_id: Some(record.record_id.clone()),
            message: format!(
                "{} {}: deviation {:+.4} mm outside ±{:.4} mm",
                record.part_id, record.feature_id, record.deviation, record.tolerance_band
            ),
        });
    }
    if let Some(det) = detector {
        if let Some(score) = det.score(record)? {
            if score >= det.threshold {
                out.push(AlertDraft {
                    kind: AlertKind::Anomaly,
                    severity: Severity::Warning,
                    record_id: Some(record.record_id.clone()),
                    message: format!("anomaly score {score:.3} at or above threshold {:.3}", det.threshold),
                });
            }
        }
    }
    if out.len() == 2 {
        for a in &mut out {
            a.severity = Severity::Critical;
        }
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct AlertLog {
    alerts: RwLock<Vec<Alert>>,
}

impl AlertLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn restore(alerts: Vec<Alert>) -> Self {
        AlertLog { alerts: RwLock::new(alerts) }
    }

    pub fn push(&self, draft: AlertDraft, at: DateTime<Utc>) -> Alert {
        let mut log = self.alerts.write().expect("alert lock");
        let alert = Alert {
            alert_id: log.last().map_or(1, |a| a.alert_id + 1),
            kind: draft.kind,
            severity: draft.severity,
            record_id: draft.record_id,
            message: draft.message,
            created_at: at,
        };
        log.push(alert.clone());
        alert
    }

    pub fn all(&self) -> Vec<Alert> {
        self.alerts.read().expect("alert lock").clone()
    }

    /// Alerts with ids greater than `after`.
    pub fn since(&self, after: u64) -> Vec<Alert> {
        let log = self.alerts.read().expect("alert lock");
        let start = log.partition_point(|a| a.alert_id <= after);
        log[start..].to_vec()
    }

    pub fn len(&self) -> usize {
        self.alerts.read().expect("alert lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::reference_campaign;

    #[test]
    fn tolerance_alerts() {
        let mut rec = reference_campaign(3).unwrap()[0].clone();
        rec.measured_value = rec.nominal_value + 0.01;
        rec.deviation = 0.01;
        assert!(evaluate_alerts(&rec, None).unwrap().is_empty());
        rec.deviation = 2.0 * rec.tolerance_band;
        rec.measured_value = rec.nominal_value + rec.deviation;
        let a = evaluate_alerts(&rec, None).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].kind, AlertKind::OutOfTolerance);
        assert_eq!(a[0].severity, Severity::Warning);
    }

    #[test]
    fn log_numbers_alerts_in_order() {
        let log = AlertLog::new();
        let t = "2024-01-01T00:00:00Z".parse().unwrap();
        for _ in 0..3 {
            log.push(
                AlertDraft {
                    kind: AlertKind::Anomaly,
                    severity: Severity::Info,
                    record_id: None,
                    message: String::new(),
                },
                t,
            );
        }
        assert_eq!(log.since(1).iter().map(|a| a.alert_id).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(log.since(3).len(), 0);
    }
}
