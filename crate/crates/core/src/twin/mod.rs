//! The digital twin: live measurement store, model registry with
//! scheduled retraining, quality alerts and what-if queries.

pub mod alerts;
pub mod clock;
pub mod maintenance;
pub mod registry;
pub mod simulate;
pub mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

pub use alerts::{evaluate_alerts, Alert, AlertDraft, AlertKind, AlertLog, Severity};
pub use clock::{Clock, Stopwatch, SystemClock, VirtualClock};
pub use maintenance::{maintenance_recommendation, MaintenanceRecommendation, MaintenanceStatus};
pub use registry::{Candidate, ModelRegistry, ModelRegistryEntry, ModelStatus, PublishedModel, RegistrySnapshot};
pub use simulate::{
    replay_pipeline, simulate_year, simulate_year_with, standard_feed, DataFeed, PipelineReplay, ReplayUpdate,
    RetrainEvent, TrajectoryPoint, YearSimulation,
};
pub use store::{Append, MeasurementStore};

use crate::anomaly::{AnomalyDetector, FeatureMode, IsolationParams, DEFAULT_CONTAMINATION};
use crate::campaign::DeviceModel;
use crate::error::{Error, Result};
use crate::metrology::{tolerance_check, DeviceKind, GeometryClass, MeasurementRecord, ToleranceVerdict, MM_TO_UM};
use crate::ml::{deviation_dataset, kfold_cv, FeatureVector, ModelArtifact, RegressorSpec, FEATURE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RetrainInterval {
    Weekly,
    Monthly,
    Quarterly,
}

impl RetrainInterval {
    pub const ALL: [RetrainInterval; 3] =
        [RetrainInterval::Weekly, RetrainInterval::Monthly, RetrainInterval::Quarterly];

    /// Weeks (1..=52) that close an interval. Month `m` ends at week
    /// `round(52 m / 12)`, quarter `q` at week `13 q`.
    pub fn event_weeks(self) -> Vec<u32> {
        match self {
            RetrainInterval::Weekly => (1..=52).collect(),
            RetrainInterval::Monthly => (1..=12).map(|m| (52.0 * f64::from(m) / 12.0).round() as u32).collect(),
            RetrainInterval::Quarterly => (1..=4).map(|q| 13 * q).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RetrainInterval::Weekly => "weekly",
            RetrainInterval::Monthly => "monthly",
            RetrainInterval::Quarterly => "quarterly",
        }
    }
}

impl std::str::FromStr for RetrainInterval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weekly" => Ok(RetrainInterval::Weekly),
            "monthly" => Ok(RetrainInterval::Monthly),
            "quarterly" => Ok(RetrainInterval::Quarterly),
            _ => Err(Error::Validation(format!("unknown schedule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainingSchedule {
    pub interval: RetrainInterval,
    pub update_cadence_hours: u32,
    pub min_new_rows: usize,
}

impl Default for RetrainingSchedule {
    fn default() -> Self {
        RetrainingSchedule { interval: RetrainInterval::Weekly, update_cadence_hours: 24, min_new_rows: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub spec: RegressorSpec,
    pub schedule: RetrainingSchedule,
    pub cv_folds: usize,
    pub seed: u64,
    /// Noise sigma per device (mm), the maintenance baseline.
    pub device_sigmas: Vec<(DeviceKind, f64)>,
    pub isolation: IsolationParams,
    pub contamination: f64,
    /// Most recent records per device considered for maintenance.
    pub maintenance_window: usize,
    /// Band used by what-if queries that do not name one (mm).
    pub default_tolerance_band: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            spec: RegressorSpec::default_ensemble(),
            schedule: RetrainingSchedule::default(),
            cv_folds: 5,
            seed: 0,
            device_sigmas: DeviceModel::reference_pair().iter().map(|m| (m.kind, m.noise_sigma)).collect(),
            isolation: IsolationParams::default(),
            contamination: DEFAULT_CONTAMINATION,
            maintenance_window: 50,
            default_tolerance_band: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestAck {
    pub record_id: String,
    pub sequence: u64,
    pub duplicate: bool,
    pub alerts: Vec<Alert>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    /// Ingests in the trailing hour.
    pub ingestion_rate: f64,
    pub last_update: Option<DateTime<Utc>>,
    pub convergence_minutes: Option<f64>,
    pub last_r2_delta: Option<f64>,
    pub store_size: usize,
    pub active_version: Option<u64>,
    pub update_frequency_hours: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhatIfQuery {
    #[serde(alias = "nominal")]
    pub nominal_mm: f64,
    pub device: DeviceKind,
    #[serde(alias = "temperature")]
    pub temperature_c: f64,
    /// When absent the prediction is averaged over all geometry classes.
    #[serde(default)]
    pub geometry: Option<GeometryClass>,
    #[serde(default)]
    pub tolerance_band_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfAnswer {
    pub predicted_deviation_um: f64,
    pub tolerance_band_mm: f64,
    pub verdict: ToleranceVerdict,
    pub model_version: u64,
}

pub struct DigitalTwin {
    clock: Arc<dyn Clock>,
    config: TwinConfig,
    store: MeasurementStore,
    registry: ModelRegistry,
    alerts: AlertLog,
    detector: RwLock<Option<Arc<AnomalyDetector>>>,
    ingest_times: Mutex<Vec<DateTime<Utc>>>,
    drifting: Mutex<HashMap<DeviceKind, bool>>,
    training: Mutex<()>,
}

impl std::fmt::Debug for DigitalTwin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DigitalTwin")
            .field("records", &self.store.len())
            .field("active", &self.registry.active().map(|p| p.entry.version))
            .finish()
    }
}

impl DigitalTwin {
    pub fn new(config: TwinConfig, clock: Arc<dyn Clock>) -> Self {
        DigitalTwin {
            clock,
            config,
            store: MeasurementStore::new(),
            registry: ModelRegistry::new(),
            alerts: AlertLog::new(),
            detector: RwLock::new(None),
            ingest_times: Mutex::new(Vec::new()),
            drifting: Mutex::new(HashMap::new()),
            training: Mutex::new(()),
        }
    }

    /// Rebuild from persisted state. Records are loaded without raising
    /// alerts; the detector is refit on the restored store.
    pub fn restore(
        config: TwinConfig,
        clock: Arc<dyn Clock>,
        records: Vec<MeasurementRecord>,
        registry: RegistrySnapshot,
        alerts: Vec<Alert>,
    ) -> Result<Self> {
        let mut twin = DigitalTwin::new(config, clock);
        twin.registry = ModelRegistry::restore(registry)?;
        twin.alerts = AlertLog::restore(alerts);
        for r in records {
            r.validate()?;
            twin.store.append(r);
        }
        twin.refresh_detector()?;
        Ok(twin)
    }

    pub fn config(&self) -> &TwinConfig {
        &self.config
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn store(&self) -> &MeasurementStore {
        &self.store
    }

    pub fn registry(&self) -> &ModelRegistry {
        &self.registry
    }

    pub fn alerts(&self) -> &AlertLog {
        &self.alerts
    }

    pub fn detector(&self) -> Option<Arc<AnomalyDetector>> {
        self.detector.read().expect("detector lock").clone()
    }

    pub fn records(&self) -> Vec<MeasurementRecord> {
        self.store.snapshot().iter().map(|r| (**r).clone()).collect()
    }

    /// Validate, store and evaluate alerts for one record.
    pub fn ingest(&self, record: MeasurementRecord) -> Result<IngestAck> {
        record.validate()?;
        let record_id = record.record_id.clone();
        let device = record.device;
        let seq = match self.store.append(record) {
            Append::Duplicate(seq) => {
                return Ok(IngestAck { record_id, sequence: seq, duplicate: true, alerts: Vec::new() });
            }
            Append::Stored(seq) => seq,
        };
        let now = self.clock.now();
        self.ingest_times.lock().expect("rate lock").push(now);
        let stored = self.store.get(&record_id).expect("just stored");
        let detector = self.detector();
        let mut raised: Vec<Alert> =
            evaluate_alerts(&stored, detector.as_deref())?.into_iter().map(|d| self.alerts.push(d, now)).collect();
        if let Some(a) = self.check_drift(device, now) {
            raised.push(a);
        }
        Ok(IngestAck { record_id, sequence: seq, duplicate: false, alerts: raised })
    }

    fn sigma_for(&self, device: DeviceKind) -> f64 {
        self.config.device_sigmas.iter().find(|(d, _)| *d == device).map_or(0.0, |(_, s)| *s)
    }

    /// Maintenance status for `device` over its most recent `window`
    /// records, judged against the active model's expected deviation.
    pub fn maintenance(&self, device: DeviceKind, window: usize) -> MaintenanceRecommendation {
        let snap = self.store.snapshot();
        let mut recent: Vec<&MeasurementRecord> =
            snap.iter().rev().map(|r| &**r).filter(|r| r.device == device && r.is_linear_mm()).take(window).collect();
        recent.reverse();
        let active = self.registry.active();
        let expected = |r: &MeasurementRecord| -> f64 {
            match &active {
                Some(p) => FeatureVector::from_record(r)
                    .to_row()
                    .and_then(|row| p.artifact.model.predict(&row))
                    .map_or(0.0, |um| um / MM_TO_UM),
                None => 0.0,
            }
        };
        maintenance_recommendation(device, &recent, self.sigma_for(device), expected)
    }

    fn check_drift(&self, device: DeviceKind, now: DateTime<Utc>) -> Option<Alert> {
        self.registry.active()?;
        let rec = self.maintenance(device, self.config.maintenance_window);
        let due = rec.status == MaintenanceStatus::Recalibrate;
        let mut state = self.drifting.lock().expect("drift lock");
        let was = state.insert(device, due).unwrap_or(false);
        (due && !was).then(|| {
            self.alerts.push(
                AlertDraft {
                    kind: AlertKind::CalibrationDrift,
                    severity: Severity::Warning,
                    record_id: None,
                    message: format!("{device}: recalibration recommended, {}", rec.reason),
                },
                now,
            )
        })
    }

    pub fn stats(&self) -> PipelineStats {
        let now = self.clock.now();
        let hour_ago = now - Duration::hours(1);
        let rate =
            self.ingest_times.lock().expect("rate lock").iter().filter(|t| **t >= hour_ago && **t <= now).count();
        let active = self.registry.active();
        PipelineStats {
            ingestion_rate: rate as f64,
            last_update: active.as_ref().map(|p| p.entry.trained_at),
            convergence_minutes: active.as_ref().map(|p| p.entry.convergence_minutes),
            last_r2_delta: active.as_ref().and_then(|p| p.entry.r2_delta),
            store_size: self.store.len(),
            active_version: active.as_ref().map(|p| p.entry.version),
            update_frequency_hours: self.config.schedule.update_cadence_hours,
        }
    }

    /// Whether `scheduled_update` would retrain at `now`.
    pub fn update_due(&self, now: DateTime<Utc>) -> bool {
        let active = self.registry.active();
        let (last, trained_rows) =
            active.as_ref().map_or((None, 0), |p| (Some(p.entry.trained_at), p.entry.training_count));
        let waited =
            last.map_or(true, |t| now - t >= Duration::hours(i64::from(self.config.schedule.update_cadence_hours)));
        let new_rows = self.store.len().saturating_sub(trained_rows);
        waited && new_rows >= self.config.schedule.min_new_rows.max(1)
    }

    /// Retrain when the cadence has elapsed and enough rows arrived.
    /// A failed retrain leaves the active model in place and raises an
    /// alert.
    pub fn scheduled_update(&self, now: DateTime<Utc>) -> Result<Option<ModelRegistryEntry>> {
        if !self.update_due(now) {
            return Ok(None);
        }
        match self.retrain(now) {
            Ok(entry) => Ok(Some(entry)),
            Err(e) => {
                self.alerts.push(
                    AlertDraft {
                        kind: AlertKind::TrainingFailure,
                        severity: Severity::Critical,
                        record_id: None,
                        message: format!("scheduled retrain failed: {e}"),
                    },
                    now,
                );
                Err(e)
            }
        }
    }

    /// Train the configured spec on the whole store, cross-validate and
    /// publish.
    pub fn retrain(&self, now: DateTime<Utc>) -> Result<ModelRegistryEntry> {
        self.retrain_with(&self.config.spec, now)
    }

    /// As [`retrain`](Self::retrain) with an explicit learner.
    pub fn retrain_with(&self, spec: &RegressorSpec, now: DateTime<Utc>) -> Result<ModelRegistryEntry> {
        let _one_at_a_time = self.training.lock().expect("training lock");
        let watch = Stopwatch::start();
        let snap = self.store.snapshot();
        let records: Vec<MeasurementRecord> = snap.iter().map(|r| (**r).clone()).collect();
        let data = deviation_dataset(&records)?;
        let spec = spec.with_seed(self.config.seed);
        let cv = kfold_cv(&spec, &data, self.config.cv_folds, self.config.seed)?;
        let model = spec.fit(&data)?;
        let minutes = watch.minutes();
        let r2_delta = self.registry.active().map(|p| cv.mean.r2 - p.entry.metrics.r2);
        let artifact = ModelArtifact::new(spec.clone(), &FEATURE_NAMES, data.len(), now, Some(cv.mean), model);
        let entry = self.registry.publish(Candidate {
            spec,
            trained_at: now,
            training_count: snap.len(),
            metrics: cv.mean,
            r2_delta,
            convergence_minutes: minutes,
            artifact,
        });
        self.refresh_detector()?;
        Ok(entry)
    }

    /// Refit the anomaly detector on the current store when it holds at
    /// least 20 millimetre records.
    pub fn refresh_detector(&self) -> Result<()> {
        let records = self.records();
        if records.iter().filter(|r| r.is_linear_mm()).count() < 20 {
            return Ok(());
        }
        let params = IsolationParams { seed: self.config.seed, ..self.config.isolation };
        let det = AnomalyDetector::fit(&records, FeatureMode::Residual, &params, self.config.contamination)?;
        *self.detector.write().expect("detector lock") = Some(Arc::new(det));
        Ok(())
    }

    pub fn what_if(&self, query: &WhatIfQuery) -> Result<WhatIfAnswer> {
        let active = self.registry.active().ok_or_else(|| Error::Unavailable("no active model".into()))?;
        let classes: Vec<GeometryClass> = query.geometry.map_or(GeometryClass::ALL.to_vec(), |g| vec![g]);
        let mut um = 0.0;
        for geometry in &classes {
            let row = FeatureVector {
                nominal: query.nominal_mm,
                device: query.device,
                temperature: query.temperature_c,
                geometry: *geometry,
            }
            .to_row()?;
            um += active.artifact.model.predict(&row)?;
        }
        let um = um / classes.len() as f64;
        let band = query.tolerance_band_mm.unwrap_or(self.config.default_tolerance_band);
        Ok(WhatIfAnswer {
            predicted_deviation_um: um,
            tolerance_band_mm: band,
            verdict: tolerance_check(um / MM_TO_UM, band)?,
            model_version: active.entry.version,
        })
    }
}
