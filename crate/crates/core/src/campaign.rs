//! Factorial measurement campaigns and synthetic data generation.
//!
//! A campaign crosses every part feature with both devices, each
//! temperature set-point and a number of repetitions. Deviations follow a
//! linear device error model
//!
//! ```text
//! deviation = b0 + b1 * nominal + b2 * [device = CMM] + b3 * temperature + noise
//! ```
//!
//! with Gaussian noise whose sigma depends on the device.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::metrology::{
    reference_catalog, validate_catalog, DeviceKind, DimensionFeature, FeatureKind, GeometryClass, MeasurementRecord,
    Part,
};

/// Annotation key used to carry injected-anomaly ground truth on records.
pub const ANOMALY_ANNOTATION: &str = "injected_anomaly_mm";

pub const REFERENCE_TEMPERATURES: [f64; 2] = [20.0, 30.0];
pub const REFERENCE_REPETITIONS: u32 = 2;
pub const DEFAULT_SOAK_HOURS: f64 = 4.0;
/// Half-width of the temperature control band around each set-point.
pub const TEMPERATURE_JITTER: f64 = 0.5;
pub const HUMIDITY_RANGE: (f64, f64) = (45.0, 55.0);

/// Linear error model and noise level of one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub kind: DeviceKind,
    /// mm
    pub noise_sigma: f64,
    /// mm
    pub bias_intercept: f64,
    /// mm per mm of nominal
    pub nominal_slope: f64,
    /// mm, applied to CMM readings only
    pub device_offset: f64,
    /// mm per degree Celsius
    pub temp_slope: f64,
}

impl DeviceModel {
    /// Reference coefficients (-0.0152, 0.00015, 0.0112, 0.00078) and the
    /// per-device standard deviations 0.0057 mm (CMM) / 0.0183 mm (FARO).
    pub fn reference(kind: DeviceKind) -> Self {
        DeviceModel {
            kind,
            noise_sigma: match kind {
                DeviceKind::Cmm => 0.0057,
                DeviceKind::FaroArm => 0.0183,
            },
            bias_intercept: -0.0152,
            nominal_slope: 0.00015,
            device_offset: 0.0112,
            temp_slope: 0.00078,
        }
    }

    pub fn reference_pair() -> Vec<DeviceModel> {
        DeviceKind::ALL.iter().map(|&k| DeviceModel::reference(k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(validation(format!("{} noise sigma must be finite and non-negative", self.kind)));
        }
        Ok(())
    }

    /// Noise-free deviation for a reading, in mm.
    pub fn expected_deviation(&self, nominal: f64, temperature: f64) -> f64 {
        self.bias_intercept
            + self.nominal_slope * nominal
            + self.device_offset * self.kind.indicator()
            + self.temp_slope * temperature
    }
}

/// One planned measurement: a feature read on a device at a set-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSlot {
    pub slot_index: usize,
    pub part_id: String,
    pub part_description: String,
    pub geometry_class: GeometryClass,
    pub feature: DimensionFeature,
    pub device: DeviceKind,
    pub temperature_setpoint: f64,
    pub repetition: u32,
    pub scheduled_at: DateTime<Utc>,
    pub operator_id: String,
    pub duration_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignDesign {
    pub parts: Vec<Part>,
    pub devices: Vec<DeviceKind>,
    pub temperatures: Vec<f64>,
    pub repetitions: u32,
    pub soak_hours: f64,
    /// Slots in Cartesian order (part, feature, device, temperature, repetition).
    pub slots: Vec<MeasurementSlot>,
    /// Permutation of slot indices giving the randomized run order.
    pub execution_order: Vec<usize>,
}

impl CampaignDesign {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Slots in execution order.
    pub fn ordered_slots(&self) -> impl Iterator<Item = &MeasurementSlot> {
        self.execution_order.iter().map(move |&i| &self.slots[i])
    }
}

/// Fixed campaign start used by the generator, so identical seeds give
/// identical timestamps.
pub fn campaign_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 8, 7, 0, 0).unwrap()
}

/// Build the full factorial design and a seeded run order.
///
/// Runs are grouped into temperature blocks (each preceded by a soak
/// period) whose order is shuffled, and slots are shuffled within a block.
pub fn build_design(
    part_catalog: &[Part],
    temperatures: &[f64],
    repetitions: u32,
    seed: u64,
) -> Result<CampaignDesign> {
    build_design_at(part_catalog, temperatures, repetitions, seed, campaign_epoch())
}

pub fn build_design_at(
    part_catalog: &[Part],
    temperatures: &[f64],
    repetitions: u32,
    seed: u64,
    start: DateTime<Utc>,
) -> Result<CampaignDesign> {
    if part_catalog.is_empty() {
        return Err(validation("part catalog is empty"));
    }
    if temperatures.is_empty() {
        return Err(validation("at least one temperature set-point is required"));
    }
    if temperatures.iter().any(|t| !t.is_finite()) {
        return Err(validation("temperature set-points must be finite"));
    }
    if temperatures.iter().enumerate().any(|(i, t)| temperatures[..i].contains(t)) {
        return Err(validation("temperature set-points must be distinct"));
    }
    if repetitions < 1 {
        return Err(validation("repetitions must be at least 1"));
    }
    validate_catalog(part_catalog)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots = Vec::new();
    for part in part_catalog {
        for feature in &part.features {
            for &device in &DeviceKind::ALL {
                for &temperature in temperatures {
                    for repetition in 1..=repetitions {
                        let duration_s = match device {
                            DeviceKind::Cmm => rng.random_range(240..=420),
                            DeviceKind::FaroArm => rng.random_range(90..=180),
                        };
                        slots.push(MeasurementSlot {
                            slot_index: slots.len(),
                            part_id: part.part_id.clone(),
                            part_description: part.description.clone(),
                            geometry_class: part.geometry_class,
                            feature: feature.clone(),
                            device,
                            temperature_setpoint: temperature,
                            repetition,
                            scheduled_at: start,
                            operator_id: format!("OP-{:02}", rng.random_range(1..=3)),
                            duration_s,
                        });
                    }
                }
            }
        }
    }

    let mut blocks: Vec<usize> = (0..temperatures.len()).collect();
    blocks.shuffle(&mut rng);
    let mut execution_order = Vec::with_capacity(slots.len());
    let soak = Duration::seconds((DEFAULT_SOAK_HOURS * 3600.0).round() as i64);
    let mut clock = start;
    for block in blocks {
        let target = temperatures[block];
        let mut members: Vec<usize> =
            slots.iter().filter(|s| s.temperature_setpoint == target).map(|s| s.slot_index).collect();
        members.shuffle(&mut rng);
        clock += soak;
        for idx in members {
            slots[idx].scheduled_at = clock;
            clock += Duration::seconds(i64::from(slots[idx].duration_s));
            execution_order.push(idx);
        }
    }

    Ok(CampaignDesign {
        parts: part_catalog.to_vec(),
        devices: DeviceKind::ALL.to_vec(),
        temperatures: temperatures.to_vec(),
        repetitions,
        soak_hours: DEFAULT_SOAK_HOURS,
        slots,
        execution_order,
    })
}

/// Synthesize one reading for a slot.
pub fn generate_measurement<R: Rng + ?Sized>(
    slot: &MeasurementSlot,
    model: &DeviceModel,
    record_id: String,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    model.validate()?;
    if model.kind != slot.device {
        return Err(Error::Configuration(format!("device model for {} used on a {} slot", model.kind, slot.device)));
    }
    let temperature = slot.temperature_setpoint + rng.random_range(-TEMPERATURE_JITTER..TEMPERATURE_JITTER);
    let humidity = rng.random_range(HUMIDITY_RANGE.0..HUMIDITY_RANGE.1);
    let noise = Normal::new(0.0, model.noise_sigma).map_err(|e| validation(e.to_string()))?.sample(rng);
    let nominal = slot.feature.nominal_value;
    let measured = nominal + model.expected_deviation(nominal, temperature) + noise;
    let record = MeasurementRecord {
        record_id,
        part_id: slot.part_id.clone(),
        part_description: slot.part_description.clone(),
        feature_id: slot.feature.feature_id.clone(),
        feature_kind: slot.feature.kind,
        geometry_class: slot.geometry_class,
        device: slot.device,
        temperature,
        humidity,
        nominal_value: nominal,
        measured_value: measured,
        deviation: measured - nominal,
        tolerance_band: slot.feature.tolerance_band,
        timestamp: slot.scheduled_at,
        operator_id: slot.operator_id.clone(),
        duration: slot.duration_s,
        repetition_index: slot.repetition,
        extra: Default::default(),
    };
    Ok(record)
}

fn model_for(models: &[DeviceModel], kind: DeviceKind) -> Result<&DeviceModel> {
    models.iter().find(|m| m.kind == kind).ok_or_else(|| Error::Configuration(format!("no device model for {kind}")))
}

/// One record per slot, in execution order. Record ids are
/// `C<seed>-<position>`, so they sort in run order.
pub fn generate_campaign(
    design: &CampaignDesign,
    device_models: &[DeviceModel],
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    for kind in &design.devices {
        model_for(device_models, *kind)?.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    design
        .ordered_slots()
        .enumerate()
        .map(|(pos, slot)| {
            let model = model_for(device_models, slot.device)?;
            generate_measurement(slot, model, format!("C{seed:05}-{pos:05}"), &mut rng)
        })
        .collect()
}

/// 20 parts x 2 features x 2 devices x 2 temperatures x 2 repetitions.
pub fn reference_campaign(seed: u64) -> Result<Vec<MeasurementRecord>> {
    let models = DeviceModel::reference_pair();
    let band = crate::metrology::default_tolerance_band(&models.iter().map(|m| m.noise_sigma).collect::<Vec<_>>());
    let design = build_design(&reference_catalog(band), &REFERENCE_TEMPERATURES, REFERENCE_REPETITIONS, seed)?;
    generate_campaign(&design, &models, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyLabel {
    pub record_id: String,
    pub is_anomaly: bool,
    /// mm; zero for untouched records.
    pub injected_offset: f64,
}

/// Shift `round(contamination * n)` uniformly chosen records by a random
/// sign times `k * sigma`, with `k ~ U[4, 8]` and sigma the device noise.
pub fn inject_anomalies(
    records: &[MeasurementRecord],
    device_models: &[DeviceModel],
    contamination: f64,
    seed: u64,
) -> Result<(Vec<MeasurementRecord>, Vec<AnomalyLabel>)> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err(validation(format!("contamination must lie in (0, 0.5), got {contamination}")));
    }
    let n = records.len();
    let count = (contamination * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(17));
    let chosen = rand::seq::index::sample(&mut rng, n, count.min(n));

    let mut out = records.to_vec();
    let mut labels: Vec<AnomalyLabel> = records
        .iter()
        .map(|r| AnomalyLabel { record_id: r.record_id.clone(), is_anomaly: false, injected_offset: 0.0 })
        .collect();
    let mut picks: Vec<usize> = chosen.into_iter().collect();
    picks.sort_unstable();
    for i in picks {
        let sigma = model_for(device_models, out[i].device)?.noise_sigma;
        let k: f64 = rng.random_range(4.0..=8.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let offset = sign * k * sigma;
        let rec = &mut out[i];
        rec.measured_value += offset;
        rec.deviation = rec.measured_value - rec.nominal_value;
        labels[i].is_anomaly = true;
        labels[i].injected_offset = offset;
    }
    Ok((out, labels))
}

/// Write injected offsets onto the records themselves so ground truth
/// travels with the data through files and the service.
pub fn annotate_labels(records: &mut [MeasurementRecord], labels: &[AnomalyLabel]) {
    let by_id: std::collections::HashMap<&str, &AnomalyLabel> =
        labels.iter().map(|l| (l.record_id.as_str(), l)).collect();
    for rec in records.iter_mut() {
        if let Some(label) = by_id.get(rec.record_id.as_str()) {
            rec.extra.insert(ANOMALY_ANNOTATION.into(), serde_json::json!(label.injected_offset));
        }
    }
}

/// Recover labels from annotated records; `None` unless every record
/// carries an annotation.
pub fn labels_from_annotations(records: &[MeasurementRecord]) -> Option<Vec<AnomalyLabel>> {
    records
        .iter()
        .map(|r| {
            let offset = r.extra.get(ANOMALY_ANNOTATION)?.as_f64()?;
            Some(AnomalyLabel { record_id: r.record_id.clone(), is_anomaly: offset != 0.0, injected_offset: offset })
        })
        .collect()
}

/// Only the linear-millimetre features, for pooled analyses.
pub fn linear_mm_records(records: &[MeasurementRecord]) -> Vec<MeasurementRecord> {
    records.iter().filter(|r| r.is_linear_mm()).cloned().collect()
}

/// True when `kind` would be dropped from pooled millimetre analyses.
pub fn excluded_from_pooling(kind: FeatureKind) -> bool {
    kind.is_angular()
}
