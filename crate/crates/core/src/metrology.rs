//! Shared measurement vocabulary: parts, features, devices, measurement
//! records and tolerance verdicts.
//!
//! Every length is carried in millimetres; angles in degrees. Micrometres
//! only appear at reporting boundaries (see [`MM_TO_UM`]).

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Millimetre to micrometre factor, applied once when reporting.
pub const MM_TO_UM: f64 = 1000.0;

/// Maximum tolerated disagreement between a stored deviation and
/// `measured - nominal`.
pub const DEVIATION_EPS_MM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceKind {
    #[serde(rename = "CMM", alias = "cmm")]
    Cmm,
    #[serde(rename = "FaroArm", alias = "FARO", alias = "faro")]
    FaroArm,
}

impl DeviceKind {
    pub const ALL: [DeviceKind; 2] = [DeviceKind::Cmm, DeviceKind::FaroArm];

    /// Regression coding: CMM = 1, FARO Arm = 0.
    pub fn indicator(self) -> f64 {
        match self {
            DeviceKind::Cmm => 1.0,
            DeviceKind::FaroArm => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Cmm => "CMM",
            DeviceKind::FaroArm => "FaroArm",
        }
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DeviceKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cmm" => Ok(DeviceKind::Cmm),
            "faroarm" | "faro" | "faro_arm" => Ok(DeviceKind::FaroArm),
            other => Err(validation(format!("unknown device `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeometryClass {
    Cylinder,
    Cube,
    Sphere,
    TurbineBlade,
    GearAssembly,
}

impl GeometryClass {
    pub const ALL: [GeometryClass; 5] = [
        GeometryClass::Cylinder,
        GeometryClass::Cube,
        GeometryClass::Sphere,
        GeometryClass::TurbineBlade,
        GeometryClass::GearAssembly,
    ];

    /// Position in the one-hot encoding.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn permits(self, kind: FeatureKind) -> bool {
        use FeatureKind::*;
        match self {
            GeometryClass::Cylinder => {
                matches!(kind, Length | Diameter | Angle | Flatness | Cylindricity)
            }
            GeometryClass::Cube => matches!(kind, Length | Width | Angle | Flatness),
            GeometryClass::Sphere => matches!(kind, Diameter),
            GeometryClass::TurbineBlade => matches!(kind, Length | Width | Angle | Flatness),
            GeometryClass::GearAssembly => {
                matches!(kind, Length | Width | Diameter | Angle | Cylindricity)
            }
        }
    }
}

impl std::str::FromStr for GeometryClass {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        GeometryClass::ALL
            .into_iter()
            .find(|g| format!("{g:?}").to_ascii_lowercase() == norm)
            .ok_or_else(|| validation(format!("unknown geometry class `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    Length,
    Width,
    Diameter,
    Angle,
    Flatness,
    Cylindricity,
}

impl FeatureKind {
    /// Length-like features whose nominal must be strictly positive.
    pub fn is_size(self) -> bool {
        matches!(self, FeatureKind::Length | FeatureKind::Width | FeatureKind::Diameter)
    }

    /// Angles are in degrees and stay out of pooled millimetre analyses.
    pub fn is_angular(self) -> bool {
        self == FeatureKind::Angle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFeature {
    pub feature_id: String,
    pub kind: FeatureKind,
    /// Millimetres, or degrees for [`FeatureKind::Angle`].
    pub nominal_value: f64,
    /// Symmetric half-width, same unit as `nominal_value`.
    pub tolerance_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub part_id: String,
    pub description: String,
    pub geometry_class: GeometryClass,
    pub features: Vec<DimensionFeature>,
}

impl Part {
    pub fn validate(&self) -> Result<()> {
        if self.part_id.is_empty() {
            return Err(validation("part_id must not be empty"));
        }
        for f in &self.features {
            if !self.geometry_class.permits(f.kind) {
                return Err(validation(format!(
                    "feature {} of kind {:?} not permitted on {:?}",
                    f.feature_id, f.kind, self.geometry_class
                )));
            }
            if !(f.tolerance_band > 0.0) {
                return Err(validation(format!("feature {} has non-positive tolerance band", f.feature_id)));
            }
            if f.kind.is_size() && !(f.nominal_value > 0.0) {
                return Err(validation(format!("size feature {} needs a positive nominal", f.feature_id)));
            }
        }
        Ok(())
    }
}

/// Checks part-id uniqueness and every part's own invariants.
pub fn validate_catalog(parts: &[Part]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for p in parts {
        p.validate()?;
        if !seen.insert(p.part_id.as_str()) {
            return Err(validation(format!("duplicate part_id {}", p.part_id)));
        }
    }
    Ok(())
}

/// One physical measurement event.
///
/// Field names on the wire carry their unit. Unknown fields found when
/// deserializing are kept in `extra` and written back out unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub record_id: String,
    pub part_id: String,
    #[serde(default)]
    pub part_description: String,
    pub feature_id: String,
    pub feature_kind: FeatureKind,
    pub geometry_class: GeometryClass,
    pub device: DeviceKind,
    #[serde(rename = "temperature_c")]
    pub temperature: f64,
    #[serde(rename = "humidity_pct")]
    pub humidity: f64,
    #[serde(rename = "nominal_mm")]
    pub nominal_value: f64,
    #[serde(rename = "measured_mm")]
    pub measured_value: f64,
    #[serde(rename = "deviation_mm")]
    pub deviation: f64,
    #[serde(rename = "tolerance_band_mm")]
    pub tolerance_band: f64,
    #[serde(rename = "timestamp_utc")]
    pub timestamp: DateTime<Utc>,
    pub operator_id: String,
    #[serde(rename = "duration_s")]
    pub duration: u32,
    #[serde(rename = "repetition")]
    pub repetition_index: u32,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        if self.record_id.is_empty() {
            return Err(validation("record_id must not be empty"));
        }
        let numbers = [
            ("temperature_c", self.temperature),
            ("humidity_pct", self.humidity),
            ("nominal_mm", self.nominal_value),
            ("measured_mm", self.measured_value),
            ("deviation_mm", self.deviation),
            ("tolerance_band_mm", self.tolerance_band),
        ];
        if let Some((name, _)) = numbers.iter().find(|(_, v)| !v.is_finite()) {
            return Err(validation(format!("{name} is not finite")));
        }
        if !(0.0..=100.0).contains(&self.humidity) {
            return Err(validation(format!("humidity {} outside [0, 100]", self.humidity)));
        }
        if self.tolerance_band <= 0.0 {
            return Err(validation("tolerance band must be positive"));
        }
        if self.repetition_index < 1 {
            return Err(validation("repetition index starts at 1"));
        }
        if self.feature_kind.is_size() && self.nominal_value <= 0.0 {
            return Err(validation("size features need a positive nominal"));
        }
        let expected = self.measured_value - self.nominal_value;
        if (self.deviation - expected).abs() > DEVIATION_EPS_MM {
            return Err(validation(format!(
                "deviation {} does not equal measured - nominal ({expected})",
                self.deviation
            )));
        }
        Ok(())
    }

    pub fn verdict(&self) -> Result<ToleranceVerdict> {
        tolerance_check(self.deviation, self.tolerance_band)
    }

    /// Whether the record belongs in pooled millimetre analyses.
    pub fn is_linear_mm(&self) -> bool {
        !self.feature_kind.is_angular()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToleranceStatus {
    InTolerance,
    OutOfTolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceVerdict {
    pub status: ToleranceStatus,
    /// Distance to the nearer tolerance limit; negative when out.
    pub margin: f64,
}

impl ToleranceVerdict {
    pub fn in_tolerance(&self) -> bool {
        self.status == ToleranceStatus::InTolerance
    }
}

pub fn compute_deviation(measured: f64, nominal: f64) -> Result<f64> {
    if !measured.is_finite() || !nominal.is_finite() {
        return Err(validation("measured and nominal values must be finite"));
    }
    Ok(measured - nominal)
}

/// Inclusive at the boundary: `|deviation| == band` is in tolerance.
pub fn tolerance_check(deviation: f64, band: f64) -> Result<ToleranceVerdict> {
    if !(band > 0.0) || !band.is_finite() {
        return Err(validation(format!("tolerance band must be positive, got {band}")));
    }
    if !deviation.is_finite() {
        return Err(validation("deviation must be finite"));
    }
    let status = if deviation.abs() <= band { ToleranceStatus::InTolerance } else { ToleranceStatus::OutOfTolerance };
    Ok(ToleranceVerdict { status, margin: band - deviation.abs() })
}

/// CMM specification envelope half-width in micrometres, `1.5 + L/333`.
pub fn cmm_spec_accuracy(length_mm: f64) -> Result<f64> {
    if !(length_mm >= 0.0) || !length_mm.is_finite() {
        return Err(validation(format!("length must be finite and non-negative, got {length_mm}")));
    }
    Ok(1.5 + length_mm / 333.0)
}

/// FARO Arm specification envelope half-width in millimetres.
pub fn faro_spec_accuracy() -> f64 {
    0.036
}

/// Spec envelope for a device at a given length, in millimetres.
pub fn spec_accuracy_mm(device: DeviceKind, length_mm: f64) -> Result<f64> {
    match device {
        DeviceKind::Cmm => Ok(cmm_spec_accuracy(length_mm)? / MM_TO_UM),
        DeviceKind::FaroArm => Ok(faro_spec_accuracy()),
    }
}

/// Default tolerance band: three times the device-pooled noise sigma,
/// rounded to the nearest 0.05 mm step (never below one step).
pub fn default_tolerance_band(noise_sigmas: &[f64]) -> f64 {
    const STEP: f64 = 0.05;
    if noise_sigmas.is_empty() {
        return STEP;
    }
    let pooled = (noise_sigmas.iter().map(|s| s * s).sum::<f64>() / noise_sigmas.len() as f64).sqrt();
    ((3.0 * pooled / STEP).round().max(1.0)) * STEP
}

type CatalogRow = (&'static str, &'static str, GeometryClass, [(FeatureKind, f64); 2]);

/// The 20-part reference catalog: four parts per geometry class, two size
/// features each, nominals spanning 5 to 500 mm.
pub fn reference_catalog(tolerance_band: f64) -> Vec<Part> {
    use FeatureKind::*;
    use GeometryClass::*;
    let table: [CatalogRow; 20] = [
        ("CYL-01", "Turned pin", Cylinder, [(Diameter, 12.0), (Length, 40.0)]),
        ("CYL-02", "Bearing sleeve", Cylinder, [(Diameter, 25.0), (Length, 80.0)]),
        ("CYL-03", "Hydraulic piston", Cylinder, [(Diameter, 50.0), (Length, 150.0)]),
        ("CYL-04", "Drive shaft", Cylinder, [(Diameter, 100.0), (Length, 300.0)]),
        ("CUB-01", "Gauge block", Cube, [(Length, 10.0), (Width, 8.0)]),
        ("CUB-02", "Mounting block", Cube, [(Length, 30.0), (Width, 25.0)]),
        ("CUB-03", "Fixture base", Cube, [(Length, 60.0), (Width, 55.0)]),
        ("CUB-04", "Machined housing", Cube, [(Length, 120.0), (Width, 110.0)]),
        ("SPH-01", "Reference ball", Sphere, [(Diameter, 5.0), (Diameter, 5.0)]),
        ("SPH-02", "Ball joint", Sphere, [(Diameter, 20.0), (Diameter, 20.0)]),
        ("SPH-03", "Valve ball", Sphere, [(Diameter, 40.0), (Diameter, 40.0)]),
        ("SPH-04", "Calibration sphere", Sphere, [(Diameter, 75.0), (Diameter, 75.0)]),
        ("TB-01", "Compressor blade", TurbineBlade, [(Length, 80.0), (Width, 25.0)]),
        ("TB-02", "Fan blade", TurbineBlade, [(Length, 140.0), (Width, 40.0)]),
        ("TB-03", "Turbine blade", TurbineBlade, [(Length, 220.0), (Width, 60.0)]),
        ("TB-04", "Stator vane", TurbineBlade, [(Length, 350.0), (Width, 90.0)]),
        ("GA-01", "Pinion gear", GearAssembly, [(Diameter, 48.0), (Width, 12.0)]),
        ("GA-02", "Spur gear", GearAssembly, [(Diameter, 96.0), (Width, 20.0)]),
        ("GA-03", "Helical gear", GearAssembly, [(Diameter, 200.0), (Width, 35.0)]),
        ("GA-04", "Ring gear", GearAssembly, [(Diameter, 500.0), (Width, 60.0)]),
    ];
    table
        .into_iter()
        .map(|(id, desc, geometry, feats)| Part {
            part_id: id.to_string(),
            description: desc.to_string(),
            geometry_class: geometry,
            features: feats
                .into_iter()
                .enumerate()
                .map(|(i, (kind, nominal))| DimensionFeature {
                    feature_id: format!("{id}-F{}", i + 1),
                    kind,
                    nominal_value: nominal,
                    tolerance_band,
                })
                .collect(),
        })
        .collect()
}
