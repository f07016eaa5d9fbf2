//! Regression learners and the cross-validation harness used to compare
//! them on measurement-deviation prediction.
//!
//! Targets are deviations in micrometres. Tree models consume raw
//! features; SVR and MLP standardize with statistics from their own
//! training rows.

pub mod artifact;
pub mod boosting;
pub mod cv;
pub mod ensemble;
pub mod forest;
pub mod linear;
pub mod metrics;
pub mod mlp;
mod standardize;
pub mod svr;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::metrology::{DeviceKind, GeometryClass, MeasurementRecord, MM_TO_UM};

pub use artifact::ModelArtifact;
pub use boosting::{fit_gradient_boosting, BoostingParams, GbModel};
pub use cv::{compare_models, kfold_cv, kfold_indices, CvReport};
pub use ensemble::{ensemble_predict, EnsembleModel};
pub use forest::{fit_random_forest, ForestModel, ForestParams, MaxFeatures};
pub use linear::LinearModel;
pub use metrics::{eval_metrics, EvalMetrics};
pub use mlp::{fit_mlp, Activation, MlpModel, MlpParams};
pub use svr::{fit_svr_linear, SvrModel, SvrParams};
pub use tree::{fit_cart, TreeModel, TreeParams};

/// Row-major feature matrix with one target per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn empty(n_features: usize) -> Self {
        Dataset { n_features, x: Vec::new(), y: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(validation(format!("{} rows but {} targets", rows.len(), targets.len())));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.is_empty() {
            return Err(Error::InsufficientData { what: "dataset", needed: 1, got: 0 });
        }
        let mut x = Vec::with_capacity(rows.len() * n_features);
        for r in rows {
            if r.len() != n_features {
                return Err(Error::SchemaMismatch { expected: n_features, got: r.len() });
            }
            x.extend_from_slice(r);
        }
        if x.iter().chain(targets).any(|v| !v.is_finite()) {
            return Err(validation("features and targets must be finite"));
        }
        Ok(Dataset { n_features, x, y: targets.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.x[i * self.n_features + feature]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks(self.n_features.max(1)).take(self.len())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.n_features);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset { n_features: self.n_features, x, y }
    }
}

pub const FEATURE_NAMES: [&str; 8] = [
    "nominal_mm",
    "device_cmm",
    "temperature_c",
    "geom_cylinder",
    "geom_cube",
    "geom_sphere",
    "geom_turbine_blade",
    "geom_gear_assembly",
];

/// Model input: nominal (mm), device flag (CMM = 1), temperature (C) and
/// a one-hot geometry class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub nominal: f64,
    pub device: DeviceKind,
    pub temperature: f64,
    pub geometry: GeometryClass,
}

impl FeatureVector {
    pub fn from_record(record: &MeasurementRecord) -> Self {
        FeatureVector {
            nominal: record.nominal_value,
            device: record.device,
            temperature: record.temperature,
            geometry: record.geometry_class,
        }
    }

    pub fn to_row(&self) -> Result<Vec<f64>> {
        if !self.nominal.is_finite() || !self.temperature.is_finite() {
            return Err(validation("feature values must be finite"));
        }
        let mut row = vec![0.0; FEATURE_NAMES.len()];
        row[0] = self.nominal;
        row[1] = self.device.indicator();
        row[2] = self.temperature;
        row[3 + self.geometry.index()] = 1.0;
        Ok(row)
    }
}

/// Learning table from records: millimetre features only, target in µm.
pub fn deviation_dataset(records: &[MeasurementRecord]) -> Result<Dataset> {
    let used: Vec<&MeasurementRecord> = records.iter().filter(|r| r.is_linear_mm()).collect();
    let rows = used.iter().map(|r| FeatureVector::from_record(r).to_row()).collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = used.iter().map(|r| r.deviation * MM_TO_UM).collect();
    Dataset::from_rows(&rows, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RegressorSpec {
    /// OLS on nominal, device and temperature.
    Linear,
    RandomForest(ForestParams),
    GradientBoosting(BoostingParams),
    SupportVectorRegression(SvrParams),
    NeuralNetwork(MlpParams),
    /// Unweighted mean of a forest and a boosted model.
    Ensemble {
        rf: ForestParams,
        gb: BoostingParams,
    },
}

impl RegressorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RegressorSpec::Linear => "Linear (OLS)",
            RegressorSpec::RandomForest(_) => "Random Forest (RF)",
            RegressorSpec::GradientBoosting(_) => "Gradient Boosting (GB)",
            RegressorSpec::SupportVectorRegression(_) => "Support Vector Regression",
            RegressorSpec::NeuralNetwork(_) => "Neural Network (MLP)",
            RegressorSpec::Ensemble { .. } => "Ensemble (RF + GB)",
        }
    }

    pub fn default_ensemble() -> Self {
        RegressorSpec::Ensemble { rf: ForestParams::default(), gb: BoostingParams::default() }
    }

    /// The five compared learners with default settings.
    pub fn comparison_set(seed: u64) -> Vec<RegressorSpec> {
        let rf = ForestParams { seed, ..Default::default() };
        let gb = BoostingParams { seed, ..Default::default() };
        vec![
            RegressorSpec::RandomForest(rf),
            RegressorSpec::GradientBoosting(gb),
            RegressorSpec::SupportVectorRegression(SvrParams { seed, ..Default::default() }),
            RegressorSpec::NeuralNetwork(MlpParams { seed, ..Default::default() }),
            RegressorSpec::Ensemble { rf, gb },
        ]
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            RegressorSpec::Linear => RegressorSpec::Linear,
            RegressorSpec::RandomForest(p) => RegressorSpec::RandomForest(ForestParams { seed, ..*p }),
            RegressorSpec::GradientBoosting(p) => RegressorSpec::GradientBoosting(BoostingParams { seed, ..*p }),
            RegressorSpec::SupportVectorRegression(p) => {
                RegressorSpec::SupportVectorRegression(SvrParams { seed, ..*p })
            }
            RegressorSpec::NeuralNetwork(p) => RegressorSpec::NeuralNetwork(MlpParams { seed, ..*p }),
            RegressorSpec::Ensemble { rf, gb } => {
                RegressorSpec::Ensemble { rf: ForestParams { seed, ..*rf }, gb: BoostingParams { seed, ..*gb } }
            }
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<TrainedModel> {
        Ok(match self {
            RegressorSpec::Linear => TrainedModel::Linear(LinearModel::fit(data)?),
            RegressorSpec::RandomForest(p) => TrainedModel::RandomForest(fit_random_forest(data, p)?),
            RegressorSpec::GradientBoosting(p) => TrainedModel::GradientBoosting(fit_gradient_boosting(data, p)?),
            RegressorSpec::SupportVectorRegression(p) => TrainedModel::Svr(fit_svr_linear(data, p)?),
            RegressorSpec::NeuralNetwork(p) => TrainedModel::Mlp(fit_mlp(data, p)?),
            RegressorSpec::Ensemble { rf, gb } => TrainedModel::Ensemble(EnsembleModel::new(
                fit_random_forest(data, rf)?,
                fit_gradient_boosting(data, gb)?,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum TrainedModel {
    Linear(LinearModel),
    RandomForest(ForestModel),
    GradientBoosting(GbModel),
    Svr(SvrModel),
    Mlp(MlpModel),
    Ensemble(EnsembleModel),
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Linear(m) => m.n_features,
            TrainedModel::RandomForest(m) => m.n_features,
            TrainedModel::GradientBoosting(m) => m.n_features,
            TrainedModel::Svr(m) => m.n_features(),
            TrainedModel::Mlp(m) => m.n_features(),
            TrainedModel::Ensemble(m) => m.n_features(),
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::SchemaMismatch { expected: self.n_features(), got: row.len() });
        }
        Ok(match self {
            TrainedModel::Linear(m) => m.predict_row(row),
            TrainedModel::RandomForest(m) => m.predict_row(row),
            TrainedModel::GradientBoosting(m) => m.predict_row(row),
            TrainedModel::Svr(m) => m.predict_row(row),
            TrainedModel::Mlp(m) => m.predict_row(row),
            TrainedModel::Ensemble(m) => m.predict_row(row),
        })
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|r| self.predict(r)).collect()
    }
}

/// Stable 64-bit mixing (SplitMix64 finalizer).
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a training row's content (features and target) under a salt.
pub(crate) fn row_hash(salt: u64, row: &[f64], target: f64) -> u64 {
    row.iter().chain(std::iter::once(&target)).fold(mix64(salt), |h, v| mix64(h ^ v.to_bits()))
}
