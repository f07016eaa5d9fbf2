//! Versioned JSON document wrapping a trained model.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::metrics::EvalMetrics;
use super::{RegressorSpec, TrainedModel};
use crate::error::{Error, Result};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub spec: RegressorSpec,
    pub feature_names: Vec<String>,
    pub trained_rows: usize,
    pub trained_at: DateTime<Utc>,
    pub cv: Option<EvalMetrics>,
    pub model: TrainedModel,
}

impl ModelArtifact {
    pub fn new(
        spec: RegressorSpec,
        feature_names: &[&str],
        trained_rows: usize,
        trained_at: DateTime<Utc>,
        cv: Option<EvalMetrics>,
        model: TrainedModel,
    ) -> Self {
        ModelArtifact {
            format_version: ARTIFACT_FORMAT_VERSION,
            spec,
            feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
            trained_rows,
            trained_at,
            cv,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let art: ModelArtifact =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("model artifact: {e}")))?;
        if art.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(Error::Configuration(format!(
                "model artifact format {} not supported (expected {ARTIFACT_FORMAT_VERSION})",
                art.format_version
            )));
        }
        if art.feature_names.len() != art.model.n_features() {
            return Err(Error::SchemaMismatch { expected: art.model.n_features(), got: art.feature_names.len() });
        }
        Ok(art)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::reference_campaign;
    use crate::ml::{deviation_dataset, BoostingParams, ForestParams, MlpParams, SvrParams, FEATURE_NAMES};

    #[test]
    fn every_model_kind_round_trips_bit_exactly() {
        let data = deviation_dataset(&reference_campaign(2).unwrap()).unwrap();
        let rf = ForestParams { n_trees: 5, ..Default::default() };
        let gb = BoostingParams { n_rounds: 10, ..Default::default() };
        let specs = [
            RegressorSpec::Linear,
            RegressorSpec::RandomForest(rf),
            RegressorSpec::GradientBoosting(gb),
            RegressorSpec::SupportVectorRegression(SvrParams { epochs: 5, ..Default::default() }),
            RegressorSpec::NeuralNetwork(MlpParams { epochs: 5, ..Default::default() }),
            RegressorSpec::Ensemble { rf, gb },
        ];
        let at = "2024-03-01T00:00:00Z".parse().unwrap();
        for spec in specs {
            let model = spec.fit(&data).unwrap();
            let art = ModelArtifact::new(spec, &FEATURE_NAMES, data.len(), at, None, model);
            let back = ModelArtifact::from_json(&art.to_json()).unwrap();
            assert_eq!(back, art);
            let row = data.row(7);
            assert_eq!(back.model.predict(row).unwrap().to_bits(), art.model.predict(row).unwrap().to_bits());
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let data = deviation_dataset(&reference_campaign(2).unwrap()).unwrap();
        let model = RegressorSpec::Linear.fit(&data).unwrap();
        let mut art = ModelArtifact::new(RegressorSpec::Linear, &FEATURE_NAMES, 1, Utc::now(), None, model);
        art.format_version = 99;
        assert!(matches!(ModelArtifact::from_json(&art.to_json()), Err(Error::Configuration(_))));
    }
}
