//! Storage formats, the HTTP service and the command line for the
//! metrology twin.

pub mod cli;
pub mod format;
pub mod service;
pub mod store;

use metrotwin_core::ml::{BoostingParams, ForestParams, MlpParams, RegressorSpec, SvrParams};
use metrotwin_core::Error;

/// Learner by short name, with default hyperparameters.
pub fn model_spec(name: &str) -> Result<RegressorSpec, Error> {
    Ok(match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "linear" | "ols" => RegressorSpec::Linear,
        "rf" | "random-forest" => RegressorSpec::RandomForest(ForestParams::default()),
        "gb" | "gradient-boosting" => RegressorSpec::GradientBoosting(BoostingParams::default()),
        "svr" => RegressorSpec::SupportVectorRegression(SvrParams::default()),
        "mlp" | "neural-network" => RegressorSpec::NeuralNetwork(MlpParams::default()),
        "ensemble" => RegressorSpec::default_ensemble(),
        other => return Err(Error::Validation(format!("unknown model `{other}`"))),
    })
}
