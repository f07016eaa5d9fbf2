use serde::{Deserialize, Serialize};

use super::boosting::GbModel;
use super::forest::ForestModel;
use crate::error::{Error, Result};

/// Unweighted mean of a random forest and a boosted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub rf: ForestModel,
    pub gb: GbModel,
}

impl EnsembleModel {
    pub fn new(rf: ForestModel, gb: GbModel) -> Result<Self> {
        if rf.n_features != gb.n_features {
            return Err(Error::SchemaMismatch { expected: rf.n_features, got: gb.n_features });
        }
        Ok(EnsembleModel { rf, gb })
    }

    pub fn n_features(&self) -> usize {
        self.rf.n_features
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        average(self.rf.predict_row(row), self.gb.predict_row(row))
    }
}

pub(crate) fn average(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

pub fn ensemble_predict(rf: &ForestModel, gb: &GbModel, x: &[f64]) -> Result<f64> {
    if rf.n_features != gb.n_features {
        return Err(Error::SchemaMismatch { expected: rf.n_features, got: gb.n_features });
    }
    if x.len() != rf.n_features {
        return Err(Error::SchemaMismatch { expected: rf.n_features, got: x.len() });
    }
    Ok(average(rf.predict_row(x), gb.predict_row(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::tree::{Node, TreeModel};

    fn constant_forest(v: f64, p: usize) -> ForestModel {
        ForestModel { n_features: p, trees: vec![TreeModel { n_features: p, nodes: vec![Node::Leaf { value: v }] }] }
    }

    fn constant_gb(v: f64, p: usize) -> GbModel {
        GbModel { n_features: p, init: v, learning_rate: 0.1, trees: vec![], train_mse: vec![] }
    }

    #[test]
    fn averages_the_two_predictions() {
        assert_eq!(ensemble_predict(&constant_forest(1.0, 2), &constant_gb(2.0, 2), &[0.0, 0.0]).unwrap(), 1.5);
        assert_eq!(ensemble_predict(&constant_forest(7.0, 2), &constant_gb(7.0, 2), &[0.0, 0.0]).unwrap(), 7.0);
    }

    #[test]
    fn schema_mismatch() {
        assert!(ensemble_predict(&constant_forest(1.0, 2), &constant_gb(2.0, 3), &[0.0, 0.0]).is_err());
        assert!(EnsembleModel::new(constant_forest(1.0, 2), constant_gb(2.0, 3)).is_err());
        assert!(ensemble_predict(&constant_forest(1.0, 2), &constant_gb(2.0, 2), &[0.0]).is_err());
    }
}
