use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::{EvalMetrics, ModelArtifact, RegressorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelStatus {
    Active,
    Archived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub version: u64,
    pub spec: RegressorSpec,
    pub trained_at: DateTime<Utc>,
    pub training_count: usize,
    /// Cross-validated on the rows it was trained with.
    pub metrics: EvalMetrics,
    pub status: ModelStatus,
    /// CV R² minus that of the previously active entry.
    pub r2_delta: Option<f64>,
    /// Wall-clock training time, in minutes.
    pub convergence_minutes: f64,
}

/// An entry together with its model, published as one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedModel {
    pub entry: ModelRegistryEntry,
    pub artifact: ModelArtifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrySnapshot {
    pub entries: Vec<ModelRegistryEntry>,
    pub active_artifact: Option<ModelArtifact>,
}

#[derive(Debug, Default)]
pub struct ModelRegistry {
    state: RwLock<State>,
}

#[derive(Debug, Default)]
struct State {
    entries: Vec<ModelRegistryEntry>,
    active: Option<Arc<PublishedModel>>,
}

/// Fields of a new entry; version and status are assigned on publish.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub spec: RegressorSpec,
    pub trained_at: DateTime<Utc>,
    pub training_count: usize,
    pub metrics: EvalMetrics,
    pub r2_delta: Option<f64>,
    pub convergence_minutes: f64,
    pub artifact: ModelArtifact,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn restore(snapshot: RegistrySnapshot) -> Result<Self> {
        let actives: Vec<&ModelRegistryEntry> =
            snapshot.entries.iter().filter(|e| e.status == ModelStatus::Active).collect();
        if actives.len() > 1 {
            return Err(Error::Validation("registry has more than one active entry".into()));
        }
        if snapshot.entries.windows(2).any(|w| w[1].version <= w[0].version) {
            return Err(Error::Validation("registry versions must increase".into()));
        }
        let active = match (actives.first(), snapshot.active_artifact) {
            (Some(e), Some(a)) => Some(Arc::new(PublishedModel { entry: (*e).clone(), artifact: a })),
            (None, None) => None,
            _ => return Err(Error::Validation("active entry and artifact must be stored together".into())),
        };
        Ok(ModelRegistry { state: RwLock::new(State { entries: snapshot.entries, active }) })
    }

    pub fn snapshot(&self) -> RegistrySnapshot {
        let s = self.state.read().expect("registry lock");
        RegistrySnapshot { entries: s.entries.clone(), active_artifact: s.active.as_ref().map(|p| p.artifact.clone()) }
    }

    pub fn active(&self) -> Option<Arc<PublishedModel>> {
        self.state.read().expect("registry lock").active.clone()
    }

    pub fn entries(&self) -> Vec<ModelRegistryEntry> {
        self.state.read().expect("registry lock").entries.clone()
    }

    /// Archive the current active entry and make `candidate` active, in
    /// one step visible to readers.
    pub fn publish(&self, candidate: Candidate) -> ModelRegistryEntry {
        let mut s = self.state.write().expect("registry lock");
        let version = s.entries.last().map_or(1, |e| e.version + 1);
        for e in s.entries.iter_mut().filter(|e| e.status == ModelStatus::Active) {
            e.status = ModelStatus::Archived;
        }
        let entry = ModelRegistryEntry {
            version,
            spec: candidate.spec,
            trained_at: candidate.trained_at,
            training_count: candidate.training_count,
            metrics: candidate.metrics,
            status: ModelStatus::Active,
            r2_delta: candidate.r2_delta,
            convergence_minutes: candidate.convergence_minutes,
        };
        s.entries.push(entry.clone());
        s.active = Some(Arc::new(PublishedModel { entry: entry.clone(), artifact: candidate.artifact }));
        entry
    }
}
