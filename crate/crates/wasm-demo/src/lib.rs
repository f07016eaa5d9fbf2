//! Browser entry points. Every export returns a JSON string; failures
//! come back as a plain message.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use metrotwin_core::campaign::{
    annotate_labels, inject_anomalies, labels_from_annotations, reference_campaign, DeviceModel,
};
use metrotwin_core::metrology::{DeviceKind, MeasurementRecord};
use metrotwin_core::ml::{BoostingParams, ForestParams, RegressorSpec};
use metrotwin_core::report::{build_report, AnomalyPoint, DetectionTable, ReportOptions};
use metrotwin_core::twin::{DigitalTwin, ModelRegistryEntry, TwinConfig, VirtualClock, WhatIfQuery};

type Out<T> = Result<T, String>;

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Reference campaign, optionally with annotated injected anomalies.
fn campaign(seed: u32, contamination: f64) -> Out<Vec<MeasurementRecord>> {
    let records = reference_campaign(u64::from(seed)).map_err(msg)?;
    if contamination <= 0.0 {
        return Ok(records);
    }
    let (mut dirty, labels) =
        inject_anomalies(&records, &DeviceModel::reference_pair(), contamination, u64::from(seed)).map_err(msg)?;
    annotate_labels(&mut dirty, &labels);
    Ok(dirty)
}

fn options(seed: u32, tables: &[u8], contamination: f64) -> ReportOptions {
    ReportOptions {
        tables: tables.iter().copied().collect::<BTreeSet<u8>>(),
        seed: u64::from(seed),
        contamination: if contamination > 0.0 { contamination } else { ReportOptions::default().contamination },
        ..ReportOptions::default()
    }
}

/// Device comparison, regression, deviation histogram and temperature
/// scatter for one synthetic campaign.
#[wasm_bindgen]
pub fn explore(seed: u32) -> Out<String> {
    let records = campaign(seed, 0.0)?;
    let doc = build_report(&records, &options(seed, &[1, 2], 0.0)).map_err(msg)?;
    serde_json::to_string(&doc).map_err(msg)
}

#[derive(Debug, Serialize)]
struct Detection {
    table: DetectionTable,
    points: Vec<AnomalyPoint>,
    injected: Vec<String>,
}

/// Inject anomalies into a campaign, then score it with the isolation
/// forest. `injected` lists the ground-truth record ids.
#[wasm_bindgen]
pub fn detect(seed: u32, contamination: f64) -> Out<String> {
    if !(contamination > 0.0 && contamination < 0.5) {
        return Err("contamination must lie in (0, 0.5)".into());
    }
    let records = campaign(seed, contamination)?;
    let injected = labels_from_annotations(&records)
        .unwrap_or_default()
        .into_iter()
        .filter(|l| l.is_anomaly)
        .map(|l| l.record_id)
        .collect();
    let doc = build_report(&records, &options(seed, &[4], contamination)).map_err(msg)?;
    let out = Detection {
        table: doc.anomaly_detection.ok_or("detection table missing")?,
        points: doc.figures.anomaly_scatter.unwrap_or_default(),
        injected,
    };
    serde_json::to_string(&out).map_err(msg)
}

fn demo_spec(model: &str, seed: u64) -> Out<RegressorSpec> {
    Ok(match model {
        "linear" => RegressorSpec::Linear,
        "forest" => RegressorSpec::RandomForest(ForestParams { n_trees: 40, seed, ..ForestParams::default() }),
        "boosting" => RegressorSpec::GradientBoosting(BoostingParams { seed, ..BoostingParams::default() }),
        other => return Err(format!("unknown model `{other}`; use linear, forest or boosting")),
    })
}

/// A twin trained on one campaign, answering what-if queries.
#[wasm_bindgen]
pub struct WhatIf {
    twin: DigitalTwin,
    entry: ModelRegistryEntry,
}

#[wasm_bindgen]
impl WhatIf {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, model: &str) -> Out<WhatIf> {
        let records = campaign(seed, 0.0)?;
        let at = records.iter().map(|r| r.timestamp).max().ok_or("empty campaign")?;
        let config =
            TwinConfig { spec: demo_spec(model, u64::from(seed))?, seed: u64::from(seed), ..TwinConfig::default() };
        let twin = DigitalTwin::new(config, Arc::new(VirtualClock::new(at)));
        for r in records {
            twin.ingest(r).map_err(msg)?;
        }
        let entry = twin.retrain(at).map_err(msg)?;
        Ok(WhatIf { twin, entry })
    }

    /// Registry entry of the trained model, including its CV metrics.
    pub fn model(&self) -> String {
        serde_json::to_string(&self.entry).expect("registry entries serialize")
    }

    /// Predicted deviation (µm) and tolerance verdict. `device` is `CMM`,
    /// `FaroArm` or `FARO`; the prediction averages over geometry classes.
    pub fn predict(&self, nominal_mm: f64, device: &str, temperature_c: f64) -> Out<String> {
        let device: DeviceKind = serde_json::from_value(serde_json::Value::from(device)).map_err(msg)?;
        let q = WhatIfQuery { nominal_mm, device, temperature_c, geometry: None, tolerance_band_mm: None };
        serde_json::to_string(&self.twin.what_if(&q).map_err(msg)?).map_err(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn explore_has_both_tables_and_figures() {
        let doc: Value = serde_json::from_str(&explore(1).unwrap()).unwrap();
        assert!(doc["device_comparison"].is_object());
        assert_eq!(doc["regression"]["n"], 320);
        assert_eq!(doc["figures"]["deviation_histogram"]["edges"].as_array().unwrap().len(), 31);
        assert_eq!(doc["figures"]["temperature_scatter"]["fitted"].as_array().unwrap().len(), 2);
        assert_eq!(explore(1).unwrap(), explore(1).unwrap());
    }

    #[test]
    fn detection_reports_truth() {
        let out: Value = serde_json::from_str(&detect(2, 0.05).unwrap()).unwrap();
        assert_eq!(out["injected"].as_array().unwrap().len(), 16);
        assert_eq!(out["points"].as_array().unwrap().len(), 320);
        assert!(out["table"]["metrics"]["tpr"].as_f64().unwrap() > 0.5);
        assert!(detect(2, 0.0).is_err());
    }

    #[test]
    fn what_if_warms_with_temperature() {
        let w = WhatIf::new(3, "linear").unwrap();
        let at = |t: f64| -> f64 {
            let v: Value = serde_json::from_str(&w.predict(100.0, "CMM", t).unwrap()).unwrap();
            v["predicted_deviation_um"].as_f64().unwrap()
        };
        assert!(at(30.0) > at(20.0));
        let model: Value = serde_json::from_str(&w.model()).unwrap();
        assert_eq!(model["version"], 1);
        assert!(w.predict(100.0, "caliper", 20.0).is_err());
        assert!(WhatIf::new(3, "svm").is_err());
        assert!(WhatIf::new(3, "forest").is_ok());
    }
}
