use std::sync::Arc;

use chrono::Duration;

use metrotwin_core::campaign::{reference_campaign, DeviceModel};
use metrotwin_core::metrology::{DeviceKind, MeasurementRecord};
use metrotwin_core::ml::{deviation_dataset, kfold_cv, RegressorSpec};
use metrotwin_core::report::{build_report, parse_tables, ReportOptions};
use metrotwin_core::stats::{descriptive_stats, deviation_regression};
use metrotwin_core::twin::{DigitalTwin, TwinConfig, VirtualClock, WhatIfQuery};

#[test]
fn records_survive_json_and_refit_identically() {
    let records = reference_campaign(9).unwrap();
    let text = serde_json::to_string(&records).unwrap();
    let back: Vec<MeasurementRecord> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, records);
    assert_eq!(deviation_regression(&back).unwrap(), deviation_regression(&records).unwrap());
}

#[test]
fn device_spread_converges_to_noise_sigma() {
    let models = DeviceModel::reference_pair();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let fit = deviation_regression(&reference_campaign(seed).unwrap()).unwrap();
        let records = reference_campaign(seed).unwrap();
        for m in &models {
            let resid: Vec<f64> = records
                .iter()
                .filter(|r| r.device == m.kind)
                .map(|r| r.deviation - fit.predict(&[r.nominal_value, r.device.indicator(), r.temperature]).unwrap())
                .collect();
            assert_eq!(resid.len(), 160);
            let s = descriptive_stats(&resid).unwrap().sample_std;
            worst = worst.max((s - m.noise_sigma).abs() / m.noise_sigma);
        }
    }
    assert!(worst <= 0.15, "worst relative error {worst}");
}

#[test]
fn campaign_to_twin_to_report() {
    let records = reference_campaign(21).unwrap();
    let data = deviation_dataset(&records).unwrap();
    let cv = kfold_cv(&RegressorSpec::Linear, &data, 5, 21).unwrap();
    assert!(cv.mean.r2 > 0.4, "{:?}", cv.mean);

    let start = records.iter().map(|r| r.timestamp).max().unwrap();
    let clock = Arc::new(VirtualClock::new(start));
    let twin = DigitalTwin::new(TwinConfig { spec: RegressorSpec::Linear, ..TwinConfig::default() }, clock.clone());
    for r in &records {
        twin.ingest(r.clone()).unwrap();
    }
    let entry = twin.retrain(start).unwrap();
    clock.advance(Duration::hours(1));
    let q = WhatIfQuery {
        nominal_mm: 50.0,
        device: DeviceKind::FaroArm,
        temperature_c: 22.0,
        geometry: None,
        tolerance_band_mm: None,
    };
    let answer = twin.what_if(&q).unwrap();
    assert_eq!(answer.model_version, entry.version);
    assert!(answer.predicted_deviation_um.is_finite());

    let options = ReportOptions { tables: parse_tables("1-2,4").unwrap(), seed: 21, ..ReportOptions::default() };
    let md = build_report(&twin.records(), &options).unwrap().to_markdown();
    for heading in ["Device comparison", "Regression of deviation", "Anomaly detection"] {
        assert!(md.contains(heading), "{md}");
    }
    assert!(!md.contains("Model comparison"));
}
