//! Analysis report over a set of measurement records: six tables and the
//! data series behind the figures. Field names carry their unit; values
//! are millimetres unless the name says `_um`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::anomaly::iforest::IsolationParams;
use crate::anomaly::{detect_anomalies, detection_metrics, DetectionReport, FeatureMode, DEFAULT_CONTAMINATION};
use crate::campaign::labels_from_annotations;
use crate::error::{validation, Error, Result};
use crate::metrology::{DeviceKind, MeasurementRecord};
use crate::ml::{compare_models, deviation_dataset, RegressorSpec};
use crate::stats::{
    anova_oneway, descriptive_stats, deviation_regression, paired_t_test, unpaired_t_test, AnovaResult, TTestResult,
};
use crate::twin::{replay_pipeline, simulate_year, standard_feed, RetrainInterval, TrajectoryPoint, TwinConfig};

pub const ALL_TABLES: [u8; 6] = [1, 2, 3, 4, 5, 6];
pub const HISTOGRAM_BINS: usize = 30;

/// Parse a table selection such as `1-6`, `4` or `1,3,5`.
pub fn parse_tables(spec: &str) -> Result<BTreeSet<u8>> {
    let mut out = BTreeSet::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (part, part),
        };
        let lo: u8 = lo.parse().map_err(|_| validation(format!("bad table number `{lo}`")))?;
        let hi: u8 = hi.parse().map_err(|_| validation(format!("bad table number `{hi}`")))?;
        if lo < 1 || hi > 6 || lo > hi {
            return Err(validation(format!("table range `{part}` outside 1-6")));
        }
        out.extend(lo..=hi);
    }
    if out.is_empty() {
        return Err(validation("no tables selected"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub tables: BTreeSet<u8>,
    pub seed: u64,
    pub cv_folds: usize,
    pub contamination: f64,
    /// Virtual days streamed for the pipeline table.
    pub replay_days: u32,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            tables: ALL_TABLES.into_iter().collect(),
            seed: 0,
            cv_folds: 5,
            contamination: DEFAULT_CONTAMINATION,
            replay_days: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub records: usize,
    pub linear_mm_records: usize,
    /// Angular features are left out of pooled millimetre statistics.
    pub excluded_angular: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceStatsRow {
    pub device: DeviceKind,
    pub n: usize,
    pub mean_deviation_mm: f64,
    pub std_deviation_mm: f64,
    pub range_mm: f64,
    pub ci95_mean_mm: (f64, f64),
    pub predictive95_mm: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceComparison {
    pub rows: Vec<DeviceStatsRow>,
    /// Pairs matched on part, feature, repetition and temperature level.
    pub paired_pairs: usize,
    pub paired_t: Option<TTestResult>,
    pub unpaired_t: Option<TTestResult>,
    /// Deviation across temperature levels, one test per device.
    pub temperature_anova: Vec<(DeviceKind, AnovaResult)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    /// Intercept in mm; slopes in mm per predictor unit.
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTable {
    pub coefficients: Vec<CoefficientRow>,
    pub r_squared: f64,
    pub residual_sigma_mm: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub r2: f64,
    pub rmse_um: f64,
    pub mae_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub folds: usize,
    pub rows: Vec<ModelRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    pub contamination: f64,
    pub scored: usize,
    pub flagged: usize,
    pub threshold: f64,
    /// Present only when every record carries a ground-truth annotation.
    pub metrics: Option<DetectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub schedule: RetrainInterval,
    pub events: usize,
    pub mean_r2_gain_per_event: f64,
    pub cumulative_r2_gain: f64,
    pub mean_rmse_reduction_per_event_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleComparison {
    pub baseline_r2: f64,
    pub rows: Vec<ScheduleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTable {
    pub ingestion_rate_per_hour: f64,
    pub update_frequency_hours: u32,
    /// Wall-clock, so it varies between runs.
    pub mean_convergence_minutes: f64,
    pub mean_r2_improvement: Option<f64>,
    pub scheduled_updates: usize,
    pub replay_hours: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub unit: String,
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: BTreeMap<DeviceKind, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub temperature_c: f64,
    pub deviation_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLine {
    pub device: DeviceKind,
    /// Evaluated at the mean nominal of the data.
    pub at_nominal_mm: f64,
    pub from: ScatterPoint,
    pub to: ScatterPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureScatter {
    pub points: BTreeMap<DeviceKind, Vec<ScatterPoint>>,
    pub fitted: Vec<FittedLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPoint {
    pub record_id: String,
    pub device: DeviceKind,
    pub nominal_mm: f64,
    pub deviation_mm: f64,
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub hour: u32,
    pub version: u64,
    pub training_rows: usize,
    pub cv_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FigureData {
    pub deviation_histogram: Option<Histogram>,
    pub temperature_scatter: Option<TemperatureScatter>,
    pub anomaly_scatter: Option<Vec<AnomalyPoint>>,
    pub learning_curve: Option<Vec<LearningPoint>>,
    pub schedule_trajectories: Option<BTreeMap<RetrainInterval, Vec<TrajectoryPoint>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub options: ReportOptions,
    pub data: DataSummary,
    pub device_comparison: Option<DeviceComparison>,
    pub regression: Option<RegressionTable>,
    pub model_comparison: Option<ModelComparison>,
    pub anomaly_detection: Option<DetectionTable>,
    pub retraining_schedules: Option<ScheduleComparison>,
    pub pipeline: Option<PipelineTable>,
    pub figures: FigureData,
}

pub fn build_report(records: &[MeasurementRecord], options: &ReportOptions) -> Result<ReportDocument> {
    if let Some(bad) = options.tables.iter().find(|t| !ALL_TABLES.contains(t)) {
        return Err(validation(format!("unknown table {bad}")));
    }
    let linear: Vec<MeasurementRecord> = records.iter().filter(|r| r.is_linear_mm()).cloned().collect();
    let mut doc = ReportDocument {
        options: options.clone(),
        data: DataSummary {
            records: records.len(),
            linear_mm_records: linear.len(),
            excluded_angular: records.len() - linear.len(),
        },
        device_comparison: None,
        regression: None,
        model_comparison: None,
        anomaly_detection: None,
        retraining_schedules: None,
        pipeline: None,
        figures: FigureData::default(),
    };
    let want = |t: u8| options.tables.contains(&t);
    if want(1) {
        doc.device_comparison = Some(device_comparison(&linear)?);
        doc.figures.deviation_histogram = Some(histogram(&linear, HISTOGRAM_BINS)?);
    }
    if want(2) {
        let (table, scatter) = regression_section(&linear)?;
        doc.regression = Some(table);
        doc.figures.temperature_scatter = Some(scatter);
    }
    if want(3) {
        let data = deviation_dataset(&linear)?;
        let reports =
            compare_models(&RegressorSpec::comparison_set(options.seed), &data, options.cv_folds, options.seed)?;
        doc.model_comparison = Some(ModelComparison {
            folds: options.cv_folds,
            rows: reports
                .into_iter()
                .map(|r| ModelRow { model: r.model, r2: r.mean.r2, rmse_um: r.mean.rmse, mae_um: r.mean.mae })
                .collect(),
        });
    }
    if want(4) {
        let (table, points) = detection_section(records, options)?;
        doc.anomaly_detection = Some(table);
        doc.figures.anomaly_scatter = Some(points);
    }
    if want(5) {
        let feed = standard_feed(options.seed)?;
        let mut rows = Vec::new();
        let mut trajectories = BTreeMap::new();
        let mut baseline_r2 = f64::NAN;
        for interval in [RetrainInterval::Weekly, RetrainInterval::Monthly, RetrainInterval::Quarterly] {
            let sim = simulate_year(interval, &feed, options.seed)?;
            baseline_r2 = sim.baseline.r2;
            rows.push(ScheduleRow {
                schedule: interval,
                events: sim.events.len(),
                mean_r2_gain_per_event: sim.mean_r2_gain_per_event,
                cumulative_r2_gain: sim.events.last().map_or(0.0, |e| e.cumulative_r2_gain),
                mean_rmse_reduction_per_event_um: sim.mean_rmse_reduction_per_event,
            });
            trajectories.insert(interval, sim.trajectory);
        }
        doc.retraining_schedules = Some(ScheduleComparison { baseline_r2, rows });
        doc.figures.schedule_trajectories = Some(trajectories);
    }
    if want(6) {
        let config = TwinConfig { seed: options.seed, cv_folds: options.cv_folds, ..TwinConfig::default() };
        let replay = replay_pipeline(config, records, options.replay_days)?;
        doc.pipeline = Some(PipelineTable {
            ingestion_rate_per_hour: replay.final_stats.ingestion_rate,
            update_frequency_hours: replay.final_stats.update_frequency_hours,
            mean_convergence_minutes: replay.mean_convergence_minutes,
            mean_r2_improvement: replay.mean_r2_delta,
            scheduled_updates: replay.updates.len() - 1,
            replay_hours: replay.hours,
        });
        doc.figures.learning_curve = Some(
            replay
                .updates
                .iter()
                .map(|u| LearningPoint {
                    hour: u.hour,
                    version: u.version,
                    training_rows: u.training_rows,
                    cv_r2: u.cv_r2,
                })
                .collect(),
        );
    }
    Ok(doc)
}

fn deviations_of(records: &[MeasurementRecord], device: DeviceKind) -> Vec<f64> {
    records.iter().filter(|r| r.device == device).map(|r| r.deviation).collect()
}

/// Temperature level for pairing: nearest multiple of 5 °C.
fn temperature_level(t: f64) -> i64 {
    (t / 5.0).round() as i64
}

fn device_comparison(records: &[MeasurementRecord]) -> Result<DeviceComparison> {
    let mut rows = Vec::new();
    for device in DeviceKind::ALL {
        let dev = deviations_of(records, device);
        if dev.is_empty() {
            continue;
        }
        let s = descriptive_stats(&dev)?;
        rows.push(DeviceStatsRow {
            device,
            n: s.n,
            mean_deviation_mm: s.mean,
            std_deviation_mm: s.sample_std,
            range_mm: s.range,
            ci95_mean_mm: s.ci95,
            predictive95_mm: s.predictive95,
        });
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData { what: "device statistics", needed: 1, got: 0 });
    }

    type Key<'a> = (&'a str, &'a str, u32, i64);
    let mut by_slot: BTreeMap<Key, [Option<f64>; 2]> = BTreeMap::new();
    for r in records {
        let k = (r.part_id.as_str(), r.feature_id.as_str(), r.repetition_index, temperature_level(r.temperature));
        let slot = by_slot.entry(k).or_default();
        slot[usize::from(r.device == DeviceKind::FaroArm)] = Some(r.deviation);
    }
    let (cmm, faro): (Vec<f64>, Vec<f64>) = by_slot.values().filter_map(|s| Some((s[0]?, s[1]?))).unzip();
    let paired_t = paired_t_test(&cmm, &faro).ok();
    let unpaired_t =
        unpaired_t_test(&deviations_of(records, DeviceKind::Cmm), &deviations_of(records, DeviceKind::FaroArm)).ok();

    let mut temperature_anova = Vec::new();
    for device in DeviceKind::ALL {
        let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for r in records.iter().filter(|r| r.device == device) {
            groups.entry(temperature_level(r.temperature)).or_default().push(r.deviation);
        }
        let groups: Vec<Vec<f64>> = groups.into_values().collect();
        if let Ok(a) = anova_oneway(&groups) {
            temperature_anova.push((device, a));
        }
    }
    Ok(DeviceComparison { rows, paired_pairs: cmm.len(), paired_t, unpaired_t, temperature_anova })
}

fn histogram(records: &[MeasurementRecord], bins: usize) -> Result<Histogram> {
    if records.is_empty() {
        return Err(Error::InsufficientData { what: "histogram", needed: 1, got: 0 });
    }
    let lo = records.iter().map(|r| r.deviation).fold(f64::INFINITY, f64::min);
    let mut hi = records.iter().map(|r| r.deviation).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1e-3;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = BTreeMap::new();
    for device in DeviceKind::ALL {
        let mut c = vec![0usize; bins];
        for d in deviations_of(records, device) {
            let i = (((d - lo) / width).floor() as usize).min(bins - 1);
            c[i] += 1;
        }
        counts.insert(device, c);
    }
    Ok(Histogram { unit: "mm".into(), edges, counts })
}

fn regression_section(records: &[MeasurementRecord]) -> Result<(RegressionTable, TemperatureScatter)> {
    let fit = deviation_regression(records)?;
    let coefficients = (0..fit.names.len())
        .map(|i| CoefficientRow {
            name: fit.names[i].clone(),
            estimate: fit.coefficients[i],
            std_error: fit.std_errors[i],
            t_stat: fit.t_stats[i],
            p_value: fit.p_values[i],
            ci95: fit.ci95[i],
        })
        .collect();
    let mean_nominal = records.iter().map(|r| r.nominal_value).sum::<f64>() / records.len() as f64;
    let mut points = BTreeMap::new();
    let mut fitted = Vec::new();
    for device in DeviceKind::ALL {
        let pts: Vec<ScatterPoint> = records
            .iter()
            .filter(|r| r.device == device)
            .map(|r| ScatterPoint { temperature_c: r.temperature, deviation_mm: r.deviation })
            .collect();
        if pts.is_empty() {
            continue;
        }
        let t_lo = pts.iter().map(|p| p.temperature_c).fold(f64::INFINITY, f64::min);
        let t_hi = pts.iter().map(|p| p.temperature_c).fold(f64::NEG_INFINITY, f64::max);
        let at = |t: f64| fit.predict(&[mean_nominal, device.indicator(), t]);
        fitted.push(FittedLine {
            device,
            at_nominal_mm: mean_nominal,
            from: ScatterPoint { temperature_c: t_lo, deviation_mm: at(t_lo)? },
            to: ScatterPoint { temperature_c: t_hi, deviation_mm: at(t_hi)? },
        });
        points.insert(device, pts);
    }
    let table = RegressionTable { coefficients, r_squared: fit.r_squared, residual_sigma_mm: fit.sigma, n: fit.n };
    Ok((table, TemperatureScatter { points, fitted }))
}

fn detection_section(
    records: &[MeasurementRecord],
    options: &ReportOptions,
) -> Result<(DetectionTable, Vec<AnomalyPoint>)> {
    let params = IsolationParams { seed: options.seed, ..IsolationParams::default() };
    let (_, outcome) = detect_anomalies(records, FeatureMode::Residual, &params, options.contamination)?;
    let metrics = match labels_from_annotations(records) {
        Some(labels) => Some(detection_metrics(&outcome.flagged_ids, &labels)?),
        None => None,
    };
    let by_id: BTreeMap<&str, &MeasurementRecord> = records.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let points = outcome
        .scored
        .iter()
        .map(|s| {
            let r = by_id[s.record_id.as_str()];
            AnomalyPoint {
                record_id: s.record_id.clone(),
                device: r.device,
                nominal_mm: r.nominal_value,
                deviation_mm: r.deviation,
                score: s.score,
                flagged: s.flagged,
            }
        })
        .collect();
    let table = DetectionTable {
        contamination: options.contamination,
        scored: outcome.scored.len(),
        flagged: outcome.flagged_ids.len(),
        threshold: outcome.threshold,
        metrics,
    };
    Ok((table, points))
}

impl ReportDocument {
    /// Plain-text rendering of the tables; figure data stays in JSON.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let d = &self.data;
        let _ = writeln!(
            s,
            "# Measurement analysis\n\n{} records, {} linear (mm), {} angular excluded from pooled statistics.\n",
            d.records, d.linear_mm_records, d.excluded_angular
        );
        if let Some(t) = &self.device_comparison {
            s.push_str("## Table 1. Device comparison (mm)\n\n");
            s.push_str("| Device | n | Mean | Std | Range | 95% CI of mean | 95% predictive |\n|---|---|---|---|---|---|---|\n");
            for r in &t.rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} | {:.4} | {:.4} | [{:.4}, {:.4}] | [{:.4}, {:.4}] |",
                    r.device,
                    r.n,
                    r.mean_deviation_mm,
                    r.std_deviation_mm,
                    r.range_mm,
                    r.ci95_mean_mm.0,
                    r.ci95_mean_mm.1,
                    r.predictive95_mm.0,
                    r.predictive95_mm.1
                );
            }
            if let Some(p) = &t.paired_t {
                let _ = writeln!(
                    s,
                    "\nPaired t-test over {} pairs: t = {:.3}, df = {}, p = {:.3e}",
                    t.paired_pairs, p.t_stat, p.df, p.p_value
                );
            }
            if let Some(u) = &t.unpaired_t {
                let _ = writeln!(s, "Two-sample t-test: t = {:.3}, df = {}, p = {:.3e}", u.t_stat, u.df, u.p_value);
            }
            for (dev, a) in &t.temperature_anova {
                let _ = writeln!(
                    s,
                    "ANOVA across temperature, {dev}: F = {:.3}, df = ({}, {}), p = {:.3e}",
                    a.f_stat, a.df_between, a.df_within, a.p_value
                );
            }
            s.push('\n');
        }
        if let Some(t) = &self.regression {
            s.push_str("## Table 2. Regression of deviation (mm)\n\n");
            s.push_str("| Term | Estimate | Std error | t | p | 95% CI |\n|---|---|---|---|---|---|\n");
            for c in &t.coefficients {
                let _ = writeln!(
                    s,
                    "| {} | {:.6} | {:.6} | {:.3} | {:.3e} | [{:.6}, {:.6}] |",
                    c.name, c.estimate, c.std_error, c.t_stat, c.p_value, c.ci95.0, c.ci95.1
                );
            }
            let _ =
                writeln!(s, "\nR² = {:.4}, residual sigma = {:.5} mm, n = {}\n", t.r_squared, t.residual_sigma_mm, t.n);
        }
        if let Some(t) = &self.model_comparison {
            let _ = writeln!(s, "## Table 3. Model comparison, {}-fold CV\n", t.folds);
            s.push_str("| Model | R² | RMSE (µm) | MAE (µm) |\n|---|---|---|---|\n");
            for r in &t.rows {
                let _ = writeln!(s, "| {} | {:.4} | {:.3} | {:.3} |", r.model, r.r2, r.rmse_um, r.mae_um);
            }
            s.push('\n');
        }
        if let Some(t) = &self.anomaly_detection {
            s.push_str("## Table 4. Anomaly detection\n\n");
            let _ = writeln!(
                s,
                "Contamination {:.3}; {} of {} scored records flagged (threshold {:.4}).",
                t.contamination, t.flagged, t.scored, t.threshold
            );
            match &t.metrics {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "\n| TPR | FPR | F1 |\n|---|---|---|\n| {:.3} | {:.3} | {:.3} |",
                        m.tpr, m.fpr, m.f1
                    );
                }
                None => s.push_str("No ground-truth annotations; rates not computed.\n"),
            }
            s.push('\n');
        }
        if let Some(t) = &self.retraining_schedules {
            let _ = writeln!(s, "## Table 5. Retraining schedules (baseline CV R² {:.4})\n", t.baseline_r2);
            s.push_str("| Schedule | Events | Mean R² gain / event | Cumulative R² gain | Mean RMSE reduction / event (µm) |\n|---|---|---|---|---|\n");
            for r in &t.rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} | {:.4} | {:.3} |",
                    r.schedule.as_str(),
                    r.events,
                    r.mean_r2_gain_per_event,
                    r.cumulative_r2_gain,
                    r.mean_rmse_reduction_per_event_um
                );
            }
            s.push('\n');
        }
        if let Some(t) = &self.pipeline {
            s.push_str("## Table 6. Continuous learning pipeline\n\n| Metric | Value |\n|---|---|\n");
            let _ = writeln!(s, "| Ingestion rate (measurements/hour) | {:.0} |", t.ingestion_rate_per_hour);
            let _ = writeln!(s, "| Update frequency (hours) | {} |", t.update_frequency_hours);
            let _ = writeln!(s, "| Mean convergence time (minutes, wall clock) | {:.3} |", t.mean_convergence_minutes);
            match t.mean_r2_improvement {
                Some(v) => {
                    let _ = writeln!(s, "| Mean R² improvement per update | {v:.4} |");
                }
                None => s.push_str("| Mean R² improvement per update | n/a |\n"),
            }
            let _ =
                writeln!(s, "| Scheduled updates over {} virtual hours | {} |", t.replay_hours, t.scheduled_updates);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{annotate_labels, inject_anomalies, reference_campaign, DeviceModel};

    fn light(tables: &str) -> ReportOptions {
        ReportOptions { tables: parse_tables(tables).unwrap(), seed: 5, ..ReportOptions::default() }
    }

    #[test]
    fn table_selection_parsing() {
        assert_eq!(parse_tables("1-6").unwrap(), ALL_TABLES.into_iter().collect());
        assert_eq!(parse_tables("4").unwrap(), [4].into_iter().collect());
        assert_eq!(parse_tables("1, 3-4").unwrap(), [1, 3, 4].into_iter().collect());
        for bad in ["", "0", "7", "2-1", "x", "1-9"] {
            assert!(parse_tables(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn device_table_and_histogram() {
        let records = reference_campaign(5).unwrap();
        let doc = build_report(&records, &light("1")).unwrap();
        let t = doc.device_comparison.unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows.iter().map(|r| r.n).sum::<usize>(), 320);
        assert_eq!(t.paired_pairs, 160);
        assert!(t.rows[1].std_deviation_mm > t.rows[0].std_deviation_mm);
        let h = doc.figures.deviation_histogram.unwrap();
        assert_eq!(h.edges.len(), HISTOGRAM_BINS + 1);
        assert_eq!(h.counts.values().flatten().sum::<usize>(), 320);
        assert!(doc.regression.is_none());
    }

    #[test]
    fn regression_lines_rise_with_temperature() {
        let doc = build_report(&reference_campaign(6).unwrap(), &light("2")).unwrap();
        let t = doc.regression.unwrap();
        assert_eq!(t.coefficients.len(), 4);
        let s = doc.figures.temperature_scatter.unwrap();
        for line in &s.fitted {
            assert!(line.to.deviation_mm > line.from.deviation_mm);
        }
    }

    #[test]
    fn detection_table_has_rates_when_annotated() {
        let models = DeviceModel::reference_pair();
        let (mut records, labels) = inject_anomalies(&reference_campaign(8).unwrap(), &models, 0.05, 8).unwrap();
        let doc = build_report(&records, &light("4")).unwrap();
        assert!(doc.anomaly_detection.unwrap().metrics.is_none());
        annotate_labels(&mut records, &labels);
        let doc = build_report(&records, &light("4")).unwrap();
        let t = doc.anomaly_detection.as_ref().unwrap();
        assert_eq!(t.flagged, 16);
        let m = t.metrics.as_ref().unwrap();
        assert!(m.tpr >= 0.0 && m.fpr <= 1.0);
        assert!(doc.to_markdown().contains("TPR"));
    }

    #[test]
    fn report_is_deterministic() {
        let records = reference_campaign(9).unwrap();
        let a = build_report(&records, &light("1-4")).unwrap();
        let b = build_report(&records, &light("1-4")).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
