//! `metrotwin` subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use metrotwin_core::anomaly::{detect_anomalies, detection_metrics, DetectionReport, FeatureMode, IsolationParams};
use metrotwin_core::campaign::{
    annotate_labels, build_design, generate_campaign, inject_anomalies, labels_from_annotations, DeviceModel,
};
use metrotwin_core::metrology::{default_tolerance_band, reference_catalog, MeasurementRecord, Part};
use metrotwin_core::ml::{deviation_dataset, kfold_cv, CvReport, ModelArtifact, FEATURE_NAMES};
use metrotwin_core::report::{build_report, parse_tables, ReportDocument, ReportOptions};
use metrotwin_core::twin::{simulate_year, standard_feed, RetrainInterval, YearSimulation};

use crate::format::{write_csv, write_jsonl};
use crate::model_spec;
use crate::service::{serve, ServeConfig};
use crate::store::read_records;

#[derive(Debug, Parser)]
#[command(name = "metrotwin", version, about = "Metrology digital twin: campaigns, analysis, training and service")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "TWIN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Markdown,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a measurement campaign as JSONL.
    Generate {
        #[arg(long, default_value_t = 20)]
        parts: usize,
        /// Temperature set-points in °C.
        #[arg(long, value_delimiter = ',', default_values_t = [20.0, 30.0])]
        temps: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        reps: u32,
        #[arg(long)]
        out: PathBuf,
        /// Inject this fraction of anomalies and annotate ground truth.
        #[arg(long)]
        contamination: Option<f64>,
        /// Also write a CSV export.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Device statistics and regression (tables 1 and 2).
    Analyze {
        file: PathBuf,
        /// Output directory for report.json, report.md and measurements.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate and fit a learner.
    Train {
        file: PathBuf,
        #[arg(long, default_value = "ensemble")]
        model: String,
        #[arg(long, default_value_t = 5)]
        cv: usize,
        /// Write the fitted model artifact here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score records with an isolation forest and flag the top fraction.
    Detect {
        file: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        contamination: f64,
    },
    /// Replay a year of weekly batches under a retraining schedule.
    SimulateYear {
        #[arg(long, default_value = "weekly")]
        schedule: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "TWIN_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "TWIN_DATA_DIR", default_value = "twin-data")]
        data: PathBuf,
        /// Seconds between scheduled-update checks.
        #[arg(long, default_value_t = 60)]
        check_every: u64,
    },
    /// Build report tables from a measurement file.
    Report {
        file: PathBuf,
        #[arg(long, default_value = "1-6")]
        tables: String,
        #[arg(long, default_value_t = 5)]
        cv: usize,
        #[arg(long, default_value_t = 0.05)]
        contamination: f64,
        #[arg(long, default_value_t = 2)]
        replay_days: u32,
        #[arg(long, value_enum, default_value_t = OutputFormat::Markdown)]
        format: OutputFormat,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Reference parts taken one geometry class at a time, so a short
/// selection still covers every class. Catalog order is kept, which makes
/// the full selection reproduce the reference campaign.
pub fn select_parts(n: usize) -> Result<Vec<Part>> {
    let band = default_tolerance_band(&DeviceModel::reference_pair().iter().map(|m| m.noise_sigma).collect::<Vec<_>>());
    let catalog = reference_catalog(band);
    if n == 0 || n > catalog.len() {
        bail!("--parts must lie in 1..={}", catalog.len());
    }
    let per_class = catalog.len() / 5;
    let order = (0..per_class).flat_map(|k| (0..5).map(move |g| g * per_class + k));
    let mut picked: Vec<usize> = order.take(n).collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| catalog[i].clone()).collect())
}

pub fn generate_records(
    parts: usize,
    temps: &[f64],
    reps: u32,
    seed: u64,
    contamination: Option<f64>,
) -> Result<Vec<MeasurementRecord>> {
    let models = DeviceModel::reference_pair();
    let design = build_design(&select_parts(parts)?, temps, reps, seed)?;
    let records = generate_campaign(&design, &models, seed)?;
    Ok(match contamination {
        Some(c) => {
            let (mut recs, labels) = inject_anomalies(&records, &models, c, seed)?;
            annotate_labels(&mut recs, &labels);
            recs
        }
        None => records,
    })
}

fn load(file: &Path) -> Result<Vec<MeasurementRecord>> {
    read_records(file).with_context(|| format!("reading {}", file.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize)]
pub struct TrainOutput {
    pub cv: CvReport,
    pub training_rows: usize,
    pub artifact: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct DetectOutput {
    pub contamination: f64,
    pub threshold: f64,
    pub flagged_ids: Vec<String>,
    pub metrics: Option<DetectionReport>,
}

pub fn report_for(records: &[MeasurementRecord], options: &ReportOptions) -> Result<ReportDocument> {
    Ok(build_report(records, options)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Generate { parts, temps, reps, out, contamination, csv } => {
            let records = generate_records(parts, &temps, reps, seed, contamination)?;
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_jsonl(BufWriter::new(f), &records)?;
            if let Some(path) = csv {
                write_csv(BufWriter::new(File::create(&path)?), &records)?;
            }
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Analyze { file, out } => {
            let records = load(&file)?;
            let options = ReportOptions { tables: parse_tables("1-2")?, seed, ..ReportOptions::default() };
            let doc = report_for(&records, &options)?;
            let md = doc.to_markdown();
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                write_text(&dir.join("report.md"), &md)?;
                write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&doc)?)?;
                write_csv(BufWriter::new(File::create(dir.join("measurements.csv"))?), &records)?;
            }
            print!("{md}");
        }
        Command::Train { file, model, cv, out } => {
            let records = load(&file)?;
            let data = deviation_dataset(&records)?;
            let spec = model_spec(&model)?.with_seed(seed);
            let report = kfold_cv(&spec, &data, cv, seed)?;
            let fitted = spec.fit(&data)?;
            if let Some(path) = &out {
                let at = records.iter().map(|r| r.timestamp).max().unwrap_or_default();
                let artifact =
                    ModelArtifact::new(spec.clone(), &FEATURE_NAMES, data.len(), at, Some(report.mean), fitted);
                write_text(path, &artifact.to_json())?;
            }
            print_json(&TrainOutput { cv: report, training_rows: data.len(), artifact: out })?;
        }
        Command::Detect { file, contamination } => {
            let records = load(&file)?;
            let params = IsolationParams { seed, ..IsolationParams::default() };
            let (_, outcome) = detect_anomalies(&records, FeatureMode::Residual, &params, contamination)?;
            let metrics = match labels_from_annotations(&records) {
                Some(labels) => Some(detection_metrics(&outcome.flagged_ids, &labels)?),
                None => None,
            };
            print_json(&DetectOutput {
                contamination,
                threshold: outcome.threshold,
                flagged_ids: outcome.flagged_ids,
                metrics,
            })?;
        }
        Command::SimulateYear { schedule, out } => {
            let interval: RetrainInterval = schedule.parse()?;
            let sim: YearSimulation = simulate_year(interval, &standard_feed(seed)?, seed)?;
            if let Some(path) = out {
                write_text(&path, &serde_json::to_string_pretty(&sim)?)?;
            }
            println!(
                "{}: {} events, mean R² gain per event {:.4}, baseline R² {:.4}",
                interval.as_str(),
                sim.events.len(),
                sim.mean_r2_gain_per_event,
                sim.baseline.r2
            );
            for e in &sim.events {
                println!(
                    "week {:>2}  v{:<3} rows {:>5}  R² {:.4}  gain {:+.4}",
                    e.week, e.version, e.training_rows, e.metrics.r2, e.r2_gain
                );
            }
        }
        Command::Serve { port, data, check_every } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(ServeConfig {
                port,
                data_dir: data,
                seed,
                check_every: Duration::from_secs(check_every.max(1)),
            }))?;
        }
        Command::Report { file, tables, cv, contamination, replay_days, format, out } => {
            let records = load(&file)?;
            let options =
                ReportOptions { tables: parse_tables(&tables)?, seed, cv_folds: cv, contamination, replay_days };
            let doc = report_for(&records, &options)?;
            let text = match format {
                OutputFormat::Markdown => doc.to_markdown(),
                OutputFormat::Json => serde_json::to_string_pretty(&doc)? + "\n",
            };
            match out {
                Some(path) => write_text(&path, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
