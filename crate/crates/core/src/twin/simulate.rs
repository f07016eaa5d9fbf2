//! A year of weekly measurement batches replayed through the twin under a
//! retraining schedule, on a virtual clock.

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Clock, DigitalTwin, RetrainInterval, RetrainingSchedule, TwinConfig, VirtualClock};
use crate::campaign::{build_design_at, campaign_epoch, generate_campaign, DeviceModel, REFERENCE_TEMPERATURES};
use crate::error::{Error, Result};
use crate::metrology::{default_tolerance_band, reference_catalog, MeasurementRecord};
use crate::ml::EvalMetrics;

pub const WEEKS_PER_YEAR: u32 = 52;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFeed {
    /// First instant of week 1.
    pub start: DateTime<Utc>,
    /// Store contents before the year begins.
    pub initial: Vec<MeasurementRecord>,
    /// One batch per week, timestamped inside that week.
    pub weeks: Vec<Vec<MeasurementRecord>>,
}

impl DataFeed {
    pub fn total_records(&self) -> usize {
        self.initial.len() + self.weeks.iter().map(Vec::len).sum::<usize>()
    }
}

pub const STANDARD_INITIAL_ROWS: usize = 40;
pub const STANDARD_WEEKLY_ROWS: usize = 24;

fn sampled_campaign(seed: u64, start: DateTime<Utc>, take: usize) -> Result<Vec<MeasurementRecord>> {
    let models = DeviceModel::reference_pair();
    let band = default_tolerance_band(&models.iter().map(|m| m.noise_sigma).collect::<Vec<_>>());
    let design = build_design_at(&reference_catalog(band), &REFERENCE_TEMPERATURES, 1, seed, start)?;
    let all = generate_campaign(&design, &models, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0xA5A5);
    let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, all.len(), take.min(all.len())).into_iter().collect();
    pick.sort_unstable();
    Ok(pick.into_iter().map(|i| all[i].clone()).collect())
}

/// 40 records before the year starts, then 24 per week drawn from a
/// fresh reference-catalog campaign each week.
pub fn standard_feed(seed: u64) -> Result<DataFeed> {
    let start = campaign_epoch();
    let base = seed.wrapping_mul(100);
    let initial = sampled_campaign(base, start - Duration::days(3), STANDARD_INITIAL_ROWS)?;
    let weeks = (1..=u64::from(WEEKS_PER_YEAR))
        .map(|w| sampled_campaign(base + w, start + Duration::weeks(w as i64 - 1), STANDARD_WEEKLY_ROWS))
        .collect::<Result<Vec<_>>>()?;
    Ok(DataFeed { start, initial, weeks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainEvent {
    pub week: u32,
    pub version: u64,
    pub training_rows: usize,
    pub metrics: EvalMetrics,
    /// CV R² gain over the previously active model.
    pub r2_gain: f64,
    /// Previous CV RMSE minus this one (µm).
    pub rmse_reduction: f64,
    pub cumulative_r2_gain: f64,
    pub cumulative_rmse_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub week: u32,
    pub active_version: u64,
    pub cumulative_r2_gain: f64,
    pub cumulative_rmse_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSimulation {
    pub interval: RetrainInterval,
    pub baseline: EvalMetrics,
    pub events: Vec<RetrainEvent>,
    /// Week 0 through week 52.
    pub trajectory: Vec<TrajectoryPoint>,
    pub mean_r2_gain_per_event: f64,
    pub mean_rmse_reduction_per_event: f64,
}

/// Replay `feed` under `interval` with the default twin configuration.
pub fn simulate_year(interval: RetrainInterval, feed: &DataFeed, seed: u64) -> Result<YearSimulation> {
    let config = TwinConfig {
        schedule: RetrainingSchedule { interval, update_cadence_hours: 24, min_new_rows: 1 },
        seed,
        ..TwinConfig::default()
    };
    simulate_year_with(config, feed)
}

/// Replay with an explicit configuration; retraining goes through the
/// same `scheduled_update` path a live twin uses.
pub fn simulate_year_with(config: TwinConfig, feed: &DataFeed) -> Result<YearSimulation> {
    if feed.initial.is_empty() || feed.weeks.is_empty() {
        return Err(Error::InsufficientData { what: "year simulation feed", needed: 1, got: 0 });
    }
    if feed.weeks.len() != WEEKS_PER_YEAR as usize {
        return Err(Error::Validation(format!("feed covers {} weeks, expected {WEEKS_PER_YEAR}", feed.weeks.len())));
    }
    let interval = config.schedule.interval;
    let clock = Arc::new(VirtualClock::new(feed.start));
    let twin = DigitalTwin::new(config, clock.clone());
    let ingest_at = |r: &MeasurementRecord| -> Result<()> {
        if r.timestamp > clock.now() {
            clock.set(r.timestamp);
        }
        twin.ingest(r.clone()).map(|_| ())
    };
    for r in &feed.initial {
        ingest_at(r)?;
    }
    clock.set(feed.start);
    let first = twin.retrain(feed.start)?;
    let baseline = first.metrics;

    let due: Vec<u32> = interval.event_weeks();
    let mut events = Vec::with_capacity(due.len());
    let mut trajectory = vec![TrajectoryPoint {
        week: 0,
        active_version: first.version,
        cumulative_r2_gain: 0.0,
        cumulative_rmse_reduction: 0.0,
    }];
    let mut prev = baseline;
    for (w, batch) in (1..=WEEKS_PER_YEAR).zip(&feed.weeks) {
        for r in batch {
            ingest_at(r)?;
        }
        let boundary = feed.start + Duration::weeks(i64::from(w));
        clock.set(boundary);
        if due.contains(&w) {
            let entry = twin
                .scheduled_update(boundary)?
                .ok_or_else(|| Error::Configuration(format!("retrain due in week {w} did not run")))?;
            events.push(RetrainEvent {
                week: w,
                version: entry.version,
                training_rows: entry.training_count,
                metrics: entry.metrics,
                r2_gain: entry.metrics.r2 - prev.r2,
                rmse_reduction: prev.rmse - entry.metrics.rmse,
                cumulative_r2_gain: entry.metrics.r2 - baseline.r2,
                cumulative_rmse_reduction: baseline.rmse - entry.metrics.rmse,
            });
            prev = entry.metrics;
        }
        let active = twin.registry().active().expect("published before the loop");
        trajectory.push(TrajectoryPoint {
            week: w,
            active_version: active.entry.version,
            cumulative_r2_gain: active.entry.metrics.r2 - baseline.r2,
            cumulative_rmse_reduction: baseline.rmse - active.entry.metrics.rmse,
        });
    }
    let n = events.len().max(1) as f64;
    Ok(YearSimulation {
        interval,
        baseline,
        mean_r2_gain_per_event: events.iter().map(|e| e.r2_gain).sum::<f64>() / n,
        mean_rmse_reduction_per_event: events.iter().map(|e| e.rmse_reduction).sum::<f64>() / n,
        events,
        trajectory,
    })
}

pub const REPLAY_RATE_PER_HOUR: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayUpdate {
    pub version: u64,
    pub hour: u32,
    pub training_rows: usize,
    pub cv_r2: f64,
    pub r2_delta: Option<f64>,
    pub convergence_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReplay {
    pub hours: u32,
    pub ingested: usize,
    /// Includes the initial fit at hour 0.
    pub updates: Vec<ReplayUpdate>,
    pub final_stats: super::PipelineStats,
    /// Over scheduled updates only.
    pub mean_r2_delta: Option<f64>,
    pub mean_convergence_minutes: f64,
}

/// Seed the twin with `initial`, fit once, then stream 50 fresh records
/// per virtual hour for `days` days, offering a scheduled update at the
/// end of every hour.
pub fn replay_pipeline(config: TwinConfig, initial: &[MeasurementRecord], days: u32) -> Result<PipelineReplay> {
    if initial.is_empty() {
        return Err(Error::InsufficientData { what: "pipeline replay", needed: 1, got: 0 });
    }
    let seed = config.seed;
    let start = initial.iter().map(|r| r.timestamp).max().expect("non-empty");
    let clock = Arc::new(VirtualClock::new(start));
    let twin = DigitalTwin::new(config, clock.clone());
    for r in initial {
        twin.ingest(r.clone())?;
    }
    let first = twin.retrain(start)?;
    let mut updates = vec![ReplayUpdate {
        version: first.version,
        hour: 0,
        training_rows: first.training_count,
        cv_r2: first.metrics.r2,
        r2_delta: first.r2_delta,
        convergence_minutes: first.convergence_minutes,
    }];
    let spacing = Duration::seconds(3600 / REPLAY_RATE_PER_HOUR as i64);
    let hours = days * 24;
    let mut ingested = 0;
    for h in 0..hours {
        let hour_start = start + Duration::hours(i64::from(h));
        let batch =
            sampled_campaign(seed.wrapping_mul(10_007).wrapping_add(u64::from(h)), hour_start, REPLAY_RATE_PER_HOUR)?;
        for (i, mut r) in batch.into_iter().enumerate() {
            let at = hour_start + spacing * i as i32;
            r.record_id = format!("P{seed:05}-{h:04}-{i:02}");
            r.timestamp = at;
            clock.set(at);
            twin.ingest(r)?;
            ingested += 1;
        }
        let hour_end = hour_start + Duration::hours(1);
        clock.set(hour_end);
        if let Some(e) = twin.scheduled_update(hour_end)? {
            updates.push(ReplayUpdate {
                version: e.version,
                hour: h + 1,
                training_rows: e.training_count,
                cv_r2: e.metrics.r2,
                r2_delta: e.r2_delta,
                convergence_minutes: e.convergence_minutes,
            });
        }
    }
    let deltas: Vec<f64> = updates.iter().skip(1).filter_map(|u| u.r2_delta).collect();
    Ok(PipelineReplay {
        hours,
        ingested,
        final_stats: twin.stats(),
        mean_r2_delta: (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64),
        mean_convergence_minutes: updates.iter().map(|u| u.convergence_minutes).sum::<f64>() / updates.len() as f64,
        updates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{BoostingParams, ForestParams, RegressorSpec};

    fn light_config(interval: RetrainInterval) -> TwinConfig {
        TwinConfig {
            spec: RegressorSpec::Ensemble {
                rf: ForestParams { n_trees: 10, ..Default::default() },
                gb: BoostingParams { n_rounds: 10, ..Default::default() },
            },
            schedule: RetrainingSchedule { interval, update_cadence_hours: 24, min_new_rows: 1 },
            ..TwinConfig::default()
        }
    }

    #[test]
    fn feed_shape() {
        let feed = standard_feed(1).unwrap();
        assert_eq!(feed.initial.len(), 40);
        assert_eq!(feed.weeks.len(), 52);
        for (w, batch) in feed.weeks.iter().enumerate() {
            let lo = feed.start + Duration::weeks(w as i64);
            assert!(batch.iter().all(|r| r.timestamp >= lo && r.timestamp < lo + Duration::weeks(1)));
        }
        let mut ids: Vec<&str> =
            feed.weeks.iter().flatten().chain(&feed.initial).map(|r| r.record_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), feed.total_records());
    }

    #[test]
    fn quarterly_events_and_stepped_trajectory() {
        let feed = standard_feed(2).unwrap();
        let sim = simulate_year_with(light_config(RetrainInterval::Quarterly), &feed).unwrap();
        assert_eq!(sim.events.iter().map(|e| e.week).collect::<Vec<_>>(), vec![13, 26, 39, 52]);
        assert_eq!(sim.trajectory.len(), 53);
        for pair in sim.trajectory.windows(2) {
            if pair[1].week % 13 != 0 {
                assert_eq!(pair[1].cumulative_r2_gain, pair[0].cumulative_r2_gain);
            }
        }
        let again = simulate_year_with(light_config(RetrainInterval::Quarterly), &feed).unwrap();
        assert_eq!(sim, again);
    }

    #[test]
    fn replay_updates_once_per_day_at_fifty_per_hour() {
        let initial = crate::campaign::reference_campaign(3).unwrap();
        let config = TwinConfig { seed: 3, ..light_config(RetrainInterval::Weekly) };
        let replay = replay_pipeline(config, &initial, 2).unwrap();
        assert_eq!(replay.ingested, 2 * 24 * 50);
        assert_eq!(replay.updates.iter().map(|u| u.hour).collect::<Vec<_>>(), vec![0, 24, 48]);
        assert_eq!(replay.final_stats.ingestion_rate, 50.0);
        assert_eq!(replay.final_stats.store_size, 320 + 2400);
        assert!(replay.mean_r2_delta.is_some());
    }

    #[test]
    fn empty_feed_is_an_error() {
        let feed = DataFeed { start: campaign_epoch(), initial: vec![], weeks: vec![] };
        assert!(simulate_year(RetrainInterval::Weekly, &feed, 0).is_err());
    }
}
