//! HTTP+JSON service over a [`DigitalTwin`].

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use metrotwin_core::metrology::{DeviceKind, MeasurementRecord};
use metrotwin_core::ml::RegressorSpec;
use metrotwin_core::report::{build_report, parse_tables, ReportOptions};
use metrotwin_core::stats::{descriptive_stats, deviation_regression, DescriptiveStats, RegressionResult};
use metrotwin_core::twin::{
    simulate_year_with, standard_feed, AlertDraft, AlertKind, Clock, DigitalTwin, IngestAck, RetrainInterval,
    RetrainingSchedule, Severity, SystemClock, TwinConfig, WhatIfQuery,
};
use metrotwin_core::Error as CoreError;

use crate::format::parse_value;
use crate::model_spec;
use crate::store::FileStore;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: message.into() }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let (status, code) = match &e {
            CoreError::Validation(_) | CoreError::SchemaMismatch { .. } => (StatusCode::BAD_REQUEST, "validation"),
            CoreError::Configuration(_) => (StatusCode::BAD_REQUEST, "configuration"),
            CoreError::InsufficientData { .. } => (StatusCode::CONFLICT, "insufficient_data"),
            CoreError::Unavailable(_) => (StatusCode::CONFLICT, "unavailable"),
            CoreError::Degenerate(_) | CoreError::SingularDesign { .. } | CoreError::UndefinedMetric(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "degenerate")
            }
            CoreError::Training { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "training_failed"),
        };
        ApiError { status, code, message: e.to_string() }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "storage", message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code.into(), message: self.message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    twin: Arc<DigitalTwin>,
    files: Option<FileStore>,
    ingest: Mutex<()>,
    training: tokio::sync::Mutex<()>,
    /// How often the alert stream checks for new alerts.
    pub alert_poll: Duration,
}

impl AppState {
    /// State with nothing on disk.
    pub fn in_memory(twin: DigitalTwin) -> Self {
        AppState {
            twin: Arc::new(twin),
            files: None,
            ingest: Mutex::new(()),
            training: tokio::sync::Mutex::new(()),
            alert_poll: Duration::from_millis(200),
        }
    }

    /// Restore the twin persisted under `dir`, creating it if needed.
    pub fn open(dir: impl Into<PathBuf>, config: TwinConfig, clock: Arc<dyn Clock>) -> anyhow::Result<Self> {
        let dir = dir.into();
        let files = FileStore::open(&dir).with_context(|| format!("opening data directory {}", dir.display()))?;
        let p = files.load().with_context(|| format!("loading {}", dir.display()))?;
        let twin = DigitalTwin::restore(config, clock, p.records, p.registry, p.alerts)?;
        Ok(AppState { files: Some(files), ..AppState::in_memory(twin) })
    }

    pub fn twin(&self) -> &Arc<DigitalTwin> {
        &self.twin
    }

    fn persist_alerts(&self) -> ApiResult<()> {
        if let Some(f) = &self.files {
            f.append_alerts(&self.twin.alerts().since(f.last_persisted_alert()))?;
        }
        Ok(())
    }

    fn persist_registry(&self) -> ApiResult<()> {
        if let Some(f) = &self.files {
            f.save_registry(&self.twin.registry().snapshot())?;
        }
        Ok(())
    }

    /// Durable append, then publish to the in-memory store.
    pub fn ingest(&self, record: MeasurementRecord) -> ApiResult<IngestAck> {
        record.validate()?;
        let _writer = self.ingest.lock().expect("ingest lock");
        if self.twin.store().get(&record.record_id).is_none() {
            if let Some(f) = &self.files {
                f.append_record(&record)?;
            }
        }
        let ack = self.twin.ingest(record)?;
        self.persist_alerts()?;
        Ok(ack)
    }

    /// Retrain off the async executor. Failures raise a training alert.
    pub async fn train(
        self: &Arc<Self>,
        spec: Option<RegressorSpec>,
    ) -> ApiResult<metrotwin_core::twin::ModelRegistryEntry> {
        let _one = self.training.lock().await;
        let me = Arc::clone(self);
        let result = tokio::task::spawn_blocking(move || {
            let now = me.twin.clock().now();
            let spec = spec.unwrap_or_else(|| me.twin.config().spec.clone());
            me.twin.retrain_with(&spec, now).inspect_err(|e| {
                me.twin.alerts().push(
                    AlertDraft {
                        kind: AlertKind::TrainingFailure,
                        severity: Severity::Critical,
                        record_id: None,
                        message: format!("retrain failed: {e}"),
                    },
                    now,
                );
            })
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
        self.persist_alerts()?;
        let entry = result?;
        self.persist_registry()?;
        Ok(entry)
    }

    /// One tick of the background trainer.
    pub async fn scheduled_tick(self: &Arc<Self>) -> ApiResult<bool> {
        let _one = self.training.lock().await;
        let me = Arc::clone(self);
        let result = tokio::task::spawn_blocking(move || me.twin.scheduled_update(me.twin.clock().now()))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
        self.persist_alerts()?;
        let published = result?.is_some();
        if published {
            self.persist_registry()?;
        }
        Ok(published)
    }
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn param<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    q.get(name)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| ApiError::bad_request(format!("query parameter `{name}`: {e}"))))
        .transpose()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/measurements", post(post_measurement).get(get_measurements))
        .route("/stats/descriptive", get(stats_descriptive))
        .route("/stats/regression", get(stats_regression))
        .route("/stats/pipeline", get(stats_pipeline))
        .route("/train", post(post_train))
        .route("/models", get(get_models))
        .route("/whatif", post(post_whatif))
        .route("/alerts", get(get_alerts))
        .route("/simulate/year", post(post_simulate_year))
        .route("/report", get(get_report))
        .fallback(|| async {
            ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: "no such endpoint".into() }
        })
        .with_state(state)
}

async fn post_measurement(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<IngestAck>)> {
    let value: serde_json::Value = json_body(&body)?;
    let record =
        parse_value(value).map_err(|m| ApiError { status: StatusCode::BAD_REQUEST, code: "validation", message: m })?;
    let ack = s.ingest(record)?;
    let status = if ack.duplicate { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(ack)))
}

async fn get_measurements(
    State(s): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Vec<MeasurementRecord>>> {
    let device: Option<DeviceKind> = param(&q, "device")?;
    let from: Option<DateTime<Utc>> = param(&q, "from")?;
    let snap = s.twin.store().snapshot();
    Ok(Json(
        snap.iter()
            .filter(|r| device.map_or(true, |d| r.device == d) && from.map_or(true, |t| r.timestamp >= t))
            .map(|r| (**r).clone())
            .collect(),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DescriptiveResponse {
    pub device: Option<DeviceKind>,
    pub unit: String,
    pub stats: DescriptiveStats,
}

async fn stats_descriptive(
    State(s): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<DescriptiveResponse>> {
    let device: Option<DeviceKind> = param(&q, "device")?;
    let values: Vec<f64> = s
        .twin
        .store()
        .snapshot()
        .iter()
        .filter(|r| r.is_linear_mm() && device.map_or(true, |d| r.device == d))
        .map(|r| r.deviation)
        .collect();
    Ok(Json(DescriptiveResponse { device, unit: "mm".into(), stats: descriptive_stats(&values)? }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegressionResponse {
    pub unit: String,
    pub regression: RegressionResult,
}

async fn stats_regression(State(s): State<Arc<AppState>>) -> ApiResult<Json<RegressionResponse>> {
    let records = s.twin.records();
    Ok(Json(RegressionResponse { unit: "mm".into(), regression: deviation_regression(&records)? }))
}

async fn stats_pipeline(State(s): State<Arc<AppState>>) -> Json<metrotwin_core::twin::PipelineStats> {
    Json(s.twin.stats())
}

#[derive(Debug, Default, Deserialize)]
struct TrainRequest {
    model: Option<String>,
    spec: Option<RegressorSpec>,
}

async fn post_train(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: TrainRequest = if body.is_empty() { TrainRequest::default() } else { json_body(&body)? };
    let spec = match (req.spec, req.model) {
        (Some(spec), _) => Some(spec),
        (None, Some(name)) => Some(model_spec(&name)?),
        (None, None) => None,
    };
    let entry = s.train(spec).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn get_models(State(s): State<Arc<AppState>>) -> impl IntoResponse {
    Json(s.twin.registry().entries())
}

async fn post_whatif(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let q: WhatIfQuery = json_body(&body)?;
    Ok(Json(s.twin.what_if(&q)?))
}

async fn get_alerts(State(s): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Response> {
    let after: u64 = param(&q, "after")?.unwrap_or(0);
    let stream: bool = param(&q, "stream")?.unwrap_or(true);
    if !stream {
        return Ok(Json(s.twin.alerts().since(after)).into_response());
    }
    Ok(Sse::new(alert_stream(s, after)).keep_alive(KeepAlive::default()).into_response())
}

fn alert_stream(s: Arc<AppState>, after: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let pending = std::collections::VecDeque::new();
    futures::stream::unfold((s, after, pending), |(s, mut after, mut pending)| async move {
        loop {
            if let Some(a) = pending.pop_front() {
                let a: metrotwin_core::twin::Alert = a;
                let ev =
                    Event::default().event("alert").id(a.alert_id.to_string()).json_data(&a).expect("alerts serialize");
                return Some((Ok(ev), (s, after, pending)));
            }
            let fresh = s.twin.alerts().since(after);
            if let Some(last) = fresh.last() {
                after = last.alert_id;
                pending.extend(fresh);
                continue;
            }
            tokio::time::sleep(s.alert_poll).await;
        }
    })
}

#[derive(Debug, Deserialize)]
struct SimulateRequest {
    schedule: String,
    seed: Option<u64>,
    model: Option<String>,
    spec: Option<RegressorSpec>,
}

async fn post_simulate_year(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: SimulateRequest = json_body(&body)?;
    let interval: RetrainInterval = req.schedule.parse()?;
    let seed = req.seed.unwrap_or(s.twin.config().seed);
    let spec = match (req.spec, req.model) {
        (Some(spec), _) => spec,
        (None, Some(name)) => model_spec(&name)?,
        (None, None) => s.twin.config().spec.clone(),
    };
    let sim = tokio::task::spawn_blocking(move || {
        let config = TwinConfig {
            spec,
            seed,
            schedule: RetrainingSchedule { interval, update_cadence_hours: 24, min_new_rows: 1 },
            ..TwinConfig::default()
        };
        simulate_year_with(config, &standard_feed(seed)?)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(sim))
}

/// Query parameters shared with the `report` subcommand.
pub fn report_options(q: &HashMap<String, String>, default_seed: u64) -> ApiResult<ReportOptions> {
    let mut o = ReportOptions { seed: default_seed, ..ReportOptions::default() };
    if let Some(t) = q.get("tables") {
        o.tables = parse_tables(t)?;
    }
    if let Some(v) = param(q, "seed")? {
        o.seed = v;
    }
    if let Some(v) = param(q, "cv")? {
        o.cv_folds = v;
    }
    if let Some(v) = param(q, "contamination")? {
        o.contamination = v;
    }
    if let Some(v) = param(q, "replay_days")? {
        o.replay_days = v;
    }
    Ok(o)
}

async fn get_report(
    State(s): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let options = report_options(&q, s.twin.config().seed)?;
    let records = s.twin.records();
    let doc = tokio::task::spawn_blocking(move || build_report(&records, &options))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(doc))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub seed: u64,
    /// Interval between scheduled-update checks.
    pub check_every: Duration,
}

/// Bind, restore state and serve until interrupted.
pub async fn serve(config: ServeConfig) -> anyhow::Result<()> {
    let twin_config = TwinConfig { seed: config.seed, ..TwinConfig::default() };
    let state = Arc::new(AppState::open(&config.data_dir, twin_config, Arc::new(SystemClock))?);
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener =
        tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding port {}", config.port))?;
    tracing::info!(%addr, records = state.twin().store().len(), "serving");

    let ticker = Arc::clone(&state);
    let every = config.check_every;
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(every);
        loop {
            interval.tick().await;
            match ticker.scheduled_tick().await {
                Ok(true) => tracing::info!("scheduled update published"),
                Ok(false) => {}
                Err(e) => tracing::warn!(code = e.code, "scheduled update failed: {}", e.message),
            }
        }
    });

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
