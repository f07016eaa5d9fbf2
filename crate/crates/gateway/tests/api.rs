use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use metrotwin_core::campaign::{build_design, campaign_epoch, generate_campaign, reference_campaign, DeviceModel};
use metrotwin_core::metrology::{reference_catalog, MeasurementRecord};
use metrotwin_core::ml::RegressorSpec;
use metrotwin_core::twin::{DigitalTwin, TwinConfig, VirtualClock};
use metrotwin_gateway::format::serialize_record;
use metrotwin_gateway::service::{router, AppState};

fn linear_config() -> TwinConfig {
    TwinConfig { spec: RegressorSpec::Linear, ..TwinConfig::default() }
}

fn app() -> Router {
    let twin = DigitalTwin::new(linear_config(), Arc::new(VirtualClock::new(campaign_epoch())));
    router(Arc::new(AppState::in_memory(twin)))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: String) -> (StatusCode, Value) {
    send(app, Request::post(uri).header("content-type", "application/json").body(Body::from(body)).unwrap()).await
}

async fn ingest_all(app: &Router, records: &[MeasurementRecord]) {
    for r in records {
        let (status, _) = post(app, "/measurements", serialize_record(r)).await;
        assert_eq!(status, StatusCode::CREATED);
    }
}

fn noiseless_campaign() -> Vec<MeasurementRecord> {
    let models: Vec<DeviceModel> =
        DeviceModel::reference_pair().into_iter().map(|m| DeviceModel { noise_sigma: 0.0, ..m }).collect();
    let design = build_design(&reference_catalog(0.05), &[20.0, 30.0], 2, 1).unwrap();
    generate_campaign(&design, &models, 1).unwrap()
}

fn is_error(body: &Value, code: &str) -> bool {
    body["code"] == code && body["message"].as_str().is_some_and(|m| !m.is_empty())
}

#[tokio::test]
async fn ingest_statuses_and_error_body() {
    let app = app();
    let rec = reference_campaign(3).unwrap().remove(0);
    let (status, ack) = post(&app, "/measurements", serialize_record(&rec)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(ack["duplicate"], false);
    let (status, ack) = post(&app, "/measurements", serialize_record(&rec)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["duplicate"], true);

    let mut bad: Value = serde_json::to_value(&rec).unwrap();
    bad["record_id"] = json!("other");
    bad["deviation_mm"] = json!(rec.deviation + 0.002);
    let (status, body) = post(&app, "/measurements", bad.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(is_error(&body, "validation"), "{body}");

    let (status, body) = post(&app, "/measurements", "{not json".into()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["code"].is_string());

    let (status, body) = get(&app, "/nowhere").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(is_error(&body, "not_found"));
}

#[tokio::test]
async fn regression_needs_enough_rows() {
    let app = app();
    ingest_all(&app, &reference_campaign(4).unwrap()[..3]).await;
    let (status, body) = get(&app, "/stats/regression").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(is_error(&body, "insufficient_data"), "{body}");
}

#[tokio::test]
async fn stats_and_filters() {
    let app = app();
    let records = reference_campaign(5).unwrap();
    ingest_all(&app, &records).await;
    let (status, body) = get(&app, "/measurements?device=FARO").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.as_array().unwrap().len(), 160);
    let cutoff = records[200].timestamp;
    let (_, body) = get(&app, &format!("/measurements?from={}", cutoff.to_rfc3339().replace('+', "%2B"))).await;
    let expected = records.iter().filter(|r| r.timestamp >= cutoff).count();
    assert_eq!(body.as_array().unwrap().len(), expected);
    let (status, body) = get(&app, "/measurements?device=caliper").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");

    let (status, body) = get(&app, "/stats/descriptive?device=CMM").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["unit"], "mm");
    assert_eq!(body["stats"]["n"], 160);
    let (status, body) = get(&app, "/stats/regression").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["regression"]["n"], 320);
    let (_, body) = get(&app, "/stats/pipeline").await;
    assert_eq!(body["store_size"], 320);
}

#[tokio::test]
async fn what_if_after_training() {
    let app = app();
    let q = json!({"nominal_mm": 100.0, "device": "CMM", "temperature_c": 30.0});
    let (status, body) = post(&app, "/whatif", q.to_string()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(is_error(&body, "unavailable"), "{body}");

    ingest_all(&app, &noiseless_campaign()).await;
    let (status, entry) = post(&app, "/train", json!({"model": "linear"}).to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{entry}");
    assert_eq!(entry["version"], 1);
    let (status, answer) = post(&app, "/whatif", q.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let um = answer["predicted_deviation_um"].as_f64().unwrap();
    assert!((um - 34.4).abs() < 1e-6, "{answer}");
    let (_, models) = get(&app, "/models").await;
    assert_eq!(models.as_array().unwrap().len(), 1);

    let (status, body) = post(&app, "/train", json!({"model": "perceptron"}).to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(is_error(&body, "validation"), "{body}");
}

#[tokio::test]
async fn alert_stream_emits_out_of_tolerance() {
    let app = app();
    let mut rec = reference_campaign(6).unwrap().remove(0);
    rec.measured_value += 1.0;
    rec.deviation = rec.measured_value - rec.nominal_value;
    post(&app, "/measurements", serialize_record(&rec)).await;

    let (_, listed) = get(&app, "/alerts?stream=false").await;
    assert_eq!(listed[0]["kind"], "OutOfTolerance");

    let resp = app.clone().oneshot(Request::get("/alerts").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();
    let frame = tokio::time::timeout(std::time::Duration::from_secs(5), body.frame()).await.unwrap().unwrap().unwrap();
    let text = String::from_utf8(frame.into_data().unwrap().to_vec()).unwrap();
    assert!(text.contains("event: alert"), "{text}");
    assert!(text.contains("id: 1"), "{text}");
    assert!(text.contains(&rec.record_id), "{text}");
}

#[tokio::test]
async fn simulate_quarterly_year() {
    let app = app();
    let (status, sim) =
        post(&app, "/simulate/year", json!({"schedule": "quarterly", "model": "linear"}).to_string()).await;
    assert_eq!(status, StatusCode::OK, "{sim}");
    assert_eq!(sim["events"].as_array().unwrap().len(), 4);
    let (status, _) = post(&app, "/simulate/year", json!({"schedule": "hourly"}).to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn detection_table_over_http() {
    let app = app();
    ingest_all(&app, &reference_campaign(7).unwrap()).await;
    let (status, doc) = get(&app, "/report?tables=4").await;
    assert_eq!(status, StatusCode::OK, "{doc}");
    assert_eq!(doc["anomaly_detection"]["flagged"], 16);
    assert!(doc["device_comparison"].is_null());
    let (status, body) = get(&app, "/report?tables=9").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let open = || {
        let clock = Arc::new(VirtualClock::new(campaign_epoch()));
        router(Arc::new(AppState::open(dir.path(), linear_config(), clock).unwrap()))
    };
    let mut records = reference_campaign(8).unwrap();
    records[0].measured_value += 1.0;
    records[0].deviation = records[0].measured_value - records[0].nominal_value;
    {
        let app = open();
        ingest_all(&app, &records).await;
        let (status, _) = post(&app, "/train", String::new()).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let app = open();
    let (_, stored) = get(&app, "/measurements").await;
    assert_eq!(stored.as_array().unwrap().len(), 320);
    let (_, models) = get(&app, "/models").await;
    assert_eq!(models[0]["version"], 1);
    let (_, alerts) = get(&app, "/alerts?stream=false").await;
    assert!(alerts.as_array().unwrap().iter().any(|a| a["record_id"] == records[0].record_id.as_str()));
    let (status, _) = post(&app, "/measurements", serialize_record(&records[1])).await;
    assert_eq!(status, StatusCode::OK);
    let (status, answer) =
        post(&app, "/whatif", json!({"nominal": 50.0, "device": "FARO", "temperature": 25.0}).to_string()).await;
    assert_eq!(status, StatusCode::OK, "{answer}");
}
