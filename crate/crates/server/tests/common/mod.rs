//! In-process HTTP helpers over the router.
#![allow(dead_code)]

use std::sync::Arc;

use availd::{router, AppState};
use availd_core::clock::ManualClock;
use availd_core::config::ServiceConfig;
use availd_core::service::Service;
use availd_core::time::{TimeInterval, Timestamp};
use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct Harness {
    pub app: Router,
    pub state: AppState,
    pub clock: Arc<ManualClock>,
}

impl Harness {
    pub fn new(config: ServiceConfig, now: Timestamp) -> Self {
        Self::with_service(Service::in_memory(config), now, None)
    }

    pub fn with_service(service: Service, now: Timestamp, period: Option<TimeInterval>) -> Self {
        let clock = Arc::new(ManualClock::new(now));
        let state = AppState::new(service, clock.clone(), period);
        Self { app: router(state.clone()), state, clock }
    }

    pub async fn raw(&self, method: Method, uri: &str, actor: Option<&str>, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(a) = actor {
            req = req.header("x-actor", a);
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: Method, uri: &str, actor: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, actor, body).await;
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None, None).await
    }

    pub async fn post(&self, uri: &str, actor: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(actor), Some(body)).await
    }
}

/// Probe scenario: P1's keep-alive fails for four hours on 2025-03-12.
pub const FOUR_HOUR_OUTAGE: &str = "\
# P1 keep-alive, five-minute probes
monitor probe-p1 interval 300
down probe-p1 2025-03-12T04:00:00Z 2025-03-12T08:00:00Z
";

pub const MARCH: &str = "from=2025-03-01T00:00:00Z&to=2025-04-01T00:00:00Z";

pub struct EndToEnd {
    pub incident_id: String,
    pub alerts_accepted: usize,
    pub created: usize,
    pub attached: usize,
    pub record: Value,
    pub percent: Value,
    pub minutes: Value,
    pub dashboard_before: Value,
    pub dashboard_after: Value,
    pub month_dashboard: Value,
}

/// Drives the probe scenario through the webhook, works and closes the
/// resulting incident, confirms its record and reads the figures back.
pub async fn run_end_to_end(h: &Harness) -> EndToEnd {
    use serde_json::json;
    let events = availd_core::scenario::run_probe_scenario(FOUR_HOUR_OUTAGE).unwrap();
    let (mut accepted, mut created, mut attached) = (0, 0, 0);
    let mut incident_id = String::new();
    for e in &events {
        h.clock.set(e.fired_at);
        let (status, outcome) = h.call(Method::POST, "/api/v1/alerts", None, Some(serde_json::to_value(e).unwrap())).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{outcome}");
        accepted += 1;
        match outcome["classification"].as_str() {
            Some("created") => {
                created += 1;
                incident_id = outcome["incident_id"].as_str().unwrap().to_string();
            }
            Some("attached") => attached += 1,
            other => panic!("unexpected classification {other:?}"),
        }
    }
    let restored = "2025-03-12T08:00:00Z";
    h.clock.set("2025-03-12T08:10:00Z".parse().unwrap());
    let base = format!("/api/v1/incidents/{incident_id}");
    for body in [
        json!({ "to": "Classified", "severity": "Sev1" }),
        json!({ "to": "InProgress" }),
        json!({ "to": "Resolved", "repaired_at": restored, "recovered_at": restored, "restored_at": restored }),
    ] {
        let (status, v) = h.post(&format!("{base}/transition"), "oncall", body).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
    let (_, dashboard_before) = h.get("/api/v1/dashboard").await;
    h.clock.set("2025-03-12T09:00:00Z".parse().unwrap());
    let (status, closed) = h.call(Method::POST, &format!("{base}/close"), Some("oncall"), None).await;
    assert_eq!(status, StatusCode::OK, "{closed}");
    let record_id = closed["outage_record"]["id"].as_str().expect("closing drafts a record").to_string();
    h.clock.set("2025-03-13T10:00:00Z".parse().unwrap());
    let (status, record) =
        h.post(&format!("/api/v1/outage-records/{record_id}/review"), "rita", json!({ "decision": "confirm" })).await;
    assert_eq!(status, StatusCode::OK, "{record}");
    let (_, dashboard_after) = h.get("/api/v1/dashboard").await;
    let (_, percent) = h.get(&format!("/api/v1/products/P1/availability?{MARCH}")).await;
    let (_, minutes) = h.get(&format!("/api/v1/products/P1/availability?{MARCH}&view=minutes")).await;
    let (_, month_dashboard) = h.get(&format!("/api/v1/dashboard?{MARCH}")).await;
    EndToEnd {
        incident_id,
        alerts_accepted: accepted,
        created,
        attached,
        record,
        percent,
        minutes,
        dashboard_before,
        dashboard_after,
        month_dashboard,
    }
}
