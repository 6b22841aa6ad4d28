//! Threshold alert intake: classify each monitor firing as a new incident, an
//! attachment to an active one, or noise.

use std::collections::BTreeMap;
use std::fmt;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::incident::{IncidentId, IncidentSource, NewIncident, ProductId, Severity};
use crate::time::Timestamp;

pub type MonitorId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonitorLayer {
    Infrastructure,
    ExternalProbe,
    Apm,
    CustomLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gt => ">",
            Self::Ge => ">=",
            Self::Lt => "<",
            Self::Le => "<=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub comparator: Comparator,
    pub value: f64,
}

impl Threshold {
    pub fn violated_by(&self, observed: f64) -> bool {
        match self.comparator {
            Comparator::Gt => observed > self.value,
            Comparator::Ge => observed >= self.value,
            Comparator::Lt => observed < self.value,
            Comparator::Le => observed <= self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorProfile {
    pub monitor_id: MonitorId,
    pub product_id: ProductId,
    pub layer: MonitorLayer,
    pub metric: String,
    pub threshold: Threshold,
    pub severity_on_fire: Severity,
    pub dedup_window_seconds: i64,
    /// Whether a firing means the product is down. Defaults to true for
    /// external probes only.
    #[serde(default)]
    pub marks_outage: Option<bool>,
}

impl MonitorProfile {
    pub fn marks_outage(&self) -> bool {
        self.marks_outage.unwrap_or(self.layer == MonitorLayer::ExternalProbe)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.monitor_id.trim().is_empty() {
            return Err("monitor_id must not be empty".into());
        }
        if self.dedup_window_seconds <= 0 {
            return Err(format!("monitor {}: dedup_window_seconds must be positive", self.monitor_id));
        }
        if !self.threshold.value.is_finite() {
            return Err(format!("monitor {}: threshold must be finite", self.monitor_id));
        }
        Ok(())
    }
}

/// One monitor firing as received on the webhook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub monitor_id: MonitorId,
    pub fired_at: Timestamp,
    pub value: f64,
    #[serde(default)]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlertError {
    #[error("unknown monitor `{0}`")]
    UnknownMonitor(MonitorId),
    #[error("invalid alert: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Created,
    Attached,
    Ignored,
    Rejected,
}

/// Recorded outcome for one received event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertOutcome {
    pub classification: Classification,
    pub incident_id: Option<IncidentId>,
    /// The same (monitor, fired_at) was seen before; the earlier outcome stands.
    #[serde(default)]
    pub duplicate: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertCounters {
    pub received: u64,
    pub created: u64,
    pub attached: u64,
    pub ignored: u64,
    pub rejected: u64,
}

impl AlertCounters {
    pub fn record(&mut self, c: Classification) {
        self.received += 1;
        match c {
            Classification::Created => self.created += 1,
            Classification::Attached => self.attached += 1,
            Classification::Ignored => self.ignored += 1,
            Classification::Rejected => self.rejected += 1,
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.created + self.attached + self.ignored + self.rejected == self.received
    }
}

/// The incident currently collecting firings for a monitor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveAlert {
    pub incident_id: IncidentId,
    pub last_fired_at: Timestamp,
}

/// Per-monitor dedup state and counters. Keys of `seen` are
/// `"<monitor_id>@<fired_at>"` so the map serializes as a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertTracker {
    pub active: BTreeMap<MonitorId, ActiveAlert>,
    pub seen: BTreeMap<String, AlertOutcome>,
    pub counters: AlertCounters,
}

pub fn dedup_key(monitor_id: &str, fired_at: Timestamp) -> String {
    format!("{monitor_id}@{}", fired_at.to_rfc3339())
}

/// What the caller should do with an event.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Open(NewIncident),
    Attach(IncidentId),
    /// Non-violating value. `recovery_of` names an active incident the
    /// reading should be noted on.
    Ignore { recovery_of: Option<IncidentId> },
    Replayed(AlertOutcome),
}

pub fn validate_event(event: &AlertEvent) -> Result<(), AlertError> {
    if event.monitor_id.trim().is_empty() {
        return Err(AlertError::Invalid("monitor_id must not be empty".into()));
    }
    if !event.value.is_finite() {
        return Err(AlertError::Invalid("value must be a finite number".into()));
    }
    Ok(())
}

/// Classifies an event against monitor profiles and the current dedup state.
///
/// `is_active` reports whether an incident id is still being worked.
pub fn ingest_alert<'a, F>(
    event: &AlertEvent,
    profiles: impl IntoIterator<Item = &'a MonitorProfile>,
    tracker: &AlertTracker,
    is_active: F,
    now: Timestamp,
) -> Result<Decision, AlertError>
where
    F: Fn(&str) -> bool,
{
    validate_event(event)?;
    let profile = profiles
        .into_iter()
        .find(|p| p.monitor_id == event.monitor_id)
        .ok_or_else(|| AlertError::UnknownMonitor(event.monitor_id.clone()))?;
    let fired_at = crate::time::truncate(event.fired_at);

    if let Some(prev) = tracker.seen.get(&dedup_key(&event.monitor_id, fired_at)) {
        return Ok(Decision::Replayed(prev.clone()));
    }

    let window = Duration::seconds(profile.dedup_window_seconds);
    let active = tracker
        .active
        .get(&event.monitor_id)
        .filter(|a| is_active(&a.incident_id))
        .filter(|a| (fired_at - a.last_fired_at).abs() <= window);

    if !profile.threshold.violated_by(event.value) {
        return Ok(Decision::Ignore { recovery_of: active.map(|a| a.incident_id.clone()) });
    }
    if let Some(a) = active {
        return Ok(Decision::Attach(a.incident_id.clone()));
    }

    let now = crate::time::truncate(now);
    let message = if event.message.trim().is_empty() {
        String::new()
    } else {
        format!(": {}", event.message.trim())
    };
    Ok(Decision::Open(NewIncident {
        product_ids: vec![profile.product_id.clone()],
        severity: profile.severity_on_fire,
        causes_outage: profile.marks_outage(),
        source: IncidentSource::Alert,
        title: format!(
            "{} {} {} on {}{}",
            profile.metric, profile.threshold.comparator, profile.threshold.value, profile.monitor_id, message
        ),
        description: format!("observed {} at {}", event.value, fired_at.to_rfc3339()),
        occurred_at: Some(fired_at.min(now)),
    }))
}
