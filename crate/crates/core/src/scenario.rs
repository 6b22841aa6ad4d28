//! Deterministic keep-alive probe simulator.
//!
//! A scenario is line-oriented UTF-8 text:
//!
//! ```text
//! # comment                     blank lines and `#` comments are ignored
//! monitor <id> interval <secs>  declare a probe and its interval (secs > 0)
//! down <id> <start> <end>       the monitored product is down on [start, end)
//! ```
//!
//! Tokens are separated by spaces or tabs; a `#` starts a comment anywhere on
//! a line. Timestamps are RFC 3339. A `down` line must name a monitor declared
//! on an earlier line. Probes run on the epoch-aligned grid of the monitor's
//! interval, and every probe instant inside a down interval emits one firing
//! with value `0`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::DateTime;
use serde::{Deserialize, Serialize};

use crate::alert::{AlertEvent, MonitorId};
use crate::time::{self, TimeInterval, Timestamp};

/// Observed value reported by a failed probe.
pub const DOWN_VALUE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeMonitor {
    pub id: MonitorId,
    pub interval_seconds: i64,
    pub down: Vec<TimeInterval>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub monitors: Vec<ProbeMonitor>,
}

fn parse_ts(token: &str, line: usize) -> Result<Timestamp, ScenarioError> {
    DateTime::parse_from_rfc3339(token)
        .map(|t| time::truncate(t.to_utc()))
        .map_err(|e| ScenarioError { line, message: format!("bad timestamp `{token}`: {e}") })
}

pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let mut order: Vec<MonitorId> = Vec::new();
    let mut monitors: BTreeMap<MonitorId, ProbeMonitor> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split([' ', '\t']).filter(|t| !t.is_empty()).collect();
        let err = |message: String| ScenarioError { line, message };
        match tokens.as_slice() {
            [] => {}
            ["monitor", id, "interval", secs] => {
                let interval: i64 = secs
                    .parse()
                    .ok()
                    .filter(|s| *s > 0)
                    .ok_or_else(|| err(format!("interval must be a positive integer, got `{secs}`")))?;
                if monitors.contains_key(*id) {
                    return Err(err(format!("monitor `{id}` declared twice")));
                }
                order.push(id.to_string());
                monitors.insert(
                    id.to_string(),
                    ProbeMonitor { id: id.to_string(), interval_seconds: interval, down: Vec::new() },
                );
            }
            ["monitor", ..] => return Err(err("expected `monitor <id> interval <seconds>`".into())),
            ["down", id, start, end] => {
                let start = parse_ts(start, line)?;
                let end = parse_ts(end, line)?;
                let iv = TimeInterval::new(start, end).map_err(|e| err(e.to_string()))?;
                monitors
                    .get_mut(*id)
                    .ok_or_else(|| err(format!("down references undeclared monitor `{id}`")))?
                    .down
                    .push(iv);
            }
            ["down", ..] => return Err(err("expected `down <id> <start> <end>`".into())),
            [other, ..] => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    let monitors = order.into_iter().filter_map(|id| monitors.remove(&id)).collect();
    Ok(Scenario { monitors })
}

/// Expands a scenario into firings ordered by time, then monitor id.
pub fn events(scenario: &Scenario) -> Vec<AlertEvent> {
    let mut out = Vec::new();
    for m in &scenario.monitors {
        let mut instants = BTreeSet::new();
        for iv in time::union(m.down.iter().copied()) {
            let step = m.interval_seconds;
            let mut t = iv.start_secs().div_euclid(step) * step;
            if t < iv.start_secs() {
                t += step;
            }
            while t < iv.end_secs() {
                instants.insert(t);
                t += step;
            }
        }
        out.extend(instants.into_iter().map(|t| AlertEvent {
            monitor_id: m.id.clone(),
            fired_at: time::from_epoch(t),
            value: DOWN_VALUE,
            message: "keep-alive probe failed".into(),
        }));
    }
    out.sort_by(|a, b| a.fired_at.cmp(&b.fired_at).then_with(|| a.monitor_id.cmp(&b.monitor_id)));
    out
}

/// Parses and expands in one step.
pub fn run_probe_scenario(text: &str) -> Result<Vec<AlertEvent>, ScenarioError> {
    parse(text).map(|s| events(&s))
}
