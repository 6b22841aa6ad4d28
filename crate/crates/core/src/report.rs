//! Availability views, the SLA dashboard, and the executive report.
//!
//! Everything here is a pure function of configuration, ledger state and the
//! requested period.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::alert::AlertCounters;
use crate::change::{self, ChangeState};
use crate::config::{ProductConfig, ServiceConfig};
use crate::incident::{incident_statistics, IncidentStatistics, ProductId};
use crate::ledger::Ledger;
use crate::metrics::{
    self, compute_availability, evaluate_sla, expand_schedule, lifecycle_metrics, minutes, round_percent,
    AvailabilityResult, LifecycleMetrics, MetricsError,
};
use crate::outage::downtime_ledger;
use crate::problem::{rca_backlog_report, RcaBacklog};
use crate::time::{self, TimeInterval, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    NoPlannedUptime,
}

/// SLA standing of one product over a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityView {
    pub product_id: ProductId,
    pub name: String,
    pub period: TimeInterval,
    pub sla_target_percent: f64,
    pub status: RowStatus,
    pub planned_seconds: i64,
    pub downtime_seconds: i64,
    pub uptime_seconds: i64,
    /// Rounded to four decimals; `None` without planned uptime.
    pub availability_percent: Option<f64>,
    pub allowed_downtime_seconds: f64,
    pub met: Option<bool>,
    /// Allowed minus actual downtime; negative on breach.
    pub margin_seconds: Option<f64>,
}

impl AvailabilityView {
    pub fn minutes(&self) -> MinutesView {
        MinutesView {
            product_id: self.product_id.clone(),
            period: self.period,
            sla_target_percent: self.sla_target_percent,
            status: self.status,
            planned_minutes: minutes(self.planned_seconds as f64),
            downtime_minutes: minutes(self.downtime_seconds as f64),
            allowed_downtime_minutes: minutes(self.allowed_downtime_seconds),
            met: self.met,
            margin_minutes: self.margin_seconds.map(minutes),
        }
    }

    pub fn row(&self) -> DashboardRow {
        DashboardRow {
            product_id: self.product_id.clone(),
            name: self.name.clone(),
            sla_target_percent: self.sla_target_percent,
            availability_percent: self.availability_percent,
            planned_minutes: minutes(self.planned_seconds as f64),
            downtime_minutes: minutes(self.downtime_seconds as f64),
            allowed_downtime_minutes: minutes(self.allowed_downtime_seconds),
            margin_minutes: self.margin_seconds.map(minutes),
            met: self.met,
            status: self.status,
        }
    }
}

/// The same figures expressed as minutes, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinutesView {
    pub product_id: ProductId,
    pub period: TimeInterval,
    pub sla_target_percent: f64,
    pub status: RowStatus,
    pub planned_minutes: f64,
    pub downtime_minutes: f64,
    pub allowed_downtime_minutes: f64,
    pub met: Option<bool>,
    pub margin_minutes: Option<f64>,
}

pub fn product_availability(
    product: &ProductConfig,
    ledger: &Ledger,
    period: &TimeInterval,
) -> Result<AvailabilityView, MetricsError> {
    let schedule = product.operations_schedule().map_err(MetricsError::InvalidSchedule)?;
    let planned = expand_schedule(&schedule, period)?;
    let downtime = downtime_ledger(ledger.outage_records.values(), &product.id, period);
    let target = product.sla_target_percent;
    let base = AvailabilityView {
        product_id: product.id.clone(),
        name: product.display_name().to_string(),
        period: *period,
        sla_target_percent: target,
        status: RowStatus::NoPlannedUptime,
        planned_seconds: 0,
        downtime_seconds: 0,
        uptime_seconds: 0,
        availability_percent: None,
        allowed_downtime_seconds: 0.0,
        met: None,
        margin_seconds: None,
    };
    match compute_availability(&planned, &downtime) {
        Ok(result) => Ok(with_result(base, target, &result)),
        Err(MetricsError::NoPlannedUptime) => Ok(base),
        Err(e) => Err(e),
    }
}

fn with_result(base: AvailabilityView, target: f64, result: &AvailabilityResult) -> AvailabilityView {
    let breach = evaluate_sla(target, result);
    AvailabilityView {
        status: RowStatus::Ok,
        planned_seconds: result.planned_seconds,
        downtime_seconds: result.downtime_seconds,
        uptime_seconds: result.uptime_seconds,
        availability_percent: Some(round_percent(result.availability_percent)),
        allowed_downtime_seconds: metrics::downtime_budget(target, result.planned_seconds),
        met: Some(breach.met),
        margin_seconds: Some(breach.margin_seconds),
        ..base
    }
}

/// January 1st of `now`'s year up to `now`.
pub fn year_to_date(now: Timestamp) -> TimeInterval {
    let start = Utc.with_ymd_and_hms(now.year(), 1, 1, 0, 0, 0).single().expect("january 1st exists");
    let end = time::truncate(now).max(start + chrono::Duration::seconds(1));
    TimeInterval::new(start, end).expect("end is after start")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardRow {
    pub product_id: ProductId,
    pub name: String,
    pub sla_target_percent: f64,
    pub availability_percent: Option<f64>,
    pub planned_minutes: f64,
    pub downtime_minutes: f64,
    pub allowed_downtime_minutes: f64,
    pub margin_minutes: Option<f64>,
    pub met: Option<bool>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardSnapshot {
    pub generated_at: Timestamp,
    pub period: TimeInterval,
    /// Ledger sequence the snapshot was computed from.
    pub seq: u64,
    pub rows: Vec<DashboardRow>,
}

/// One row per configured product, in configuration order.
pub fn dashboard(config: &ServiceConfig, ledger: &Ledger, period: &TimeInterval, now: Timestamp) -> DashboardSnapshot {
    let rows = config
        .products
        .iter()
        .filter_map(|p| match product_availability(p, ledger, period) {
            Ok(view) => Some(view.row()),
            Err(e) => {
                tracing::warn!(product = %p.id, error = %e, "skipping dashboard row");
                None
            }
        })
        .collect();
    DashboardSnapshot { generated_at: time::truncate(now), period: *period, seq: ledger.last_seq, rows }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub requested: usize,
    pub executed: usize,
    pub by_state: BTreeMap<ChangeState, usize>,
    /// (change, incident) pairs within the correlation window.
    pub correlated: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutiveReport {
    pub period: TimeInterval,
    pub incidents: IncidentStatistics,
    pub lifecycle_by_product: BTreeMap<ProductId, LifecycleMetrics>,
    pub sla: Vec<DashboardRow>,
    pub breaches: Vec<DashboardRow>,
    /// Backlog as of the end of the period.
    pub rca_backlog: RcaBacklog,
    pub changes: ChangeSummary,
    pub alerts: AlertCounters,
}

/// Lifecycle metrics per product from outage incidents occurring in `period`.
/// Overlapping outages on one product count as a single outage.
fn lifecycle_by_product(config: &ServiceConfig, ledger: &Ledger, period: &TimeInterval) -> BTreeMap<ProductId, LifecycleMetrics> {
    let mut out = BTreeMap::new();
    for p in &config.products {
        let outages = ledger
            .incidents
            .values()
            .filter(|i| i.causes_outage && i.product_ids.contains(&p.id))
            .filter_map(|i| i.lifecycle.outage_interval())
            .filter(|iv| period.contains(iv.start()));
        let history: Vec<_> = time::union(outages).iter().map(|iv| (iv.start(), iv.end())).collect();
        if history.is_empty() {
            continue;
        }
        if let Ok(m) = lifecycle_metrics(&history) {
            out.insert(p.id.clone(), m);
        }
    }
    out
}

pub fn executive_report(config: &ServiceConfig, ledger: &Ledger, period: &TimeInterval) -> ExecutiveReport {
    let sla = dashboard(config, ledger, period, period.end()).rows;
    let breaches = sla.iter().filter(|r| r.met == Some(false)).cloned().collect();

    let mut changes = ChangeSummary::default();
    let in_period: Vec<_> = ledger.changes.values().filter(|c| period.contains(c.requested_at)).collect();
    for c in &in_period {
        changes.requested += 1;
        *changes.by_state.entry(c.state).or_default() += 1;
    }
    changes.executed = ledger.changes.values().filter(|c| c.executed_at.is_some_and(|t| period.contains(t))).count();
    let window = chrono::Duration::hours(config.correlation_window_hours);
    changes.correlated = change::change_incident_correlation(in_period.iter().copied(), ledger.incidents.values(), window)
        .unwrap_or_default();

    ExecutiveReport {
        period: *period,
        incidents: incident_statistics(ledger.incidents.values(), period),
        lifecycle_by_product: lifecycle_by_product(config, ledger, period),
        sla,
        breaches,
        rca_backlog: rca_backlog_report(ledger.problems.values().filter(|t| t.created_at < period.end()), period.end()),
        changes,
        alerts: ledger.alerts.counters,
    }
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}%"))
}

fn opt_hours(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |s| format!("{:.2} h", s / 3600.0))
}

pub fn render_text(report: &ExecutiveReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Executive availability report");
    let _ = writeln!(out, "Period: {}", report.period);
    let _ = writeln!(out);
    let _ = writeln!(out, "SLA attainment");
    if report.sla.is_empty() {
        let _ = writeln!(out, "  (no products configured)");
    }
    for r in &report.sla {
        let standing = match r.met {
            Some(true) => "met".to_string(),
            Some(false) => format!("BREACHED by {:.2} min", -r.margin_minutes.unwrap_or_default()),
            None => "no planned uptime".to_string(),
        };
        let _ = writeln!(
            out,
            "  {:<12} target {:>8.4}%  actual {:>10}  downtime {:>9.2} min  allowed {:>9.2} min  {}",
            r.product_id,
            r.sla_target_percent,
            opt_pct(r.availability_percent),
            r.downtime_minutes,
            r.allowed_downtime_minutes,
            standing
        );
    }
    let s = &report.incidents;
    let _ = writeln!(out);
    let _ = writeln!(out, "Incidents: {}", s.total);
    for (sev, n) in &s.by_severity {
        let _ = writeln!(out, "  {sev}: {n}");
    }
    if s.outage_durations.count > 0 {
        let _ = writeln!(
            out,
            "  outages: {} totalling {:.2} min (mean {:.2} min)",
            s.outage_durations.count,
            metrics::minutes(s.outage_durations.total_seconds as f64),
            metrics::minutes(s.outage_durations.mean_seconds.unwrap_or_default())
        );
    }
    if !report.lifecycle_by_product.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Lifecycle");
        for (p, m) in &report.lifecycle_by_product {
            let _ = writeln!(
                out,
                "  {:<12} MTTR {:>10}  MTTF {:>10}  MTBF {:>10}",
                p,
                opt_hours(m.mttr_seconds),
                opt_hours(m.mttf_seconds),
                opt_hours(m.mtbf_seconds)
            );
        }
    }
    let b = &report.rca_backlog;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "RCA backlog: {} open, {} awaiting review, {} overdue",
        b.open_count, b.awaiting_review, b.overdue_count
    );
    let c = &report.changes;
    let _ = writeln!(
        out,
        "Changes: {} requested, {} executed, {} linked to later incidents",
        c.requested,
        c.executed,
        c.correlated.len()
    );
    let a = &report.alerts;
    let _ = writeln!(
        out,
        "Alerts: {} received ({} created, {} attached, {} ignored, {} rejected)",
        a.received, a.created, a.attached, a.ignored, a.rejected
    );
    out
}
