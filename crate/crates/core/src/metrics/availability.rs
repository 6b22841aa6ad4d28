use serde::{Deserialize, Serialize};

use super::{expand_schedule, MetricsError, OperationsSchedule};
use crate::time::{self, TimeInterval};

/// Outcome of `Availability = Uptime / (Uptime + Downtime)` over planned time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityResult {
    pub planned_seconds: i64,
    pub downtime_seconds: i64,
    pub uptime_seconds: i64,
    pub availability_percent: f64,
}

impl AvailabilityResult {
    /// Builds a result from planned and downtime totals.
    ///
    /// Returns `NoPlannedUptime` rather than a made-up 0% or 100% when there
    /// is nothing to measure against.
    pub fn from_totals(planned_seconds: i64, downtime_seconds: i64) -> Result<Self, MetricsError> {
        if planned_seconds <= 0 {
            return Err(MetricsError::NoPlannedUptime);
        }
        let downtime_seconds = downtime_seconds.clamp(0, planned_seconds);
        let uptime_seconds = planned_seconds - downtime_seconds;
        Ok(Self {
            planned_seconds,
            downtime_seconds,
            uptime_seconds,
            availability_percent: 100.0 * uptime_seconds as f64 / planned_seconds as f64,
        })
    }
}

/// Downtime is the union of `outages` intersected with `planned`; outage time
/// outside planned windows does not count.
pub fn compute_availability(
    planned: &[TimeInterval],
    outages: &[TimeInterval],
) -> Result<AvailabilityResult, MetricsError> {
    let planned_seconds = time::total_secs(&time::union(planned.iter().copied()));
    let down = time::intersect_all(planned, outages);
    AvailabilityResult::from_totals(planned_seconds, time::total_secs(&down))
}

pub fn validate_target(target_percent: f64) -> Result<(), MetricsError> {
    if target_percent.is_finite() && target_percent > 0.0 && target_percent <= 100.0 {
        Ok(())
    } else {
        Err(MetricsError::TargetOutOfRange(target_percent))
    }
}

/// Downtime budget in seconds for `target_percent` over the planned part of `period`.
pub fn allowed_downtime(
    target_percent: f64,
    period: &TimeInterval,
    schedule: &OperationsSchedule,
) -> Result<f64, MetricsError> {
    validate_target(target_percent)?;
    let planned = time::total_secs(&expand_schedule(schedule, period)?);
    Ok(downtime_budget(target_percent, planned))
}

/// Downtime budget in seconds for `target_percent` over `planned_seconds`.
pub fn downtime_budget(target_percent: f64, planned_seconds: i64) -> f64 {
    (1.0 - target_percent / 100.0) * planned_seconds as f64
}

/// SLA attainment, with `margin_seconds` negative on breach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreachReport {
    pub met: bool,
    pub margin_seconds: f64,
}

pub fn evaluate_sla(target_percent: f64, result: &AvailabilityResult) -> BreachReport {
    let allowed = downtime_budget(target_percent, result.planned_seconds);
    BreachReport {
        met: result.availability_percent >= target_percent,
        margin_seconds: allowed - result.downtime_seconds as f64,
    }
}
