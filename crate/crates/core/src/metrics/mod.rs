//! Availability, reliability and incident-lifecycle arithmetic.
//!
//! Everything here is a pure function of its arguments: no storage, no clock.
//! Time is handled in whole seconds; reporting helpers round percentages to
//! four decimal places.

mod availability;
mod lifecycle;
mod nines;
mod reliability;
mod schedule;

pub use availability::{
    allowed_downtime, compute_availability, downtime_budget, evaluate_sla, validate_target, AvailabilityResult,
    BreachReport,
};
pub use lifecycle::{lifecycle_metrics, LifecycleMetrics, SampleCounts};
pub use nines::{nines_ladder, NinesLabel, NinesTier};
pub use reliability::{estimate_failure_intensity, reliability, ReliabilityEstimate};
pub use schedule::{expand_schedule, OperationsSchedule, WeeklyWindow, SECONDS_PER_DAY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("no planned uptime in the requested period")]
    NoPlannedUptime,
    #[error("SLA target {0} is outside (0, 100]")]
    TargetOutOfRange(f64),
    #[error("{name} must be non-negative and finite, got {value}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("exposure must be positive, got {0} hours")]
    NonPositiveExposure(f64),
    #[error("incident history is not ordered: {0}")]
    UnorderedHistory(String),
}

/// Rounds a percentage to the four decimal places used in reports.
pub fn round_percent(p: f64) -> f64 {
    (p * 10_000.0).round() / 10_000.0
}

/// Seconds to minutes, rounded to two decimals for display.
pub fn minutes(secs: f64) -> f64 {
    (secs / 60.0 * 100.0).round() / 100.0
}
