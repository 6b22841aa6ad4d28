use chrono::{Datelike, Days, Weekday};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::time::{self, TimeInterval};

pub const SECONDS_PER_DAY: u32 = 86_400;

const ALL_DAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// A recurring planned-uptime window: `[start_secs, end_secs)` measured from
/// UTC midnight on `day`. `end_secs` may be 86400 to run to midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyWindow {
    pub day: Weekday,
    pub start_secs: u32,
    pub end_secs: u32,
}

impl WeeklyWindow {
    pub fn new(day: Weekday, start_secs: u32, end_secs: u32) -> Self {
        Self { day, start_secs, end_secs }
    }
}

/// When a product is expected to be up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationsSchedule {
    pub weekly_windows: Vec<WeeklyWindow>,
    #[serde(default)]
    pub maintenance_exceptions: Vec<TimeInterval>,
}

impl OperationsSchedule {
    /// Round-the-clock, every day.
    pub fn always_on() -> Self {
        Self::daily(&ALL_DAYS, 0, SECONDS_PER_DAY)
    }

    /// Monday to Friday between the two day offsets.
    pub fn weekdays(start_secs: u32, end_secs: u32) -> Self {
        Self::daily(&ALL_DAYS[..5], start_secs, end_secs)
    }

    pub fn daily(days: &[Weekday], start_secs: u32, end_secs: u32) -> Self {
        Self {
            weekly_windows: days
                .iter()
                .map(|&d| WeeklyWindow::new(d, start_secs, end_secs))
                .collect(),
            maintenance_exceptions: Vec::new(),
        }
    }

    pub fn with_maintenance(mut self, iv: TimeInterval) -> Self {
        self.maintenance_exceptions.push(iv);
        self
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.weekly_windows.is_empty() {
            return Err(MetricsError::InvalidSchedule(
                "at least one weekly window is required".into(),
            ));
        }
        for w in &self.weekly_windows {
            if w.start_secs >= w.end_secs || w.end_secs > SECONDS_PER_DAY {
                return Err(MetricsError::InvalidSchedule(format!(
                    "{} window {}..{} must have positive duration within one day",
                    w.day, w.start_secs, w.end_secs
                )));
            }
        }
        for day in ALL_DAYS {
            let mut spans: Vec<(u32, u32)> = self
                .weekly_windows
                .iter()
                .filter(|w| w.day == day)
                .map(|w| (w.start_secs, w.end_secs))
                .collect();
            spans.sort_unstable();
            if let Some(pair) = spans.windows(2).find(|p| p[1].0 < p[0].1) {
                return Err(MetricsError::InvalidSchedule(format!(
                    "{day} windows {}..{} and {}..{} overlap",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(())
    }
}

/// Instantiates the weekly windows over `period`, removes maintenance
/// exceptions, and clips to the period. Abutting windows are merged.
pub fn expand_schedule(
    schedule: &OperationsSchedule,
    period: &TimeInterval,
) -> Result<Vec<TimeInterval>, MetricsError> {
    schedule.validate()?;
    let mut windows = Vec::new();
    let last_day = period.end().date_naive();
    let mut day = period.start().date_naive();
    while day <= last_day {
        let midnight = day.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
        for w in schedule.weekly_windows.iter().filter(|w| w.day == day.weekday()) {
            let iv = TimeInterval::from_epoch_secs(
                midnight + i64::from(w.start_secs),
                midnight + i64::from(w.end_secs),
            )
            .expect("validated window");
            windows.extend(iv.intersect(period));
        }
        day = day + Days::new(1);
    }
    Ok(time::subtract(&windows, &schedule.maintenance_exceptions))
}
