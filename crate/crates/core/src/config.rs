//! Service configuration: products with SLA targets and schedules, monitors,
//! workflow thresholds, and the release calendar.
//!
//! Loaded from TOML. Any top-level key can be overridden from the environment
//! as `AVAILD_<KEY>` (upper-cased); the value is read as a TOML value and
//! falls back to a plain string.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Weekday;
use serde::{Deserialize, Serialize};

use crate::alert::MonitorProfile;
use crate::change::{ReleaseCalendar, DEFAULT_CORRELATION_WINDOW_HOURS};
use crate::incident::{Severity, SeverityPolicy};
use crate::metrics::{validate_target, OperationsSchedule, WeeklyWindow, SECONDS_PER_DAY};
use crate::problem::DEFAULT_RCA_SLA_DAYS;
use crate::time::TimeInterval;

pub const ENV_PREFIX: &str = "AVAILD_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// `mon`..`sun`, `weekdays`, `weekends` or `daily`.
    pub days: Vec<String>,
    /// `HH:MM`
    pub start: String,
    /// `HH:MM`, `24:00` allowed.
    pub end: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    /// Only `"24x7"` is recognised.
    Preset(String),
    Windows(Vec<WindowSpec>),
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::Preset("24x7".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductConfig {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub sla_target_percent: f64,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub maintenance: Vec<TimeInterval>,
    /// Pre-identified resolver for problem tickets on this product.
    #[serde(default)]
    pub resolver: Option<String>,
    #[serde(default)]
    pub management_chain: Vec<String>,
}

fn parse_days(token: &str) -> Result<Vec<Weekday>, String> {
    use Weekday::*;
    Ok(match token.to_ascii_lowercase().as_str() {
        "weekdays" => vec![Mon, Tue, Wed, Thu, Fri],
        "weekends" => vec![Sat, Sun],
        "daily" => vec![Mon, Tue, Wed, Thu, Fri, Sat, Sun],
        other => vec![other.parse::<Weekday>().map_err(|_| format!("unknown day `{token}`"))?],
    })
}

fn parse_clock(s: &str) -> Result<u32, String> {
    let (h, m) = s.split_once(':').ok_or_else(|| format!("time `{s}` is not HH:MM"))?;
    let h: u32 = h.parse().map_err(|_| format!("time `{s}` is not HH:MM"))?;
    let m: u32 = m.parse().map_err(|_| format!("time `{s}` is not HH:MM"))?;
    let secs = h * 3600 + m * 60;
    if m >= 60 || secs > SECONDS_PER_DAY {
        return Err(format!("time `{s}` is out of range"));
    }
    Ok(secs)
}

impl ProductConfig {
    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            &self.id
        } else {
            &self.name
        }
    }

    pub fn operations_schedule(&self) -> Result<OperationsSchedule, String> {
        let mut schedule = match &self.schedule {
            ScheduleSpec::Preset(p) if p.eq_ignore_ascii_case("24x7") => OperationsSchedule::always_on(),
            ScheduleSpec::Preset(p) => return Err(format!("unknown schedule preset `{p}`")),
            ScheduleSpec::Windows(specs) => {
                let mut windows = Vec::new();
                for spec in specs {
                    let (start, end) = (parse_clock(&spec.start)?, parse_clock(&spec.end)?);
                    for token in &spec.days {
                        windows.extend(parse_days(token)?.into_iter().map(|d| WeeklyWindow::new(d, start, end)));
                    }
                }
                OperationsSchedule { weekly_windows: windows, maintenance_exceptions: Vec::new() }
            }
        };
        schedule.maintenance_exceptions = self.maintenance.clone();
        schedule.validate().map_err(|e| e.to_string())?;
        Ok(schedule)
    }
}

fn default_significant() -> BTreeSet<Severity> {
    SeverityPolicy::default().significant
}
fn default_rca_days() -> u32 {
    DEFAULT_RCA_SLA_DAYS
}
fn default_refresh() -> u64 {
    60
}
fn default_corr_hours() -> i64 {
    DEFAULT_CORRELATION_WINDOW_HOURS
}
fn default_resolver() -> String {
    "problem-manager".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default)]
    pub products: Vec<ProductConfig>,
    #[serde(default)]
    pub monitors: Vec<MonitorProfile>,
    #[serde(default = "default_significant")]
    pub significant_severities: BTreeSet<Severity>,
    #[serde(default = "default_rca_days")]
    pub rca_sla_days: u32,
    #[serde(default = "default_refresh")]
    pub refresh_interval_seconds: u64,
    #[serde(default = "default_corr_hours")]
    pub correlation_window_hours: i64,
    /// Resolver for products without one of their own.
    #[serde(default = "default_resolver")]
    pub default_resolver: String,
    #[serde(default)]
    pub release_windows: Vec<TimeInterval>,
    #[serde(default)]
    pub freeze_windows: Vec<TimeInterval>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            products: Vec::new(),
            monitors: Vec::new(),
            significant_severities: default_significant(),
            rca_sla_days: default_rca_days(),
            refresh_interval_seconds: default_refresh(),
            correlation_window_hours: default_corr_hours(),
            default_resolver: default_resolver(),
            release_windows: Vec::new(),
            freeze_windows: Vec::new(),
        }
    }
}

impl ServiceConfig {
    /// Parses TOML, applies `AVAILD_*` overrides from `env`, and validates.
    pub fn load<I>(text: &str, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for (key, raw) in env {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let name = name.to_ascii_lowercase();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            table.insert(name, value);
        }
        let config: ServiceConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::load(&text, std::env::vars())
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut ids = BTreeSet::new();
        for p in &self.products {
            if p.id.trim().is_empty() {
                errors.push("product with empty id".to_string());
            }
            if !ids.insert(p.id.as_str()) {
                errors.push(format!("duplicate product `{}`", p.id));
            }
            if validate_target(p.sla_target_percent).is_err() {
                errors.push(format!("product `{}`: sla_target_percent {} outside (0, 100]", p.id, p.sla_target_percent));
            }
            if let Err(e) = p.operations_schedule() {
                errors.push(format!("product `{}`: {e}", p.id));
            }
        }
        let mut monitor_ids = BTreeSet::new();
        for m in &self.monitors {
            if !monitor_ids.insert(m.monitor_id.as_str()) {
                errors.push(format!("duplicate monitor `{}`", m.monitor_id));
            }
            if !ids.contains(m.product_id.as_str()) {
                errors.push(format!("monitor `{}` references unknown product `{}`", m.monitor_id, m.product_id));
            }
            if let Err(e) = m.validate() {
                errors.push(e);
            }
        }
        if self.rca_sla_days == 0 {
            errors.push("rca_sla_days must be positive".into());
        }
        if self.refresh_interval_seconds == 0 {
            errors.push("refresh_interval_seconds must be positive".into());
        }
        if self.correlation_window_hours <= 0 {
            errors.push("correlation_window_hours must be positive".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    pub fn product(&self, id: &str) -> Option<&ProductConfig> {
        self.products.iter().find(|p| p.id == id)
    }

    pub fn is_known_product(&self, id: &str) -> bool {
        self.product(id).is_some()
    }

    pub fn severity_policy(&self) -> SeverityPolicy {
        SeverityPolicy { significant: self.significant_severities.clone() }
    }

    pub fn calendar(&self) -> ReleaseCalendar {
        ReleaseCalendar { release_windows: self.release_windows.clone(), freeze_windows: self.freeze_windows.clone() }
    }

    /// Resolver and management chain for a set of impacted products.
    pub fn resolver_for(&self, product_ids: &[String]) -> (String, Vec<String>) {
        product_ids
            .iter()
            .filter_map(|id| self.product(id))
            .find_map(|p| p.resolver.clone().map(|r| (r, p.management_chain.clone())))
            .unwrap_or_else(|| (self.default_resolver.clone(), Vec::new()))
    }

    pub fn schedules(&self) -> BTreeMap<String, OperationsSchedule> {
        self.products
            .iter()
            .filter_map(|p| p.operations_schedule().ok().map(|s| (p.id.clone(), s)))
            .collect()
    }
}
