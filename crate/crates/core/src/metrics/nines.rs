use serde::{Deserialize, Serialize};

const DAY_SECS: f64 = 86_400.0;
const YEAR_DAYS: f64 = 365.0;
const WEEK_DAYS: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NinesLabel {
    TwoNines,
    ThreeNines,
    FourNines,
    FiveNines,
}

/// One rung of the availability ladder with its downtime budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NinesTier {
    pub label: NinesLabel,
    pub percent: f64,
    pub downtime_per_year_seconds: f64,
    pub downtime_per_week_seconds: f64,
}

impl NinesTier {
    pub fn new(label: NinesLabel, percent: f64) -> Self {
        let down = 1.0 - percent / 100.0;
        Self {
            label,
            percent,
            downtime_per_year_seconds: down * YEAR_DAYS * DAY_SECS,
            downtime_per_week_seconds: down * WEEK_DAYS * DAY_SECS,
        }
    }
}

/// The 99% through 99.999% tiers over a 365-day year and a 7-day week.
pub fn nines_ladder() -> Vec<NinesTier> {
    vec![
        NinesTier::new(NinesLabel::TwoNines, 99.0),
        NinesTier::new(NinesLabel::ThreeNines, 99.9),
        NinesTier::new(NinesLabel::FourNines, 99.99),
        NinesTier::new(NinesLabel::FiveNines, 99.999),
    ]
}
