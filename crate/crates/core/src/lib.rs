//! Availability SLA management: incident lifecycle, availability records,
//! problem and change management, alert intake, and the event-sourced store
//! that ties them together.

pub mod alert;
pub mod change;
pub mod clock;
pub mod config;
pub mod incident;
pub mod ledger;
pub mod metrics;
pub mod outage;
pub mod problem;
pub mod report;
pub mod scenario;
pub mod service;
pub mod store;
pub mod time;
