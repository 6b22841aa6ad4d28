//! HTTP API, dashboard refresh job and CLI for the availability service.

pub mod api;
pub mod cli;
pub mod error;
pub mod state;

pub use api::router;
pub use state::AppState;
