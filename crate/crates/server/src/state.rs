//! Shared application state and the dashboard refresh job.

use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Duration;

use availd_core::clock::Clock;
use availd_core::report::DashboardSnapshot;
use availd_core::service::Service;
use availd_core::time::TimeInterval;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    service: Mutex<Service>,
    dashboard: RwLock<Arc<DashboardSnapshot>>,
    clock: Arc<dyn Clock>,
    period: Option<TimeInterval>,
    snapshot_seq: Mutex<u64>,
}

impl AppState {
    /// Builds state and computes the first dashboard snapshot. `period`
    /// overrides the year-to-date default.
    pub fn new(service: Service, clock: Arc<dyn Clock>, period: Option<TimeInterval>) -> Self {
        let first = service.dashboard(period, clock.now());
        let seq = service.ledger().last_seq;
        Self {
            inner: Arc::new(Inner {
                service: Mutex::new(service),
                dashboard: RwLock::new(Arc::new(first)),
                clock,
                period,
                snapshot_seq: Mutex::new(seq),
            }),
        }
    }

    pub fn service(&self) -> MutexGuard<'_, Service> {
        self.inner.service.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn clock(&self) -> &dyn Clock {
        self.inner.clock.as_ref()
    }

    pub fn now(&self) -> availd_core::time::Timestamp {
        self.inner.clock.now()
    }

    pub fn dashboard(&self) -> Arc<DashboardSnapshot> {
        self.inner.dashboard.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Recomputes the dashboard and swaps it in whole.
    pub fn refresh_dashboard(&self) -> Arc<DashboardSnapshot> {
        let snapshot = {
            let service = self.service();
            Arc::new(service.dashboard(self.inner.period, self.now()))
        };
        *self.inner.dashboard.write().unwrap_or_else(|p| p.into_inner()) = snapshot.clone();
        tracing::debug!(seq = snapshot.seq, "dashboard refreshed");
        snapshot
    }

    /// Writes a state snapshot if the ledger moved since the last one.
    pub fn persist_snapshot(&self) {
        let service = self.service();
        let seq = service.ledger().last_seq;
        let mut last = self.inner.snapshot_seq.lock().unwrap_or_else(|p| p.into_inner());
        if seq == *last {
            return;
        }
        match service.write_snapshot() {
            Ok(()) => *last = seq,
            Err(e) => tracing::warn!(error = %e, "snapshot write failed; log remains authoritative"),
        }
    }

    /// Timer half of the refresh job. Runs until the task is dropped.
    pub async fn run_refresh(self, every: Duration) {
        let mut ticker = tokio::time::interval(every);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        ticker.tick().await;
        loop {
            ticker.tick().await;
            let state = self.clone();
            let joined = tokio::task::spawn_blocking(move || {
                state.refresh_dashboard();
                state.persist_snapshot();
            })
            .await;
            if let Err(e) = joined {
                tracing::error!(error = %e, "dashboard refresh failed; keeping previous snapshot");
            }
        }
    }
}
