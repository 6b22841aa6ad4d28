//! Command handling over the ledger and event log.
//!
//! Each command validates against current state, produces domain events,
//! applies them to a copy of the ledger, appends them to the log as one
//! durable write, and only then publishes the new ledger. A failed append
//! leaves the service exactly as it was.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::alert::{self, AlertError, AlertEvent, AlertOutcome, Classification, Decision};
use crate::change::{
    self, CalendarExport, ChangeError, ChangeId, ChangeRequest, ChecklistUpdate, NewChange, NewRelease, PrrOutcome,
    Release,
};
use crate::config::ServiceConfig;
use crate::incident::{
    self, Incident, IncidentError, IncidentId, IncidentState, NewIncident, ProductId, TransitionFields,
};
use crate::ledger::{DomainEvent, Ledger, LedgerError};
use crate::metrics::MetricsError;
use crate::outage::{self, OutageRecord, RecordError, ReviewDecision, ReviewOutcome};
use crate::problem::{self, ProblemError, ProblemTicket, RcaDecision, RcaDocument};
use crate::report::{self, AvailabilityView, DashboardSnapshot, ExecutiveReport};
use crate::store::{self, EventLog, LoadReport, StoreError, StoredEvent};
use crate::time::{self, TimeInterval, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Incident(#[from] IncidentError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error(transparent)]
    Alert(#[from] AlertError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ledger(LedgerError),
}

impl From<LedgerError> for ServiceError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::NotFound { kind, id } => Self::NotFound { kind, id },
            LedgerError::Incident(e) => Self::Incident(e),
            LedgerError::Record(e) => Self::Record(e),
            LedgerError::Problem(e) => Self::Problem(e),
            LedgerError::Change(e) => Self::Change(e),
            other => Self::Ledger(other),
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// An incident after a command, plus anything its closure produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncidentUpdate {
    pub incident: Incident,
    pub outage_record: Option<OutageRecord>,
    pub problem: Option<ProblemTicket>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub appended: u64,
    pub skipped: u64,
}

#[derive(Debug)]
pub struct Service {
    config: ServiceConfig,
    ledger: Ledger,
    log: EventLog,
    data_dir: Option<PathBuf>,
}

impl Service {
    pub fn in_memory(config: ServiceConfig) -> Self {
        Self { config, ledger: Ledger::default(), log: EventLog::in_memory(), data_dir: None }
    }

    /// Rebuilds state from an existing log.
    pub fn from_log(config: ServiceConfig, log: EventLog) -> Result<Self> {
        let ledger = Ledger::replay(Ledger::default(), &log.read_from(1)?)?;
        Ok(Self { config, ledger, log, data_dir: None })
    }

    /// Opens `dir/events.ndjson`, starting from `dir/snapshot.json` when it is
    /// usable and replaying the remainder.
    pub fn open_dir(config: ServiceConfig, dir: &Path) -> Result<(Self, LoadReport)> {
        let (log, report) = EventLog::open(&dir.join(store::LOG_FILE))?;
        let base = match store::load_snapshot::<Ledger>(dir)? {
            Some(s) if s.seq <= log.last_seq() && s.state.last_seq == s.seq => s.state,
            Some(s) => {
                tracing::warn!(snapshot_seq = s.seq, log_seq = log.last_seq(), "snapshot ahead of log; replaying from start");
                Ledger::default()
            }
            None => Ledger::default(),
        };
        let rest = log.read_from(base.last_seq + 1)?;
        let ledger = Ledger::replay(base, &rest)?;
        tracing::info!(seq = ledger.last_seq, replayed = rest.len(), "state restored");
        Ok((Self { config, ledger, log, data_dir: Some(dir.to_path_buf()) }, report))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn write_snapshot(&self) -> Result<()> {
        if let Some(dir) = &self.data_dir {
            store::write_snapshot(dir, self.ledger.last_seq, &self.ledger)?;
        }
        Ok(())
    }

    fn commit(&mut self, events: Vec<DomainEvent>, now: Timestamp) -> Result<()> {
        let mut next = self.ledger.clone();
        for e in &events {
            next.apply(e)?;
        }
        let now = time::truncate(now);
        let stored = self.log.append(events.iter().map(|e| e.to_new_event(now)).collect())?;
        if let Some(last) = stored.last() {
            next.last_seq = last.seq;
        }
        for e in &stored {
            tracing::debug!(seq = e.seq, kind = %e.kind, entity = %e.entity_id, "committed");
        }
        self.ledger = next;
        Ok(())
    }

    fn check_products(&self, ids: &[ProductId]) -> Result<()> {
        match ids.iter().find(|p| !self.config.is_known_product(p)) {
            Some(p) => Err(IncidentError::UnknownProduct(p.clone()).into()),
            None => Ok(()),
        }
    }

    pub fn open_incident(&mut self, details: NewIncident, actor: &str, now: Timestamp) -> Result<Incident> {
        let id = self.ledger.next_incident_id();
        let config = &self.config;
        let inc = incident::open_incident(id.clone(), details, |p| config.is_known_product(p), actor, now)?;
        let entry = inc.audit_trail[0].clone();
        self.commit(vec![DomainEvent::IncidentOpened { incident_id: id.clone(), entry }], now)?;
        Ok(self.ledger.incidents[&id].clone())
    }

    /// Moves an incident along the state machine. Closing runs the closure
    /// workflow (record draft, problem ticket).
    pub fn transition_incident(
        &mut self,
        id: &str,
        to: IncidentState,
        fields: TransitionFields,
        actor: &str,
        now: Timestamp,
    ) -> Result<IncidentUpdate> {
        if to == IncidentState::Closed {
            return self.close_incident(id, fields, actor, now);
        }
        let next = incident::transition(self.ledger.incident(id)?, to, fields, actor, now)?;
        let entry = next.audit_trail.last().cloned().expect("transition adds an entry");
        self.commit(vec![DomainEvent::IncidentTransitioned { incident_id: id.to_string(), entry }], now)?;
        Ok(IncidentUpdate { incident: self.ledger.incidents[id].clone(), outage_record: None, problem: None })
    }

    /// Closes an incident. A record draft or problem ticket that already
    /// exists for the incident is not produced again.
    pub fn close_incident(&mut self, id: &str, fields: TransitionFields, actor: &str, now: Timestamp) -> Result<IncidentUpdate> {
        let policy = self.config.severity_policy();
        let closure = incident::close_incident_with(self.ledger.incident(id)?, fields, actor, now, &policy)?;
        let entry = closure.incident.audit_trail.last().cloned().expect("closing adds an entry");
        let mut events = vec![DomainEvent::IncidentTransitioned { incident_id: id.to_string(), entry }];
        let record_id = outage::record_id_for(id);
        let problem_id = problem::problem_id_for(id);
        if let Some(draft) = closure.outage_draft {
            if !self.ledger.outage_records.contains_key(&record_id) {
                events.push(DomainEvent::OutageDrafted { draft, at: time::truncate(now) });
            }
        }
        if let Some(trigger) = closure.problem_trigger {
            if !self.ledger.problems.contains_key(&problem_id) {
                let (assignee, chain) = self.config.resolver_for(&trigger.product_ids);
                let ticket = problem::spawn_problem(&trigger, &assignee, chain, now, &policy, self.config.rca_sla_days)?;
                events.push(DomainEvent::ProblemSpawned { ticket });
            }
        }
        self.commit(events, now)?;
        Ok(IncidentUpdate {
            incident: self.ledger.incidents[id].clone(),
            outage_record: self.ledger.outage_records.get(&record_id).cloned(),
            problem: self.ledger.problems.get(&problem_id).cloned(),
        })
    }

    /// Delivers the problem trigger for a closed incident. Safe to repeat:
    /// an existing ticket is returned unchanged.
    pub fn spawn_problem_for(&mut self, incident_id: &str, now: Timestamp) -> Result<ProblemTicket> {
        let problem_id = problem::problem_id_for(incident_id);
        if let Some(t) = self.ledger.problems.get(&problem_id) {
            return Ok(t.clone());
        }
        let inc = self.ledger.incident(incident_id)?;
        if inc.state != IncidentState::Closed {
            return Err(ServiceError::Validation(format!("incident {incident_id} is not closed")));
        }
        let trigger = incident::ProblemTrigger {
            incident_id: inc.id.clone(),
            severity: inc.severity,
            product_ids: inc.product_ids.clone(),
        };
        let (assignee, chain) = self.config.resolver_for(&trigger.product_ids);
        let ticket = problem::spawn_problem(
            &trigger,
            &assignee,
            chain,
            now,
            &self.config.severity_policy(),
            self.config.rca_sla_days,
        )?;
        self.commit(vec![DomainEvent::ProblemSpawned { ticket }], now)?;
        Ok(self.ledger.problems[&problem_id].clone())
    }

    pub fn edit_incident_products(
        &mut self,
        id: &str,
        product_ids: Vec<ProductId>,
        actor: &str,
        now: Timestamp,
    ) -> Result<Incident> {
        let config = &self.config;
        let next = incident::edit_products(self.ledger.incident(id)?, product_ids, |p| config.is_known_product(p), actor, now)?;
        let entry = next.audit_trail.last().cloned().expect("edit adds an entry");
        self.commit(vec![DomainEvent::IncidentProductsEdited { incident_id: id.to_string(), entry }], now)?;
        Ok(self.ledger.incidents[id].clone())
    }

    /// Classifies one monitor firing. Invalid or unknown-monitor events are
    /// counted as rejected and returned as errors.
    pub fn ingest_alert(&mut self, mut event: AlertEvent, now: Timestamp) -> Result<AlertOutcome> {
        event.fired_at = time::truncate(event.fired_at);
        let ledger = &self.ledger;
        let decision =
            alert::ingest_alert(&event, &self.config.monitors, &ledger.alerts, |id| ledger.is_active_incident(id), now);
        let decision = match decision {
            Ok(d) => d,
            Err(e) => {
                let rejected =
                    DomainEvent::AlertRejected { monitor_id: event.monitor_id.clone(), reason: e.to_string(), at: time::truncate(now) };
                self.commit(vec![rejected], now)?;
                return Err(e.into());
            }
        };
        let actor = format!("monitor:{}", event.monitor_id);
        let (mut events, outcome) = match decision {
            Decision::Replayed(prev) => (Vec::new(), AlertOutcome { duplicate: true, ..prev }),
            Decision::Open(details) => {
                let id = self.ledger.next_incident_id();
                let config = &self.config;
                let inc = incident::open_incident(id.clone(), details, |p| config.is_known_product(p), &actor, now)?;
                let entry = inc.audit_trail[0].clone();
                (
                    vec![DomainEvent::IncidentOpened { incident_id: id.clone(), entry }],
                    AlertOutcome { classification: Classification::Created, incident_id: Some(id), duplicate: false },
                )
            }
            Decision::Attach(id) => {
                let inc = incident::attach_alert(self.ledger.incident(&id)?, &event.monitor_id, event.fired_at, event.value, false, now)?;
                let entry = inc.audit_trail.last().cloned().expect("attach adds an entry");
                (
                    vec![DomainEvent::IncidentAlertAttached { incident_id: id.clone(), entry }],
                    AlertOutcome { classification: Classification::Attached, incident_id: Some(id), duplicate: false },
                )
            }
            Decision::Ignore { recovery_of: Some(id) } => {
                let inc = incident::attach_alert(self.ledger.incident(&id)?, &event.monitor_id, event.fired_at, event.value, true, now)?;
                let entry = inc.audit_trail.last().cloned().expect("attach adds an entry");
                (
                    vec![DomainEvent::IncidentAlertAttached { incident_id: id.clone(), entry }],
                    AlertOutcome { classification: Classification::Ignored, incident_id: Some(id), duplicate: false },
                )
            }
            Decision::Ignore { recovery_of: None } => (
                Vec::new(),
                AlertOutcome { classification: Classification::Ignored, incident_id: None, duplicate: false },
            ),
        };
        events.push(DomainEvent::AlertReceived { event, outcome: outcome.clone() });
        self.commit(events, now)?;
        Ok(outcome)
    }

    pub fn review_outage(
        &mut self,
        record_id: &str,
        decision: ReviewDecision,
        reviewer: &str,
        now: Timestamp,
    ) -> Result<ReviewOutcome> {
        if let ReviewDecision::Confirm { edits, .. } = &decision {
            if let Some(products) = &edits.product_ids {
                self.check_products(products)?;
            }
        }
        let outcome = outage::review_outage(self.ledger.record(record_id)?, decision.clone(), reviewer, now)?;
        self.commit(
            vec![DomainEvent::OutageReviewed {
                record_id: record_id.to_string(),
                decision,
                reviewer: reviewer.to_string(),
                at: time::truncate(now),
            }],
            now,
        )?;
        Ok(outcome)
    }

    pub fn submit_rca(&mut self, problem_id: &str, rca: RcaDocument, now: Timestamp) -> Result<ProblemTicket> {
        problem::submit_rca(self.ledger.problem(problem_id)?, rca.clone(), now)?;
        self.commit(
            vec![DomainEvent::RcaSubmitted { problem_id: problem_id.to_string(), rca, at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.problems[problem_id].clone())
    }

    pub fn review_rca(
        &mut self,
        problem_id: &str,
        reviewer: &str,
        decision: RcaDecision,
        note: &str,
        now: Timestamp,
    ) -> Result<ProblemTicket> {
        problem::review_rca(self.ledger.problem(problem_id)?, reviewer, decision, note, now)?;
        self.commit(
            vec![DomainEvent::RcaReviewed {
                problem_id: problem_id.to_string(),
                reviewer: reviewer.to_string(),
                decision,
                note: note.to_string(),
                at: time::truncate(now),
            }],
            now,
        )?;
        Ok(self.ledger.problems[problem_id].clone())
    }

    pub fn create_release(&mut self, spec: NewRelease, actor: &str, now: Timestamp) -> Result<Release> {
        let id = self.ledger.next_release_id();
        change::create_release(id.clone(), spec.clone(), &self.config.calendar(), actor, now)?;
        self.commit(
            vec![DomainEvent::ReleaseCreated { release_id: id.clone(), spec, actor: actor.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.releases[&id].clone())
    }

    /// Records checklist statuses; the release moves to PrrPassed only when
    /// every mandatory item clears.
    pub fn run_prr(&mut self, release_id: &str, updates: Vec<ChecklistUpdate>, actor: &str, now: Timestamp) -> Result<PrrOutcome> {
        let outcome = change::run_prr(self.ledger.release(release_id)?, &updates, actor, now)?;
        self.commit(
            vec![DomainEvent::PrrRun {
                release_id: release_id.to_string(),
                updates,
                actor: actor.to_string(),
                at: time::truncate(now),
            }],
            now,
        )?;
        Ok(outcome)
    }

    pub fn approve_release(&mut self, release_id: &str, board: &str, now: Timestamp) -> Result<(Release, Vec<ChangeRequest>)> {
        let changes: Vec<ChangeRequest> = self.ledger.changes.values().cloned().collect();
        let (release, approved) =
            change::approve_release(self.ledger.release(release_id)?, &changes, &self.config.calendar(), board, now)?;
        self.commit(
            vec![DomainEvent::ReleaseApproved {
                release_id: release_id.to_string(),
                board: board.to_string(),
                at: time::truncate(now),
            }],
            now,
        )?;
        Ok((release, approved))
    }

    pub fn deploy_release(&mut self, release_id: &str, actor: &str, now: Timestamp) -> Result<Release> {
        change::deploy_release(self.ledger.release(release_id)?, actor, now)?;
        self.commit(
            vec![DomainEvent::ReleaseDeployed { release_id: release_id.to_string(), actor: actor.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.releases[release_id].clone())
    }

    pub fn cancel_release(&mut self, release_id: &str, actor: &str, now: Timestamp) -> Result<Release> {
        change::cancel_release(self.ledger.release(release_id)?, actor, now)?;
        self.commit(
            vec![DomainEvent::ReleaseCancelled { release_id: release_id.to_string(), actor: actor.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.releases[release_id].clone())
    }

    pub fn request_change(&mut self, spec: NewChange, actor: &str, now: Timestamp) -> Result<ChangeRequest> {
        if let Some(r) = &spec.release_id {
            self.ledger.release(r)?;
        }
        self.check_products(&spec.product_ids)?;
        let id = self.ledger.next_change_id();
        change::request_change(id.clone(), spec.clone(), actor, now)?;
        self.commit(
            vec![DomainEvent::ChangeRequested { change_id: id.clone(), spec, actor: actor.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.changes[&id].clone())
    }

    pub fn approve_change(&mut self, change_id: &str, board: &str, now: Timestamp) -> Result<ChangeRequest> {
        change::approve_change(self.ledger.change(change_id)?, board, now)?;
        self.commit(
            vec![DomainEvent::ChangeApproved { change_id: change_id.to_string(), board: board.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.changes[change_id].clone())
    }

    pub fn reject_change(&mut self, change_id: &str, board: &str, note: &str, now: Timestamp) -> Result<ChangeRequest> {
        change::reject_change(self.ledger.change(change_id)?, board, note, now)?;
        self.commit(
            vec![DomainEvent::ChangeRejected {
                change_id: change_id.to_string(),
                board: board.to_string(),
                note: note.to_string(),
                at: time::truncate(now),
            }],
            now,
        )?;
        Ok(self.ledger.changes[change_id].clone())
    }

    pub fn execute_change(&mut self, change_id: &str, actor: &str, now: Timestamp) -> Result<ChangeRequest> {
        change::execute_change(self.ledger.change(change_id)?, actor, now)?;
        self.commit(
            vec![DomainEvent::ChangeExecuted { change_id: change_id.to_string(), actor: actor.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.changes[change_id].clone())
    }

    pub fn verify_change(&mut self, change_id: &str, actor: &str, now: Timestamp) -> Result<ChangeRequest> {
        change::verify_change(self.ledger.change(change_id)?, actor, now)?;
        self.commit(
            vec![DomainEvent::ChangeVerified { change_id: change_id.to_string(), actor: actor.to_string(), at: time::truncate(now) }],
            now,
        )?;
        Ok(self.ledger.changes[change_id].clone())
    }

    pub fn availability(&self, product_id: &str, period: &TimeInterval) -> Result<AvailabilityView> {
        let product = self
            .config
            .product(product_id)
            .ok_or_else(|| ServiceError::NotFound { kind: "product", id: product_id.to_string() })?;
        Ok(report::product_availability(product, &self.ledger, period)?)
    }

    /// Dashboard over `period`, defaulting to year-to-date.
    pub fn dashboard(&self, period: Option<TimeInterval>, now: Timestamp) -> DashboardSnapshot {
        let period = period.unwrap_or_else(|| report::year_to_date(now));
        report::dashboard(&self.config, &self.ledger, &period, now)
    }

    pub fn executive_report(&self, period: &TimeInterval) -> ExecutiveReport {
        report::executive_report(&self.config, &self.ledger, period)
    }

    pub fn review_queue(&self, date: NaiveDate) -> Vec<ChangeRequest> {
        change::daily_review_queue(self.ledger.changes.values(), date)
    }

    pub fn correlations(&self) -> Result<Vec<(ChangeId, IncidentId)>> {
        let window = chrono::Duration::hours(self.config.correlation_window_hours);
        Ok(change::change_incident_correlation(self.ledger.changes.values(), self.ledger.incidents.values(), window)?)
    }

    pub fn calendar_export(&self) -> CalendarExport {
        change::export_calendar(&self.config.calendar(), self.ledger.releases.values(), self.ledger.changes.values())
    }

    pub fn export(&self, from_seq: u64) -> Result<Vec<StoredEvent>> {
        Ok(self.log.read_from(from_seq)?)
    }

    /// Append-only merge. Events already present with identical content are
    /// skipped; a different event at an existing seq is a conflict. New
    /// events must continue the log and replay cleanly, or nothing is written.
    pub fn import(&mut self, mut events: Vec<StoredEvent>) -> Result<ImportSummary> {
        events.sort_by_key(|e| e.seq);
        let last = self.log.last_seq();
        let existing = match events.first() {
            Some(first) if first.seq <= last => self.log.read_from(first.seq)?,
            _ => Vec::new(),
        };
        let mut summary = ImportSummary::default();
        let mut fresh = Vec::new();
        for e in events {
            if e.seq <= last {
                match existing.iter().find(|x| x.seq == e.seq) {
                    Some(x) if *x == e => summary.skipped += 1,
                    _ => return Err(StoreError::Conflict { seq: e.seq }.into()),
                }
            } else {
                fresh.push(e);
            }
        }
        let next = Ledger::replay(self.ledger.clone(), &fresh)?;
        self.log.append_stored(&fresh)?;
        summary.appended = fresh.len() as u64;
        self.ledger = next;
        Ok(summary)
    }
}
