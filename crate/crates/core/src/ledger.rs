//! Domain events and the state materialized from them.
//!
//! Events record the inputs of each accepted command; applying one re-runs the
//! same pure domain function, so a replayed log rebuilds the live state
//! exactly. Checks that depend on configuration (known products, release
//! calendar, severity policy) happen when the command runs, not on replay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alert::{ActiveAlert, AlertEvent, AlertOutcome, AlertTracker, Classification, MonitorId};
use crate::change::{
    self, ChangeError, ChangeId, ChangeRequest, ChecklistUpdate, NewChange, NewRelease, Release, ReleaseCalendar,
    ReleaseId,
};
use crate::incident::{AuditEntry, Incident, IncidentChange, IncidentError, IncidentId};
use crate::outage::{self, OutageRecord, OutageRecordDraft, RecordError, RecordId, ReviewDecision};
use crate::problem::{self, ProblemError, ProblemId, ProblemTicket, RcaDecision, RcaDocument};
use crate::store::{NewEvent, StoredEvent};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum DomainEvent {
    #[serde(rename = "incident.opened")]
    IncidentOpened { incident_id: IncidentId, entry: AuditEntry },
    #[serde(rename = "incident.transitioned")]
    IncidentTransitioned { incident_id: IncidentId, entry: AuditEntry },
    #[serde(rename = "incident.products_edited")]
    IncidentProductsEdited { incident_id: IncidentId, entry: AuditEntry },
    #[serde(rename = "incident.alert_attached")]
    IncidentAlertAttached { incident_id: IncidentId, entry: AuditEntry },
    #[serde(rename = "outage.drafted")]
    OutageDrafted { draft: OutageRecordDraft, at: Timestamp },
    #[serde(rename = "outage.reviewed")]
    OutageReviewed { record_id: RecordId, decision: ReviewDecision, reviewer: String, at: Timestamp },
    #[serde(rename = "problem.spawned")]
    ProblemSpawned { ticket: ProblemTicket },
    #[serde(rename = "problem.rca_submitted")]
    RcaSubmitted { problem_id: ProblemId, rca: RcaDocument, at: Timestamp },
    #[serde(rename = "problem.rca_reviewed")]
    RcaReviewed { problem_id: ProblemId, reviewer: String, decision: RcaDecision, note: String, at: Timestamp },
    #[serde(rename = "release.created")]
    ReleaseCreated { release_id: ReleaseId, spec: NewRelease, actor: String, at: Timestamp },
    #[serde(rename = "release.prr_run")]
    PrrRun { release_id: ReleaseId, updates: Vec<ChecklistUpdate>, actor: String, at: Timestamp },
    #[serde(rename = "release.approved")]
    ReleaseApproved { release_id: ReleaseId, board: String, at: Timestamp },
    #[serde(rename = "release.deployed")]
    ReleaseDeployed { release_id: ReleaseId, actor: String, at: Timestamp },
    #[serde(rename = "release.cancelled")]
    ReleaseCancelled { release_id: ReleaseId, actor: String, at: Timestamp },
    #[serde(rename = "change.requested")]
    ChangeRequested { change_id: ChangeId, spec: NewChange, actor: String, at: Timestamp },
    #[serde(rename = "change.approved")]
    ChangeApproved { change_id: ChangeId, board: String, at: Timestamp },
    #[serde(rename = "change.rejected")]
    ChangeRejected { change_id: ChangeId, board: String, note: String, at: Timestamp },
    #[serde(rename = "change.executed")]
    ChangeExecuted { change_id: ChangeId, actor: String, at: Timestamp },
    #[serde(rename = "change.verified")]
    ChangeVerified { change_id: ChangeId, actor: String, at: Timestamp },
    #[serde(rename = "alert.received")]
    AlertReceived { event: AlertEvent, outcome: AlertOutcome },
    #[serde(rename = "alert.rejected")]
    AlertRejected { monitor_id: MonitorId, reason: String, at: Timestamp },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LedgerError {
    #[error(transparent)]
    Incident(#[from] IncidentError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Change(#[from] ChangeError),
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{kind} `{id}` already exists")]
    Duplicate { kind: &'static str, id: String },
    #[error("event at seq {seq} cannot be decoded: {message}")]
    Decode { seq: u64, message: String },
    #[error("replay expected seq {expected}, found {found}")]
    Sequence { expected: u64, found: u64 },
    #[error("event {kind} does not match its audit entry")]
    Mismatch { kind: &'static str },
}

impl DomainEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::IncidentOpened { .. } => "incident.opened",
            Self::IncidentTransitioned { .. } => "incident.transitioned",
            Self::IncidentProductsEdited { .. } => "incident.products_edited",
            Self::IncidentAlertAttached { .. } => "incident.alert_attached",
            Self::OutageDrafted { .. } => "outage.drafted",
            Self::OutageReviewed { .. } => "outage.reviewed",
            Self::ProblemSpawned { .. } => "problem.spawned",
            Self::RcaSubmitted { .. } => "problem.rca_submitted",
            Self::RcaReviewed { .. } => "problem.rca_reviewed",
            Self::ReleaseCreated { .. } => "release.created",
            Self::PrrRun { .. } => "release.prr_run",
            Self::ReleaseApproved { .. } => "release.approved",
            Self::ReleaseDeployed { .. } => "release.deployed",
            Self::ReleaseCancelled { .. } => "release.cancelled",
            Self::ChangeRequested { .. } => "change.requested",
            Self::ChangeApproved { .. } => "change.approved",
            Self::ChangeRejected { .. } => "change.rejected",
            Self::ChangeExecuted { .. } => "change.executed",
            Self::ChangeVerified { .. } => "change.verified",
            Self::AlertReceived { .. } => "alert.received",
            Self::AlertRejected { .. } => "alert.rejected",
        }
    }

    pub fn entity_id(&self) -> String {
        match self {
            Self::IncidentOpened { incident_id, .. }
            | Self::IncidentTransitioned { incident_id, .. }
            | Self::IncidentProductsEdited { incident_id, .. }
            | Self::IncidentAlertAttached { incident_id, .. } => incident_id.clone(),
            Self::OutageDrafted { draft, .. } => outage::record_id_for(&draft.incident_id),
            Self::OutageReviewed { record_id, .. } => record_id.clone(),
            Self::ProblemSpawned { ticket } => ticket.id.clone(),
            Self::RcaSubmitted { problem_id, .. } | Self::RcaReviewed { problem_id, .. } => problem_id.clone(),
            Self::ReleaseCreated { release_id, .. }
            | Self::PrrRun { release_id, .. }
            | Self::ReleaseApproved { release_id, .. }
            | Self::ReleaseDeployed { release_id, .. }
            | Self::ReleaseCancelled { release_id, .. } => release_id.clone(),
            Self::ChangeRequested { change_id, .. }
            | Self::ChangeApproved { change_id, .. }
            | Self::ChangeRejected { change_id, .. }
            | Self::ChangeExecuted { change_id, .. }
            | Self::ChangeVerified { change_id, .. } => change_id.clone(),
            Self::AlertReceived { event, .. } => event.monitor_id.clone(),
            Self::AlertRejected { monitor_id, .. } => {
                if monitor_id.is_empty() {
                    "unknown".into()
                } else {
                    monitor_id.clone()
                }
            }
        }
    }

    pub fn to_new_event(&self, at: Timestamp) -> NewEvent {
        let mut value = serde_json::to_value(self).expect("domain events serialize");
        let payload = value.get_mut("payload").map(serde_json::Value::take).unwrap_or_default();
        NewEvent { at, kind: self.kind().to_string(), entity_id: self.entity_id(), payload }
    }

    pub fn decode(stored: &StoredEvent) -> Result<Self, LedgerError> {
        serde_json::from_value(serde_json::json!({ "kind": stored.kind, "payload": stored.payload }))
            .map_err(|e| LedgerError::Decode { seq: stored.seq, message: e.to_string() })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounters {
    pub incident: u64,
    pub release: u64,
    pub change: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub incidents: BTreeMap<IncidentId, Incident>,
    pub outage_records: BTreeMap<RecordId, OutageRecord>,
    pub problems: BTreeMap<ProblemId, ProblemTicket>,
    pub releases: BTreeMap<ReleaseId, Release>,
    pub changes: BTreeMap<ChangeId, ChangeRequest>,
    pub alerts: AlertTracker,
    pub counters: IdCounters,
    pub last_seq: u64,
}

fn get<'a, T>(map: &'a BTreeMap<String, T>, kind: &'static str, id: &str) -> Result<&'a T, LedgerError> {
    map.get(id).ok_or_else(|| LedgerError::NotFound { kind, id: id.to_string() })
}

fn check_entry(kind: &'static str, entry: &AuditEntry) -> Result<(), LedgerError> {
    let ok = matches!(
        (kind, &entry.change),
        ("incident.opened", IncidentChange::Opened { .. })
            | ("incident.transitioned", IncidentChange::Transitioned { .. })
            | ("incident.products_edited", IncidentChange::ProductsEdited { .. })
            | ("incident.alert_attached", IncidentChange::AlertAttached { .. })
    );
    if ok {
        Ok(())
    } else {
        Err(LedgerError::Mismatch { kind })
    }
}

impl Ledger {
    pub fn next_incident_id(&self) -> IncidentId {
        format!("INC-{:06}", self.counters.incident + 1)
    }

    pub fn next_release_id(&self) -> ReleaseId {
        format!("REL-{:06}", self.counters.release + 1)
    }

    pub fn next_change_id(&self) -> ChangeId {
        format!("CHG-{:06}", self.counters.change + 1)
    }

    pub fn incident(&self, id: &str) -> Result<&Incident, LedgerError> {
        get(&self.incidents, "incident", id)
    }

    pub fn record(&self, id: &str) -> Result<&OutageRecord, LedgerError> {
        get(&self.outage_records, "outage record", id)
    }

    pub fn problem(&self, id: &str) -> Result<&ProblemTicket, LedgerError> {
        get(&self.problems, "problem", id)
    }

    pub fn release(&self, id: &str) -> Result<&Release, LedgerError> {
        get(&self.releases, "release", id)
    }

    pub fn change(&self, id: &str) -> Result<&ChangeRequest, LedgerError> {
        get(&self.changes, "change", id)
    }

    pub fn is_active_incident(&self, id: &str) -> bool {
        self.incidents.get(id).is_some_and(|i| i.state.is_active())
    }

    /// Applies one event. On error the ledger is unchanged.
    pub fn apply(&mut self, event: &DomainEvent) -> Result<(), LedgerError> {
        use DomainEvent::*;
        match event {
            IncidentOpened { incident_id, entry } => {
                check_entry(event.kind(), entry)?;
                if self.incidents.contains_key(incident_id) {
                    return Err(LedgerError::Duplicate { kind: "incident", id: incident_id.clone() });
                }
                let inc = Incident::apply(None, entry.clone())?;
                self.counters.incident += 1;
                self.incidents.insert(inc.id.clone(), inc);
            }
            IncidentTransitioned { incident_id, entry }
            | IncidentProductsEdited { incident_id, entry }
            | IncidentAlertAttached { incident_id, entry } => {
                check_entry(event.kind(), entry)?;
                let current = self.incident(incident_id)?.clone();
                let next = Incident::apply(Some(current), entry.clone())?;
                self.incidents.insert(incident_id.clone(), next);
            }
            OutageDrafted { draft, at } => {
                let id = outage::record_id_for(&draft.incident_id);
                if self.outage_records.contains_key(&id) {
                    return Err(LedgerError::Duplicate { kind: "outage record", id });
                }
                self.incident(&draft.incident_id)?;
                self.outage_records.insert(id, OutageRecord::from_draft(draft.clone(), *at));
            }
            OutageReviewed { record_id, decision, reviewer, at } => {
                let outcome = outage::review_outage(self.record(record_id)?, decision.clone(), reviewer, *at)?;
                self.outage_records.insert(record_id.clone(), outcome.record);
            }
            ProblemSpawned { ticket } => {
                if self.problems.contains_key(&ticket.id) {
                    return Err(LedgerError::Duplicate { kind: "problem", id: ticket.id.clone() });
                }
                self.incident(&ticket.incident_id)?;
                self.problems.insert(ticket.id.clone(), ticket.clone());
            }
            RcaSubmitted { problem_id, rca, at } => {
                let next = problem::submit_rca(self.problem(problem_id)?, rca.clone(), *at)?;
                self.problems.insert(problem_id.clone(), next);
            }
            RcaReviewed { problem_id, reviewer, decision, note, at } => {
                let next = problem::review_rca(self.problem(problem_id)?, reviewer, *decision, note, *at)?;
                self.problems.insert(problem_id.clone(), next);
            }
            ReleaseCreated { release_id, spec, actor, at } => {
                if self.releases.contains_key(release_id) {
                    return Err(LedgerError::Duplicate { kind: "release", id: release_id.clone() });
                }
                let r = change::create_release(release_id.clone(), spec.clone(), &ReleaseCalendar::default(), actor, *at)?;
                self.counters.release += 1;
                self.releases.insert(release_id.clone(), r);
            }
            PrrRun { release_id, updates, actor, at } => {
                let outcome = change::run_prr(self.release(release_id)?, updates, actor, *at)?;
                self.releases.insert(release_id.clone(), outcome.release);
            }
            ReleaseApproved { release_id, board, at } => {
                let changes: Vec<ChangeRequest> = self.changes.values().cloned().collect();
                let (release, approved) = change::approve_release(
                    self.release(release_id)?,
                    &changes,
                    &ReleaseCalendar::default(),
                    board,
                    *at,
                )?;
                self.releases.insert(release_id.clone(), release);
                for c in approved {
                    self.changes.insert(c.id.clone(), c);
                }
            }
            ReleaseDeployed { release_id, actor, at } => {
                let r = change::deploy_release(self.release(release_id)?, actor, *at)?;
                self.releases.insert(release_id.clone(), r);
            }
            ReleaseCancelled { release_id, actor, at } => {
                let r = change::cancel_release(self.release(release_id)?, actor, *at)?;
                self.releases.insert(release_id.clone(), r);
            }
            ChangeRequested { change_id, spec, actor, at } => {
                if self.changes.contains_key(change_id) {
                    return Err(LedgerError::Duplicate { kind: "change", id: change_id.clone() });
                }
                let c = change::request_change(change_id.clone(), spec.clone(), actor, *at)?;
                self.counters.change += 1;
                self.changes.insert(change_id.clone(), c);
            }
            ChangeApproved { change_id, board, at } => {
                let c = change::approve_change(self.change(change_id)?, board, *at)?;
                self.changes.insert(change_id.clone(), c);
            }
            ChangeRejected { change_id, board, note, at } => {
                let c = change::reject_change(self.change(change_id)?, board, note, *at)?;
                self.changes.insert(change_id.clone(), c);
            }
            ChangeExecuted { change_id, actor, at } => {
                let c = change::execute_change(self.change(change_id)?, actor, *at)?;
                self.changes.insert(change_id.clone(), c);
            }
            ChangeVerified { change_id, actor, at } => {
                let c = change::verify_change(self.change(change_id)?, actor, *at)?;
                self.changes.insert(change_id.clone(), c);
            }
            AlertReceived { event, outcome } => self.apply_alert(event, outcome),
            AlertRejected { .. } => self.alerts.counters.record(Classification::Rejected),
        }
        Ok(())
    }

    fn apply_alert(&mut self, event: &AlertEvent, outcome: &AlertOutcome) {
        let tracker = &mut self.alerts;
        if outcome.duplicate {
            tracker.counters.record(Classification::Ignored);
            return;
        }
        tracker.counters.record(outcome.classification);
        let fired_at = crate::time::truncate(event.fired_at);
        tracker.seen.insert(crate::alert::dedup_key(&event.monitor_id, fired_at), outcome.clone());
        if let (Classification::Created | Classification::Attached, Some(id)) =
            (outcome.classification, &outcome.incident_id)
        {
            let last = match tracker.active.get(&event.monitor_id) {
                Some(a) if &a.incident_id == id => a.last_fired_at.max(fired_at),
                _ => fired_at,
            };
            tracker.active.insert(event.monitor_id.clone(), ActiveAlert { incident_id: id.clone(), last_fired_at: last });
        }
    }

    /// Applies a stored event, enforcing that it continues the sequence.
    pub fn apply_stored(&mut self, stored: &StoredEvent) -> Result<(), LedgerError> {
        let expected = self.last_seq + 1;
        if stored.seq != expected {
            return Err(LedgerError::Sequence { expected, found: stored.seq });
        }
        self.apply(&DomainEvent::decode(stored)?)?;
        self.last_seq = stored.seq;
        Ok(())
    }

    /// Rebuilds state by applying `events` on top of `base`. The first event
    /// must be `base.last_seq + 1`.
    pub fn replay(base: Ledger, events: &[StoredEvent]) -> Result<Ledger, LedgerError> {
        let mut ledger = base;
        for e in events {
            ledger.apply_stored(e)?;
        }
        Ok(ledger)
    }
}
