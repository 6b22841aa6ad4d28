//! Release calendar, Production Readiness Review gating, Migration Review
//! Board approval, and the change request repository.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::incident::{Actor, Incident, IncidentId, ProductId};
use crate::time::{TimeInterval, Timestamp};

pub type ReleaseId = String;
pub type ChangeId = String;

pub const DEFAULT_CORRELATION_WINDOW_HOURS: i64 = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReleaseState {
    Planned,
    PrrPassed,
    Approved,
    Deployed,
    Cancelled,
}

impl ReleaseState {
    pub const ALL: [ReleaseState; 5] = [
        ReleaseState::Planned,
        ReleaseState::PrrPassed,
        ReleaseState::Approved,
        ReleaseState::Deployed,
        ReleaseState::Cancelled,
    ];

    pub fn can_move_to(self, to: ReleaseState) -> bool {
        use ReleaseState::*;
        matches!(
            (self, to),
            (Planned, PrrPassed)
                | (PrrPassed, Approved)
                | (Approved, Deployed)
                | (Planned | PrrPassed | Approved, Cancelled)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChecklistStatus {
    Pending,
    Passed,
    Failed,
    Waived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub key: String,
    pub description: String,
    pub mandatory: bool,
    #[serde(default = "pending")]
    pub status: ChecklistStatus,
    #[serde(default)]
    pub waiver_note: Option<String>,
}

fn pending() -> ChecklistStatus {
    ChecklistStatus::Pending
}

impl ChecklistItem {
    fn clears_gate(&self) -> bool {
        match self.status {
            ChecklistStatus::Passed => true,
            ChecklistStatus::Waived => self.waiver_note.as_deref().is_some_and(|n| !n.trim().is_empty()),
            _ => !self.mandatory,
        }
    }
}

/// A starter PRR checklist.
pub fn default_prr_checklist() -> Vec<ChecklistItem> {
    [
        ("storage", "Storage configuration provisioned"),
        ("firewall", "Firewall rules provisioned"),
        ("monitoring", "Monitoring and alerting coverage in place"),
        ("qa-certification", "QA certification complete"),
        ("rollback", "Rollback plan documented"),
    ]
    .into_iter()
    .map(|(key, description)| ChecklistItem {
        key: key.to_string(),
        description: description.to_string(),
        mandatory: true,
        status: ChecklistStatus::Pending,
        waiver_note: None,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseAudit {
    pub at: Timestamp,
    pub actor: Actor,
    pub from: ReleaseState,
    pub to: ReleaseState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Release {
    pub id: ReleaseId,
    pub name: String,
    pub pbi_ids: Vec<String>,
    pub target_window: TimeInterval,
    pub prr: Vec<ChecklistItem>,
    pub state: ReleaseState,
    pub history: Vec<ReleaseAudit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewRelease {
    pub name: String,
    #[serde(default)]
    pub pbi_ids: Vec<String>,
    pub target_window: TimeInterval,
    #[serde(default)]
    pub prr: Option<Vec<ChecklistItem>>,
}

/// Where releases may land. An empty `release_windows` list leaves scheduling
/// unrestricted apart from freezes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseCalendar {
    #[serde(default)]
    pub release_windows: Vec<TimeInterval>,
    #[serde(default)]
    pub freeze_windows: Vec<TimeInterval>,
}

impl ReleaseCalendar {
    pub fn check(&self, window: &TimeInterval) -> Result<(), ChangeError> {
        if let Some(freeze) = self.freeze_windows.iter().find(|f| f.overlaps(window)) {
            return Err(ChangeError::Scheduling(format!("target window {window} overlaps freeze {freeze}")));
        }
        if !self.release_windows.is_empty() && !self.release_windows.iter().any(|w| w.covers(window)) {
            return Err(ChangeError::Scheduling(format!(
                "target window {window} is not inside any release window"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeCategory {
    Software,
    Hardware,
    Data,
    Configuration,
}

/// Who carries out the change: the hosting vendor or the in-house team.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeLayer {
    Vendor,
    #[default]
    InHouse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChangeState {
    Requested,
    Approved,
    Rejected,
    Executed,
    Verified,
}

impl ChangeState {
    pub const ALL: [ChangeState; 5] = [
        ChangeState::Requested,
        ChangeState::Approved,
        ChangeState::Rejected,
        ChangeState::Executed,
        ChangeState::Verified,
    ];

    pub fn can_move_to(self, to: ChangeState) -> bool {
        use ChangeState::*;
        matches!(
            (self, to),
            (Requested, Approved) | (Requested, Rejected) | (Approved, Executed) | (Executed, Verified)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeAudit {
    pub at: Timestamp,
    pub actor: Actor,
    pub from: ChangeState,
    pub to: ChangeState,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub id: ChangeId,
    pub release_id: Option<ReleaseId>,
    pub description: String,
    pub category: ChangeCategory,
    pub layer: ChangeLayer,
    pub emergency: bool,
    pub product_ids: Vec<ProductId>,
    pub state: ChangeState,
    pub requested_at: Timestamp,
    pub executed_at: Option<Timestamp>,
    pub history: Vec<ChangeAudit>,
}

impl ChangeRequest {
    pub fn was_approved(&self) -> bool {
        self.history.iter().any(|h| h.to == ChangeState::Approved)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewChange {
    #[serde(default)]
    pub release_id: Option<ReleaseId>,
    pub description: String,
    pub category: ChangeCategory,
    #[serde(default)]
    pub layer: ChangeLayer,
    #[serde(default)]
    pub emergency: bool,
    #[serde(default)]
    pub product_ids: Vec<ProductId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChangeError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown checklist item `{0}`")]
    UnknownChecklistKey(String),
    #[error("rule `release-state-machine` forbids {from:?} -> {to:?}")]
    IllegalReleaseTransition { from: ReleaseState, to: ReleaseState },
    #[error("rule `change-state-machine` forbids {from:?} -> {to:?}")]
    IllegalChangeTransition { from: ChangeState, to: ChangeState },
    #[error("rule `approved-before-execution`: change {id} is {state:?} and has not been formally approved")]
    NotApproved { id: ChangeId, state: ChangeState },
    #[error("scheduling conflict: {0}")]
    Scheduling(String),
    #[error("change {0} belongs to a release and is approved with it; only emergency changes are approved alone")]
    ReleaseBound(ChangeId),
}

pub fn create_release(
    id: ReleaseId,
    spec: NewRelease,
    calendar: &ReleaseCalendar,
    actor: &str,
    now: Timestamp,
) -> Result<Release, ChangeError> {
    if spec.name.trim().is_empty() {
        return Err(ChangeError::Validation("release name must not be empty".into()));
    }
    calendar.check(&spec.target_window)?;
    let prr = spec.prr.unwrap_or_else(default_prr_checklist);
    let mut keys = BTreeSet::new();
    if let Some(dup) = prr.iter().find(|i| !keys.insert(i.key.as_str())) {
        return Err(ChangeError::Validation(format!("duplicate checklist key `{}`", dup.key)));
    }
    Ok(Release {
        id,
        name: spec.name,
        pbi_ids: spec.pbi_ids,
        target_window: spec.target_window,
        prr,
        state: ReleaseState::Planned,
        history: vec![ReleaseAudit {
            at: crate::time::truncate(now),
            actor: actor.to_string(),
            from: ReleaseState::Planned,
            to: ReleaseState::Planned,
        }],
    })
}

fn move_release(release: &mut Release, to: ReleaseState, actor: &str, now: Timestamp) -> Result<(), ChangeError> {
    if !release.state.can_move_to(to) {
        return Err(ChangeError::IllegalReleaseTransition { from: release.state, to });
    }
    release.history.push(ReleaseAudit {
        at: crate::time::truncate(now),
        actor: actor.to_string(),
        from: release.state,
        to,
    });
    release.state = to;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistUpdate {
    pub key: String,
    pub status: ChecklistStatus,
    #[serde(default)]
    pub waiver_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrrOutcome {
    pub release: Release,
    pub passed: bool,
    /// Mandatory items still blocking, by key.
    pub failing: Vec<String>,
}

/// Applies checklist statuses and passes the gate when every mandatory item is
/// Passed or Waived with a note.
pub fn run_prr(
    release: &Release,
    updates: &[ChecklistUpdate],
    actor: &str,
    now: Timestamp,
) -> Result<PrrOutcome, ChangeError> {
    if release.state != ReleaseState::Planned {
        return Err(ChangeError::IllegalReleaseTransition { from: release.state, to: ReleaseState::PrrPassed });
    }
    let mut next = release.clone();
    for u in updates {
        let item = next
            .prr
            .iter_mut()
            .find(|i| i.key == u.key)
            .ok_or_else(|| ChangeError::UnknownChecklistKey(u.key.clone()))?;
        if u.status == ChecklistStatus::Waived && u.waiver_note.as_deref().is_none_or(|n| n.trim().is_empty()) {
            return Err(ChangeError::Validation(format!("waiving `{}` requires a waiver note", u.key)));
        }
        item.status = u.status;
        item.waiver_note = u.waiver_note.clone();
    }
    let failing: Vec<String> = next.prr.iter().filter(|i| !i.clears_gate()).map(|i| i.key.clone()).collect();
    let passed = failing.is_empty();
    if passed {
        move_release(&mut next, ReleaseState::PrrPassed, actor, now)?;
    }
    Ok(PrrOutcome { release: next, passed, failing })
}

/// Board approval. Cascades Requested -> Approved to every change attached to
/// the release and returns the updated changes.
pub fn approve_release(
    release: &Release,
    changes: &[ChangeRequest],
    calendar: &ReleaseCalendar,
    board: &str,
    now: Timestamp,
) -> Result<(Release, Vec<ChangeRequest>), ChangeError> {
    if release.state != ReleaseState::PrrPassed {
        return Err(ChangeError::IllegalReleaseTransition { from: release.state, to: ReleaseState::Approved });
    }
    calendar.check(&release.target_window)?;
    let mut next = release.clone();
    move_release(&mut next, ReleaseState::Approved, board, now)?;
    let approved = changes
        .iter()
        .filter(|c| c.release_id.as_deref() == Some(&release.id) && c.state == ChangeState::Requested)
        .map(|c| move_change(c, ChangeState::Approved, board, None, now))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((next, approved))
}

pub fn deploy_release(release: &Release, actor: &str, now: Timestamp) -> Result<Release, ChangeError> {
    let mut next = release.clone();
    move_release(&mut next, ReleaseState::Deployed, actor, now)?;
    Ok(next)
}

pub fn cancel_release(release: &Release, actor: &str, now: Timestamp) -> Result<Release, ChangeError> {
    let mut next = release.clone();
    move_release(&mut next, ReleaseState::Cancelled, actor, now)?;
    Ok(next)
}

pub fn request_change(id: ChangeId, spec: NewChange, actor: &str, now: Timestamp) -> Result<ChangeRequest, ChangeError> {
    if spec.description.trim().is_empty() {
        return Err(ChangeError::Validation("change description must not be empty".into()));
    }
    let now = crate::time::truncate(now);
    Ok(ChangeRequest {
        id,
        release_id: spec.release_id,
        description: spec.description,
        category: spec.category,
        layer: spec.layer,
        emergency: spec.emergency,
        product_ids: spec.product_ids,
        state: ChangeState::Requested,
        requested_at: now,
        executed_at: None,
        history: vec![ChangeAudit {
            at: now,
            actor: actor.to_string(),
            from: ChangeState::Requested,
            to: ChangeState::Requested,
            note: None,
        }],
    })
}

fn move_change(
    change: &ChangeRequest,
    to: ChangeState,
    actor: &str,
    note: Option<String>,
    now: Timestamp,
) -> Result<ChangeRequest, ChangeError> {
    if !change.state.can_move_to(to) {
        return Err(ChangeError::IllegalChangeTransition { from: change.state, to });
    }
    let now = crate::time::truncate(now);
    let mut next = change.clone();
    next.history.push(ChangeAudit { at: now, actor: actor.to_string(), from: change.state, to, note });
    next.state = to;
    if to == ChangeState::Executed {
        next.executed_at = Some(now);
    }
    Ok(next)
}

/// Board approval of a single change. Changes bound to a release are approved
/// through [`approve_release`] unless flagged as emergencies.
pub fn approve_change(change: &ChangeRequest, board: &str, now: Timestamp) -> Result<ChangeRequest, ChangeError> {
    if change.release_id.is_some() && !change.emergency && change.state == ChangeState::Requested {
        return Err(ChangeError::ReleaseBound(change.id.clone()));
    }
    move_change(change, ChangeState::Approved, board, None, now)
}

pub fn reject_change(change: &ChangeRequest, board: &str, note: &str, now: Timestamp) -> Result<ChangeRequest, ChangeError> {
    if note.trim().is_empty() {
        return Err(ChangeError::Validation("a rejection needs a note".into()));
    }
    move_change(change, ChangeState::Rejected, board, Some(note.to_string()), now)
}

/// Carries out an approved change. Anything not currently Approved is refused.
pub fn execute_change(change: &ChangeRequest, actor: &str, now: Timestamp) -> Result<ChangeRequest, ChangeError> {
    match change.state {
        ChangeState::Approved => move_change(change, ChangeState::Executed, actor, None, now),
        ChangeState::Requested | ChangeState::Rejected => {
            Err(ChangeError::NotApproved { id: change.id.clone(), state: change.state })
        }
        from => Err(ChangeError::IllegalChangeTransition { from, to: ChangeState::Executed }),
    }
}

pub fn verify_change(change: &ChangeRequest, actor: &str, now: Timestamp) -> Result<ChangeRequest, ChangeError> {
    move_change(change, ChangeState::Verified, actor, None, now)
}

/// Requested changes raised on or before `date`, oldest first.
pub fn daily_review_queue<'a>(
    changes: impl IntoIterator<Item = &'a ChangeRequest>,
    date: NaiveDate,
) -> Vec<ChangeRequest> {
    let mut queue: Vec<ChangeRequest> = changes
        .into_iter()
        .filter(|c| c.state == ChangeState::Requested && c.requested_at.date_naive() <= date)
        .cloned()
        .collect();
    queue.sort_by(|a, b| a.requested_at.cmp(&b.requested_at).then_with(|| a.id.cmp(&b.id)));
    queue
}

/// Changes followed within `window` by an incident on a shared product.
/// Output is sorted by (change id, incident id).
pub fn change_incident_correlation<'a>(
    changes: impl IntoIterator<Item = &'a ChangeRequest>,
    incidents: impl IntoIterator<Item = &'a Incident> + Clone,
    window: Duration,
) -> Result<Vec<(ChangeId, IncidentId)>, ChangeError> {
    if window <= Duration::zero() {
        return Err(ChangeError::Validation("correlation window must be positive".into()));
    }
    let mut pairs = BTreeSet::new();
    for change in changes {
        let Some(executed) = change.executed_at else { continue };
        for inc in incidents.clone() {
            let Some(occurred) = inc.lifecycle.occurred_at else { continue };
            let in_window = occurred >= executed && occurred <= executed + window;
            let shared = inc.product_ids.iter().any(|p| change.product_ids.contains(p));
            if in_window && shared {
                pairs.insert((change.id.clone(), inc.id.clone()));
            }
        }
    }
    Ok(pairs.into_iter().collect())
}

/// Structured schedule export of the calendar and its releases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarExport {
    pub release_windows: Vec<TimeInterval>,
    pub freeze_windows: Vec<TimeInterval>,
    pub releases: Vec<ScheduledRelease>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledRelease {
    pub id: ReleaseId,
    pub name: String,
    pub state: ReleaseState,
    pub target_window: TimeInterval,
    pub change_ids: Vec<ChangeId>,
}

pub fn export_calendar<'a>(
    calendar: &ReleaseCalendar,
    releases: impl IntoIterator<Item = &'a Release>,
    changes: impl IntoIterator<Item = &'a ChangeRequest>,
) -> CalendarExport {
    let mut by_release: BTreeMap<&str, Vec<ChangeId>> = BTreeMap::new();
    for c in changes {
        if let Some(r) = &c.release_id {
            by_release.entry(r.as_str()).or_default().push(c.id.clone());
        }
    }
    let mut scheduled: Vec<ScheduledRelease> = releases
        .into_iter()
        .map(|r| ScheduledRelease {
            id: r.id.clone(),
            name: r.name.clone(),
            state: r.state,
            target_window: r.target_window,
            change_ids: by_release.get(r.id.as_str()).cloned().unwrap_or_default(),
        })
        .collect();
    scheduled.sort_by(|a, b| a.target_window.cmp(&b.target_window).then_with(|| a.id.cmp(&b.id)));
    CalendarExport {
        release_windows: calendar.release_windows.clone(),
        freeze_windows: calendar.freeze_windows.clone(),
        releases: scheduled,
    }
}
