//! Incident lifecycle: states, lifecycle timestamps, and the closure workflow
//! that drafts availability records and problem tickets.
//!
//! Every mutation is expressed as an [`IncidentChange`] appended to the audit
//! trail, and [`Incident::replay`] rebuilds an incident from its trail alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::outage::OutageRecordDraft;
use crate::time::{TimeInterval, Timestamp};

pub type IncidentId = String;
pub type ProductId = String;
pub type Actor = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Sev1,
    Sev2,
    Sev3,
    Sev4,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Sev1, Severity::Sev2, Severity::Sev3, Severity::Sev4];
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IncidentState {
    New,
    Classified,
    InProgress,
    Resolved,
    Closed,
}

impl IncidentState {
    pub const ALL: [IncidentState; 5] = [
        IncidentState::New,
        IncidentState::Classified,
        IncidentState::InProgress,
        IncidentState::Resolved,
        IncidentState::Closed,
    ];

    /// Still being worked; alert firings may attach to it.
    pub fn is_active(self) -> bool {
        matches!(self, Self::New | Self::Classified | Self::InProgress)
    }
}

impl fmt::Display for IncidentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncidentSource {
    Alert,
    Manual,
}

/// Which severities count as "significant": closing one spawns a problem
/// ticket, and closing one that caused an outage drafts an availability record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityPolicy {
    pub significant: BTreeSet<Severity>,
}

impl Default for SeverityPolicy {
    fn default() -> Self {
        Self { significant: [Severity::Sev1, Severity::Sev2].into_iter().collect() }
    }
}

impl SeverityPolicy {
    pub fn is_significant(&self, severity: Severity) -> bool {
        self.significant.contains(&severity)
    }
}

/// Figure-1 style lifecycle timestamps. Present values never decrease in
/// declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifecycle {
    pub occurred_at: Option<Timestamp>,
    pub detected_at: Option<Timestamp>,
    pub diagnosed_at: Option<Timestamp>,
    pub repaired_at: Option<Timestamp>,
    pub recovered_at: Option<Timestamp>,
    pub restored_at: Option<Timestamp>,
}

impl Lifecycle {
    fn named(&self) -> [(&'static str, Option<Timestamp>); 6] {
        [
            ("occurred_at", self.occurred_at),
            ("detected_at", self.detected_at),
            ("diagnosed_at", self.diagnosed_at),
            ("repaired_at", self.repaired_at),
            ("recovered_at", self.recovered_at),
            ("restored_at", self.restored_at),
        ]
    }

    pub fn check_order(&self) -> Result<(), IncidentError> {
        let mut prev: Option<(&'static str, Timestamp)> = None;
        for (name, ts) in self.named() {
            let Some(ts) = ts else { continue };
            if let Some((prev_name, prev_ts)) = prev {
                if ts < prev_ts {
                    return Err(IncidentError::TimestampOrder { earlier: prev_name, later: name });
                }
            }
            prev = Some((name, ts));
        }
        Ok(())
    }

    /// Occurrence to restoration, when both are known.
    pub fn outage_interval(&self) -> Option<TimeInterval> {
        TimeInterval::new(self.occurred_at?, self.restored_at?).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: Timestamp,
    pub actor: Actor,
    pub change: IncidentChange,
}

/// Optional fields carried by a transition. Timestamps overwrite existing values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionFields {
    pub severity: Option<Severity>,
    pub causes_outage: Option<bool>,
    pub occurred_at: Option<Timestamp>,
    pub diagnosed_at: Option<Timestamp>,
    pub repaired_at: Option<Timestamp>,
    pub recovered_at: Option<Timestamp>,
    pub restored_at: Option<Timestamp>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum IncidentChange {
    Opened {
        id: IncidentId,
        product_ids: Vec<ProductId>,
        severity: Severity,
        causes_outage: bool,
        source: IncidentSource,
        title: String,
        description: String,
        occurred_at: Timestamp,
    },
    Transitioned {
        from: IncidentState,
        to: IncidentState,
        fields: TransitionFields,
    },
    ProductsEdited {
        product_ids: Vec<ProductId>,
    },
    AlertAttached {
        monitor_id: String,
        fired_at: Timestamp,
        value: f64,
        recovery: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: IncidentId,
    pub product_ids: Vec<ProductId>,
    pub severity: Severity,
    pub state: IncidentState,
    pub causes_outage: bool,
    pub lifecycle: Lifecycle,
    pub source: IncidentSource,
    pub title: String,
    pub description: String,
    pub audit_trail: Vec<AuditEntry>,
}

/// Caller-supplied details for [`open_incident`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewIncident {
    pub product_ids: Vec<ProductId>,
    pub severity: Severity,
    #[serde(default)]
    pub causes_outage: bool,
    #[serde(default = "manual")]
    pub source: IncidentSource,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub occurred_at: Option<Timestamp>,
}

fn manual() -> IncidentSource {
    IncidentSource::Manual
}

/// One row of the incident state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRule {
    pub name: &'static str,
    pub from: IncidentState,
    pub to: IncidentState,
    pub required: &'static [&'static str],
}

use IncidentState::*;

pub const TRANSITIONS: [TransitionRule; 6] = [
    TransitionRule { name: "classify", from: New, to: Classified, required: &["severity"] },
    TransitionRule { name: "start-work", from: Classified, to: InProgress, required: &[] },
    TransitionRule {
        name: "resolve",
        from: InProgress,
        to: Resolved,
        required: &["repaired_at", "recovered_at", "restored_at"],
    },
    TransitionRule { name: "close", from: Resolved, to: Closed, required: &["restored_at"] },
    TransitionRule { name: "reopen-resolved", from: Resolved, to: InProgress, required: &["note"] },
    TransitionRule { name: "reopen-closed", from: Closed, to: InProgress, required: &["note"] },
];

pub fn rule_for(from: IncidentState, to: IncidentState) -> Option<&'static TransitionRule> {
    TRANSITIONS.iter().find(|r| r.from == from && r.to == to)
}

/// Target states reachable from `from` in one step.
pub fn allowed_targets(from: IncidentState) -> Vec<IncidentState> {
    TRANSITIONS.iter().filter(|r| r.from == from).map(|r| r.to).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IncidentError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(ProductId),
    #[error("rule `incident-transition-table` forbids {from} -> {to} (allowed from {from}: {allowed:?})")]
    IllegalTransition {
        from: IncidentState,
        to: IncidentState,
        allowed: Vec<IncidentState>,
    },
    #[error("rule `{rule}` requires field `{field}`")]
    MissingField { rule: &'static str, field: &'static str },
    #[error("lifecycle timestamp `{later}` precedes `{earlier}`")]
    TimestampOrder { earlier: &'static str, later: &'static str },
    #[error("incident {0} is closed; products can no longer be edited")]
    ClosedForEdits(IncidentId),
    #[error("audit trail must start with an `opened` entry")]
    MissingOpen,
}

impl IncidentError {
    /// Name of the violated rule for state-machine errors.
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            Self::IllegalTransition { .. } => Some("incident-transition-table"),
            Self::MissingField { rule, .. } => Some(rule),
            Self::TimestampOrder { .. } => Some("lifecycle-order"),
            _ => None,
        }
    }
}

fn validate_products<F>(product_ids: &[ProductId], is_known: F) -> Result<(), IncidentError>
where
    F: Fn(&str) -> bool,
{
    if product_ids.is_empty() {
        return Err(IncidentError::Validation("at least one product id is required".into()));
    }
    match product_ids.iter().find(|p| !is_known(p)) {
        Some(p) => Err(IncidentError::UnknownProduct(p.clone())),
        None => Ok(()),
    }
}

fn dedup_products(ids: &[ProductId]) -> Vec<ProductId> {
    let mut seen = BTreeSet::new();
    ids.iter().filter(|p| seen.insert(p.as_str())).cloned().collect()
}

/// Records a new incident in state `New` with `detected_at = now`.
pub fn open_incident<F>(
    id: IncidentId,
    details: NewIncident,
    is_known_product: F,
    actor: &str,
    now: Timestamp,
) -> Result<Incident, IncidentError>
where
    F: Fn(&str) -> bool,
{
    validate_products(&details.product_ids, is_known_product)?;
    if details.title.trim().is_empty() {
        return Err(IncidentError::Validation("title must not be empty".into()));
    }
    let now = crate::time::truncate(now);
    let entry = AuditEntry {
        at: now,
        actor: actor.to_string(),
        change: IncidentChange::Opened {
            id,
            product_ids: dedup_products(&details.product_ids),
            severity: details.severity,
            causes_outage: details.causes_outage,
            source: details.source,
            title: details.title,
            description: details.description,
            occurred_at: crate::time::truncate(details.occurred_at.unwrap_or(now)),
        },
    };
    Incident::apply(None, entry)
}

impl Incident {
    /// Applies one audit entry. `current` is `None` only for the opening entry.
    pub fn apply(current: Option<Incident>, entry: AuditEntry) -> Result<Incident, IncidentError> {
        let mut inc = match (current, &entry.change) {
            (None, IncidentChange::Opened { id, product_ids, severity, causes_outage, source, title, description, occurred_at }) => {
                let inc = Incident {
                    id: id.clone(),
                    product_ids: product_ids.clone(),
                    severity: *severity,
                    state: New,
                    causes_outage: *causes_outage,
                    lifecycle: Lifecycle {
                        occurred_at: Some(*occurred_at),
                        detected_at: Some(entry.at),
                        ..Lifecycle::default()
                    },
                    source: *source,
                    title: title.clone(),
                    description: description.clone(),
                    audit_trail: Vec::new(),
                };
                inc.lifecycle.check_order()?;
                inc
            }
            (None, _) => return Err(IncidentError::MissingOpen),
            (Some(_), IncidentChange::Opened { .. }) => {
                return Err(IncidentError::Validation("incident is already open".into()))
            }
            (Some(mut inc), IncidentChange::Transitioned { from, to, fields }) => {
                if *from != inc.state {
                    return Err(IncidentError::Validation(format!(
                        "transition recorded from {from} but incident is {}",
                        inc.state
                    )));
                }
                inc.apply_transition(*to, fields)?;
                inc
            }
            (Some(mut inc), IncidentChange::ProductsEdited { product_ids }) => {
                if inc.state == Closed {
                    return Err(IncidentError::ClosedForEdits(inc.id));
                }
                validate_products(product_ids, |_| true)?;
                inc.product_ids = dedup_products(product_ids);
                inc
            }
            (Some(inc), IncidentChange::AlertAttached { .. }) => inc,
        };
        inc.audit_trail.push(entry);
        Ok(inc)
    }

    fn apply_transition(&mut self, to: IncidentState, fields: &TransitionFields) -> Result<(), IncidentError> {
        let rule = rule_for(self.state, to).ok_or_else(|| IncidentError::IllegalTransition {
            from: self.state,
            to,
            allowed: allowed_targets(self.state),
        })?;

        let mut next = self.clone();
        if let Some(sev) = fields.severity {
            next.severity = sev;
        }
        if let Some(outage) = fields.causes_outage {
            next.causes_outage = outage;
        }
        let lc = &mut next.lifecycle;
        for (slot, value) in [
            (&mut lc.occurred_at, fields.occurred_at),
            (&mut lc.diagnosed_at, fields.diagnosed_at),
            (&mut lc.repaired_at, fields.repaired_at),
            (&mut lc.recovered_at, fields.recovered_at),
            (&mut lc.restored_at, fields.restored_at),
        ] {
            if let Some(ts) = value {
                *slot = Some(crate::time::truncate(ts));
            }
        }

        for &field in rule.required {
            let present = match field {
                "severity" => fields.severity.is_some(),
                "note" => fields.note.as_deref().is_some_and(|n| !n.trim().is_empty()),
                // lifecycle requirements only bind outage incidents
                "repaired_at" => !next.causes_outage || next.lifecycle.repaired_at.is_some(),
                "recovered_at" => !next.causes_outage || next.lifecycle.recovered_at.is_some(),
                "restored_at" => !next.causes_outage || next.lifecycle.restored_at.is_some(),
                _ => true,
            };
            if !present {
                return Err(IncidentError::MissingField { rule: rule.name, field });
            }
        }
        next.lifecycle.check_order()?;
        if next.causes_outage && to == Closed && next.lifecycle.outage_interval().is_none() {
            return Err(IncidentError::Validation(
                "restored_at must be after occurred_at for an outage".into(),
            ));
        }
        next.state = to;
        *self = next;
        Ok(())
    }

    /// Rebuilds an incident from its audit trail.
    pub fn replay(trail: &[AuditEntry]) -> Result<Incident, IncidentError> {
        let mut current = None;
        for entry in trail {
            current = Some(Incident::apply(current, entry.clone())?);
        }
        current.ok_or(IncidentError::MissingOpen)
    }

    /// Whether closing this incident should draft an availability record.
    pub fn qualifies_for_record(&self, policy: &SeverityPolicy) -> bool {
        self.causes_outage && policy.is_significant(self.severity)
    }
}

pub fn transition(
    incident: &Incident,
    to: IncidentState,
    fields: TransitionFields,
    actor: &str,
    now: Timestamp,
) -> Result<Incident, IncidentError> {
    let entry = AuditEntry {
        at: crate::time::truncate(now),
        actor: actor.to_string(),
        change: IncidentChange::Transitioned { from: incident.state, to, fields },
    };
    Incident::apply(Some(incident.clone()), entry)
}

/// Replaces the impacted products. Only allowed before closure.
pub fn edit_products<F>(
    incident: &Incident,
    product_ids: Vec<ProductId>,
    is_known_product: F,
    actor: &str,
    now: Timestamp,
) -> Result<Incident, IncidentError>
where
    F: Fn(&str) -> bool,
{
    validate_products(&product_ids, is_known_product)?;
    let entry = AuditEntry {
        at: crate::time::truncate(now),
        actor: actor.to_string(),
        change: IncidentChange::ProductsEdited { product_ids },
    };
    Incident::apply(Some(incident.clone()), entry)
}

pub fn attach_alert(
    incident: &Incident,
    monitor_id: &str,
    fired_at: Timestamp,
    value: f64,
    recovery: bool,
    now: Timestamp,
) -> Result<Incident, IncidentError> {
    let entry = AuditEntry {
        at: crate::time::truncate(now),
        actor: format!("monitor:{monitor_id}"),
        change: IncidentChange::AlertAttached {
            monitor_id: monitor_id.to_string(),
            fired_at: crate::time::truncate(fired_at),
            value,
            recovery,
        },
    };
    Incident::apply(Some(incident.clone()), entry)
}

/// Request to open a root-cause analysis for a significant incident.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemTrigger {
    pub incident_id: IncidentId,
    pub severity: Severity,
    pub product_ids: Vec<ProductId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub incident: Incident,
    pub outage_draft: Option<OutageRecordDraft>,
    pub problem_trigger: Option<ProblemTrigger>,
}

/// Closes a resolved incident and derives the follow-up workflow items.
///
/// The emissions are candidates; the caller suppresses any that already exist
/// for this incident id.
pub fn close_incident(
    incident: &Incident,
    actor: &str,
    now: Timestamp,
    policy: &SeverityPolicy,
) -> Result<Closure, IncidentError> {
    close_incident_with(incident, TransitionFields::default(), actor, now, policy)
}

/// [`close_incident`] with fields (typically a late `restored_at`) set as
/// part of the closing transition.
pub fn close_incident_with(
    incident: &Incident,
    fields: TransitionFields,
    actor: &str,
    now: Timestamp,
    policy: &SeverityPolicy,
) -> Result<Closure, IncidentError> {
    if incident.state != Resolved {
        return Err(IncidentError::IllegalTransition {
            from: incident.state,
            to: Closed,
            allowed: allowed_targets(incident.state),
        });
    }
    let closed = transition(incident, Closed, fields, actor, now)?;
    let outage_draft = if closed.qualifies_for_record(policy) {
        closed.lifecycle.outage_interval().map(|outage| OutageRecordDraft {
            incident_id: closed.id.clone(),
            product_ids: closed.product_ids.clone(),
            outage,
        })
    } else {
        None
    };
    let problem_trigger = policy.is_significant(closed.severity).then(|| ProblemTrigger {
        incident_id: closed.id.clone(),
        severity: closed.severity,
        product_ids: closed.product_ids.clone(),
    });
    Ok(Closure { incident: closed, outage_draft, problem_trigger })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub total_seconds: i64,
    pub min_seconds: Option<i64>,
    pub max_seconds: Option<i64>,
    pub mean_seconds: Option<f64>,
    pub median_seconds: Option<f64>,
}

impl DurationStats {
    pub fn from_samples(mut samples: Vec<i64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let total: i64 = samples.iter().sum();
        let median = if n % 2 == 1 {
            samples[n / 2] as f64
        } else {
            (samples[n / 2 - 1] + samples[n / 2]) as f64 / 2.0
        };
        Self {
            count: n,
            total_seconds: total,
            min_seconds: samples.first().copied(),
            max_seconds: samples.last().copied(),
            mean_seconds: Some(total as f64 / n as f64),
            median_seconds: Some(median),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncidentStatistics {
    pub total: usize,
    pub by_severity: BTreeMap<Severity, usize>,
    pub by_source: BTreeMap<IncidentSource, usize>,
    pub by_product: BTreeMap<ProductId, usize>,
    pub by_state: BTreeMap<IncidentState, usize>,
    /// restored − occurred, outage incidents only.
    pub outage_durations: DurationStats,
}

/// Volumes and outage durations for incidents detected within `period`.
pub fn incident_statistics<'a>(
    incidents: impl IntoIterator<Item = &'a Incident>,
    period: &TimeInterval,
) -> IncidentStatistics {
    let mut stats = IncidentStatistics::default();
    let mut durations = Vec::new();
    for inc in incidents {
        let Some(detected) = inc.lifecycle.detected_at else { continue };
        if !period.contains(detected) {
            continue;
        }
        stats.total += 1;
        *stats.by_severity.entry(inc.severity).or_default() += 1;
        *stats.by_source.entry(inc.source).or_default() += 1;
        *stats.by_state.entry(inc.state).or_default() += 1;
        for p in &inc.product_ids {
            *stats.by_product.entry(p.clone()).or_default() += 1;
        }
        if inc.causes_outage {
            if let Some(iv) = inc.lifecycle.outage_interval() {
                durations.push(iv.duration_secs());
            }
        }
    }
    stats.outage_durations = DurationStats::from_samples(durations);
    stats
}
