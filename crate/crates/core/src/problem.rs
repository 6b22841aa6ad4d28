//! Root-cause analysis workflow.
//!
//! A significant incident spawns exactly one problem ticket, assigned to the
//! product's resolver with a due date `rca_sla_days` after creation. The RCA
//! document is reviewed by someone other than the assignee.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::incident::{Actor, IncidentId, ProblemTrigger, SeverityPolicy};
use crate::time::Timestamp;

pub type ProblemId = String;

pub const DEFAULT_RCA_SLA_DAYS: u32 = 10;

pub fn problem_id_for(incident_id: &str) -> ProblemId {
    format!("PRB-{incident_id}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProblemState {
    Open,
    RcaSubmitted,
    Approved,
}

impl ProblemState {
    pub fn is_terminal(self) -> bool {
        self == Self::Approved
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FishboneCategory {
    People,
    Process,
    Technology,
    Environment,
    Materials,
    Measurement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at: Timestamp,
    pub text: String,
}

/// One step of a 5-Whys chain. Every step after the first names the index of
/// the answer it asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Why {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub follows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionItem {
    pub action: String,
    pub owner: Actor,
    pub target_date: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcaDocument {
    pub timeline: Vec<TimelineEntry>,
    pub fishbone: BTreeMap<FishboneCategory, Vec<String>>,
    pub five_whys: Vec<Why>,
    pub root_cause: String,
    pub corrective_actions: Vec<ActionItem>,
    pub preventative_actions: Vec<ActionItem>,
}

impl RcaDocument {
    /// Lists every missing or malformed part; empty means complete.
    pub fn missing_parts(&self) -> Vec<String> {
        let mut missing = Vec::new();
        if self.root_cause.trim().is_empty() {
            missing.push("root_cause required".to_string());
        }
        if self.corrective_actions.is_empty() {
            missing.push("corrective_actions required".to_string());
        }
        if self.five_whys.is_empty() {
            missing.push("five_whys requires at least one step".to_string());
        }
        for (i, why) in self.five_whys.iter().enumerate() {
            let expected = i.checked_sub(1);
            if why.follows != expected {
                missing.push(match expected {
                    None => "five_whys[0] must not follow another answer".to_string(),
                    Some(prev) => format!("five_whys[{i}] must follow answer {prev}"),
                });
            }
            if why.question.trim().is_empty() || why.answer.trim().is_empty() {
                missing.push(format!("five_whys[{i}] needs a question and an answer"));
            }
        }
        if let Some(i) = self.timeline.windows(2).position(|w| w[1].at < w[0].at) {
            missing.push(format!("timeline[{}] is earlier than timeline[{i}]", i + 1));
        }
        for (kind, items) in [("corrective", &self.corrective_actions), ("preventative", &self.preventative_actions)] {
            for (i, a) in items.iter().enumerate() {
                if a.action.trim().is_empty() || a.owner.trim().is_empty() {
                    missing.push(format!("{kind}_actions[{i}] needs an action and an owner"));
                }
            }
        }
        missing
    }

    pub fn is_complete(&self) -> bool {
        self.missing_parts().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RcaDecision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcaReview {
    pub reviewer: Actor,
    pub decision: RcaDecision,
    pub note: String,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemTicket {
    pub id: ProblemId,
    pub incident_id: IncidentId,
    pub assignee: Actor,
    pub management_chain: Vec<Actor>,
    pub created_at: Timestamp,
    pub due_at: Timestamp,
    pub state: ProblemState,
    pub rca: Option<RcaDocument>,
    pub submitted_at: Option<Timestamp>,
    pub late: bool,
    /// Reviewer of the most recent decision.
    pub reviewer: Option<Actor>,
    pub reviews: Vec<RcaReview>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProblemError {
    #[error("incident {0} is not significant; no problem ticket")]
    NotSignificant(IncidentId),
    #[error("RCA incomplete: {}", .0.join("; "))]
    IncompleteRca(Vec<String>),
    #[error("problem {id} is {state:?}; {action} requires {required:?}")]
    WrongState {
        id: ProblemId,
        state: ProblemState,
        action: &'static str,
        required: ProblemState,
    },
    #[error("rule `independent-review`: assignee {0} cannot review their own RCA")]
    SelfReview(Actor),
    #[error("validation failed: {0}")]
    Validation(String),
}

pub fn spawn_problem(
    trigger: &ProblemTrigger,
    assignee: &str,
    management_chain: Vec<Actor>,
    now: Timestamp,
    policy: &SeverityPolicy,
    rca_sla_days: u32,
) -> Result<ProblemTicket, ProblemError> {
    if !policy.is_significant(trigger.severity) {
        return Err(ProblemError::NotSignificant(trigger.incident_id.clone()));
    }
    if assignee.trim().is_empty() {
        return Err(ProblemError::Validation("assignee must not be empty".into()));
    }
    let created_at = crate::time::truncate(now);
    Ok(ProblemTicket {
        id: problem_id_for(&trigger.incident_id),
        incident_id: trigger.incident_id.clone(),
        assignee: assignee.to_string(),
        management_chain,
        created_at,
        due_at: created_at + Duration::days(i64::from(rca_sla_days)),
        state: ProblemState::Open,
        rca: None,
        submitted_at: None,
        late: false,
        reviewer: None,
        reviews: Vec::new(),
    })
}

fn require(ticket: &ProblemTicket, required: ProblemState, action: &'static str) -> Result<(), ProblemError> {
    if ticket.state == required {
        Ok(())
    } else {
        Err(ProblemError::WrongState { id: ticket.id.clone(), state: ticket.state, action, required })
    }
}

pub fn submit_rca(ticket: &ProblemTicket, rca: RcaDocument, now: Timestamp) -> Result<ProblemTicket, ProblemError> {
    require(ticket, ProblemState::Open, "submit_rca")?;
    let missing = rca.missing_parts();
    if !missing.is_empty() {
        return Err(ProblemError::IncompleteRca(missing));
    }
    let now = crate::time::truncate(now);
    let mut next = ticket.clone();
    next.rca = Some(rca);
    next.submitted_at = Some(now);
    next.late = now > ticket.due_at;
    next.state = ProblemState::RcaSubmitted;
    Ok(next)
}

/// Approval is terminal; rejection returns the ticket to `Open` with the
/// document kept for revision.
pub fn review_rca(
    ticket: &ProblemTicket,
    reviewer: &str,
    decision: RcaDecision,
    note: &str,
    now: Timestamp,
) -> Result<ProblemTicket, ProblemError> {
    if reviewer == ticket.assignee {
        return Err(ProblemError::SelfReview(reviewer.to_string()));
    }
    require(ticket, ProblemState::RcaSubmitted, "review_rca")?;
    if decision == RcaDecision::Reject && note.trim().is_empty() {
        return Err(ProblemError::Validation("a rejection needs a note".into()));
    }
    let mut next = ticket.clone();
    next.reviewer = Some(reviewer.to_string());
    next.reviews.push(RcaReview {
        reviewer: reviewer.to_string(),
        decision,
        note: note.to_string(),
        at: crate::time::truncate(now),
    });
    next.state = match decision {
        RcaDecision::Approve => ProblemState::Approved,
        RcaDecision::Reject => ProblemState::Open,
    };
    Ok(next)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RcaBacklog {
    /// Tickets not yet approved.
    pub open_count: usize,
    /// Of those, tickets waiting on review.
    pub awaiting_review: usize,
    pub overdue_count: usize,
    pub mean_age_seconds: Option<f64>,
}

pub fn rca_backlog_report<'a>(tickets: impl IntoIterator<Item = &'a ProblemTicket>, now: Timestamp) -> RcaBacklog {
    let mut report = RcaBacklog::default();
    let mut age_total = 0i64;
    for t in tickets.into_iter().filter(|t| !t.state.is_terminal()) {
        report.open_count += 1;
        if t.state == ProblemState::RcaSubmitted {
            report.awaiting_review += 1;
        }
        if now > t.due_at {
            report.overdue_count += 1;
        }
        age_total += (now - t.created_at).num_seconds();
    }
    if report.open_count > 0 {
        report.mean_age_seconds = Some(age_total as f64 / report.open_count as f64);
    }
    report
}

/// Plain-text export of a ticket and its RCA.
pub fn render_report(ticket: &ProblemTicket) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Problem {} (incident {})", ticket.id, ticket.incident_id);
    let _ = writeln!(out, "State: {:?}{}", ticket.state, if ticket.late { " (late)" } else { "" });
    let _ = writeln!(out, "Assignee: {}", ticket.assignee);
    if !ticket.management_chain.is_empty() {
        let _ = writeln!(out, "Management chain: {}", ticket.management_chain.join(" > "));
    }
    let _ = writeln!(out, "Created: {}", ticket.created_at.to_rfc3339());
    let _ = writeln!(out, "Due: {}", ticket.due_at.to_rfc3339());
    let Some(rca) = &ticket.rca else {
        let _ = writeln!(out, "\nNo RCA submitted.");
        return out;
    };
    let _ = writeln!(out, "\nTimeline");
    for e in &rca.timeline {
        let _ = writeln!(out, "  {}  {}", e.at.to_rfc3339(), e.text);
    }
    let _ = writeln!(out, "\nCausal factors");
    for (cat, factors) in &rca.fishbone {
        let _ = writeln!(out, "  {cat:?}: {}", factors.join("; "));
    }
    let _ = writeln!(out, "\nFive whys");
    for (i, w) in rca.five_whys.iter().enumerate() {
        let _ = writeln!(out, "  {}. {} -> {}", i + 1, w.question, w.answer);
    }
    let _ = writeln!(out, "\nRoot cause: {}", rca.root_cause);
    for (title, items) in [("Corrective actions", &rca.corrective_actions), ("Preventative actions", &rca.preventative_actions)] {
        let _ = writeln!(out, "\n{title}");
        for a in items {
            let _ = writeln!(out, "  - {} (owner {}, by {})", a.action, a.owner, a.target_date);
        }
    }
    for r in &ticket.reviews {
        let _ = writeln!(out, "\nReview by {} at {}: {:?} {}", r.reviewer, r.at.to_rfc3339(), r.decision, r.note);
    }
    out
}
