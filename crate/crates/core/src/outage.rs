//! Availability records: reviewed statements of downtime per incident.
//!
//! Only `Confirmed` records feed availability figures.

use serde::{Deserialize, Serialize};

use crate::incident::{Actor, IncidentId, ProductId};
use crate::time::{TimeInterval, Timestamp};

pub type RecordId = String;

/// Record id for an incident. One record per incident, so the id is derived.
pub fn record_id_for(incident_id: &str) -> RecordId {
    format!("OR-{incident_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageRecordDraft {
    pub incident_id: IncidentId,
    pub product_ids: Vec<ProductId>,
    pub outage: TimeInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecordState {
    Draft,
    Confirmed,
    Rejected,
}

/// The values drafted from the incident before any reviewer edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftValues {
    pub product_ids: Vec<ProductId>,
    pub outage: TimeInterval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageRecord {
    pub id: RecordId,
    pub incident_id: IncidentId,
    pub product_ids: Vec<ProductId>,
    pub outage: TimeInterval,
    pub state: RecordState,
    pub drafted_at: Timestamp,
    pub reviewer: Option<Actor>,
    pub reviewed_at: Option<Timestamp>,
    pub review_note: Option<String>,
    /// Set when the reviewer changed the drafted values.
    pub original: Option<DraftValues>,
}

impl OutageRecord {
    pub fn from_draft(draft: OutageRecordDraft, now: Timestamp) -> Self {
        Self {
            id: record_id_for(&draft.incident_id),
            incident_id: draft.incident_id,
            product_ids: draft.product_ids,
            outage: draft.outage,
            state: RecordState::Draft,
            drafted_at: crate::time::truncate(now),
            reviewer: None,
            reviewed_at: None,
            review_note: None,
            original: None,
        }
    }

    pub fn names_product(&self, product_id: &str) -> bool {
        self.product_ids.iter().any(|p| p == product_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordEdits {
    pub outage: Option<TimeInterval>,
    pub product_ids: Option<Vec<ProductId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "lowercase")]
pub enum ReviewDecision {
    Confirm {
        #[serde(default)]
        edits: RecordEdits,
        #[serde(default)]
        note: Option<String>,
    },
    Reject {
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("record {id} is {state:?}; only Draft records can be reviewed")]
    NotDraft { id: RecordId, state: RecordState },
    #[error("rejecting a record requires a review note")]
    MissingNote,
    #[error("a record must name at least one product")]
    NoProducts,
}

/// Signal to recompute dashboards after a confirmation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshSignal {
    pub record_id: RecordId,
    pub product_ids: Vec<ProductId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewOutcome {
    pub record: OutageRecord,
    pub refresh: Option<RefreshSignal>,
}

pub fn review_outage(
    record: &OutageRecord,
    decision: ReviewDecision,
    reviewer: &str,
    now: Timestamp,
) -> Result<ReviewOutcome, RecordError> {
    if record.state != RecordState::Draft {
        return Err(RecordError::NotDraft { id: record.id.clone(), state: record.state });
    }
    let mut next = record.clone();
    next.reviewer = Some(reviewer.to_string());
    next.reviewed_at = Some(crate::time::truncate(now));
    match decision {
        ReviewDecision::Confirm { edits, note } => {
            if let Some(products) = &edits.product_ids {
                if products.is_empty() {
                    return Err(RecordError::NoProducts);
                }
            }
            let changed = edits.outage.is_some_and(|o| o != record.outage)
                || edits.product_ids.as_ref().is_some_and(|p| *p != record.product_ids);
            if changed {
                next.original = Some(DraftValues {
                    product_ids: record.product_ids.clone(),
                    outage: record.outage,
                });
            }
            if let Some(outage) = edits.outage {
                next.outage = outage;
            }
            if let Some(products) = edits.product_ids {
                next.product_ids = products;
            }
            next.review_note = note;
            next.state = RecordState::Confirmed;
            let refresh = RefreshSignal {
                record_id: next.id.clone(),
                product_ids: next.product_ids.clone(),
            };
            Ok(ReviewOutcome { record: next, refresh: Some(refresh) })
        }
        ReviewDecision::Reject { note } => {
            if note.trim().is_empty() {
                return Err(RecordError::MissingNote);
            }
            next.review_note = Some(note);
            next.state = RecordState::Rejected;
            Ok(ReviewOutcome { record: next, refresh: None })
        }
    }
}

/// Confirmed downtime for `product_id`, clipped to `period`, sorted.
pub fn downtime_ledger<'a>(
    records: impl IntoIterator<Item = &'a OutageRecord>,
    product_id: &str,
    period: &TimeInterval,
) -> Vec<TimeInterval> {
    let mut out: Vec<TimeInterval> = records
        .into_iter()
        .filter(|r| r.state == RecordState::Confirmed && r.names_product(product_id))
        .filter_map(|r| r.outage.intersect(period))
        .collect();
    out.sort();
    out
}
