//! JSON error bodies: `{code, message, details}`.

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use availd_core::alert::AlertError;
use availd_core::change::ChangeError;
use availd_core::incident::IncidentError;
use availd_core::outage::RecordError;
use availd_core::problem::ProblemError;
use availd_core::service::ServiceError;
use availd_core::store::StoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), details: Value::Null } }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.body.details = details;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{kind} `{id}` not found"))
            .with_details(json!({ "kind": kind, "id": id }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", r.body_text())
    }
}

fn rule(status: StatusCode, code: &str, rule: &str, message: String) -> ApiError {
    ApiError::new(status, code, message).with_details(json!({ "rule": rule }))
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match e {
            ServiceError::NotFound { kind, id } => Self::not_found(kind, &id),
            ServiceError::Validation(_) => Self::new(S::BAD_REQUEST, "validation", message),
            ServiceError::Incident(e) => match e {
                IncidentError::IllegalTransition { from, to, allowed } => Self::new(S::CONFLICT, "illegal_transition", message)
                    .with_details(json!({ "rule": "incident-transition-table", "from": from, "to": to, "allowed": allowed })),
                IncidentError::MissingField { rule, field } => Self::new(S::UNPROCESSABLE_ENTITY, "missing_field", message)
                    .with_details(json!({ "rule": rule, "field": field })),
                IncidentError::TimestampOrder { earlier, later } => Self::new(S::UNPROCESSABLE_ENTITY, "lifecycle_order", message)
                    .with_details(json!({ "rule": "lifecycle-order", "earlier": earlier, "later": later })),
                IncidentError::ClosedForEdits(_) => Self::new(S::CONFLICT, "closed_for_edits", message),
                IncidentError::UnknownProduct(p) => {
                    Self::new(S::BAD_REQUEST, "unknown_product", message).with_details(json!({ "product_id": p }))
                }
                IncidentError::Validation(_) | IncidentError::MissingOpen => Self::new(S::BAD_REQUEST, "validation", message),
            },
            ServiceError::Record(e) => match e {
                RecordError::NotDraft { state, .. } => Self::new(S::CONFLICT, "record_not_draft", message)
                    .with_details(json!({ "rule": "record-review-once", "state": state })),
                RecordError::MissingNote | RecordError::NoProducts => Self::new(S::BAD_REQUEST, "validation", message),
            },
            ServiceError::Problem(e) => match e {
                ProblemError::SelfReview(_) => rule(S::FORBIDDEN, "self_review", "independent-review", message),
                ProblemError::WrongState { state, required, action, .. } => Self::new(S::CONFLICT, "wrong_state", message)
                    .with_details(json!({ "rule": "problem-state-machine", "state": state, "required": required, "action": action })),
                ProblemError::IncompleteRca(missing) => Self::new(S::UNPROCESSABLE_ENTITY, "incomplete_rca", message)
                    .with_details(json!({ "rule": "rca-completeness", "missing": missing })),
                ProblemError::NotSignificant(_) => rule(S::CONFLICT, "not_significant", "significant-incident", message),
                ProblemError::Validation(_) => Self::new(S::BAD_REQUEST, "validation", message),
            },
            ServiceError::Change(e) => match e {
                ChangeError::IllegalReleaseTransition { .. } => {
                    rule(S::CONFLICT, "illegal_transition", "release-state-machine", message)
                }
                ChangeError::IllegalChangeTransition { .. } => {
                    rule(S::CONFLICT, "illegal_transition", "change-state-machine", message)
                }
                ChangeError::NotApproved { .. } => rule(S::CONFLICT, "not_approved", "approved-before-execution", message),
                ChangeError::Scheduling(_) => rule(S::CONFLICT, "scheduling_conflict", "release-calendar", message),
                ChangeError::ReleaseBound(_) => rule(S::CONFLICT, "release_bound", "release-approval", message),
                ChangeError::Validation(_) | ChangeError::UnknownChecklistKey(_) => {
                    Self::new(S::BAD_REQUEST, "validation", message)
                }
            },
            ServiceError::Alert(e) => match e {
                AlertError::UnknownMonitor(m) => {
                    Self::new(S::UNPROCESSABLE_ENTITY, "unknown_monitor", message).with_details(json!({ "monitor_id": m }))
                }
                AlertError::Invalid(_) => Self::new(S::BAD_REQUEST, "invalid_alert", message),
            },
            ServiceError::Metrics(_) => Self::new(S::BAD_REQUEST, "invalid_range", message),
            ServiceError::Store(StoreError::Conflict { seq }) => {
                Self::new(S::CONFLICT, "seq_conflict", message).with_details(json!({ "seq": seq }))
            }
            ServiceError::Store(_) => {
                tracing::error!(error = %message, "storage failure; mutation refused");
                Self::new(S::SERVICE_UNAVAILABLE, "storage_failure", message)
            }
            ServiceError::Ledger(_) => {
                tracing::error!(error = %message, "ledger rejected committed events");
                Self::new(S::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
