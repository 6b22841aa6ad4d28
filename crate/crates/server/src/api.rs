//! `/api/v1` router and handlers.

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use availd_core::alert::AlertEvent;
use availd_core::change::{ChangeRequest, ChecklistUpdate, NewChange, NewRelease, Release};
use availd_core::config::ProductConfig;
use availd_core::incident::{Incident, IncidentState, NewIncident, TransitionFields};
use availd_core::metrics::{nines_ladder, NinesTier};
use availd_core::outage::{OutageRecord, RecordState, ReviewDecision};
use availd_core::problem::{ProblemState, ProblemTicket, RcaDecision, RcaDocument};
use availd_core::report::{self, year_to_date};
use availd_core::time::{TimeInterval, Timestamp};

use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

pub const ACTOR_HEADER: &str = "x-actor";

/// JSON body with errors in the API's error shape.
#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct Body<T>(pub T);

/// Query string with errors in the API's error shape.
#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
pub struct Query<T>(pub T);

/// Identity from the `X-Actor` header. Required on mutations.
pub struct Actor(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Actor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let value = parts
            .headers
            .get(ACTOR_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::trim)
            .filter(|v| !v.is_empty());
        match value {
            Some(v) => Ok(Actor(v.to_string())),
            None => Err(ApiError::new(StatusCode::BAD_REQUEST, "missing_actor", "the X-Actor header is required")),
        }
    }
}

fn optional_body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

pub fn router(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/health", get(health))
        .route("/nines", get(nines))
        .route("/products", get(list_products))
        .route("/products/{id}/availability", get(availability))
        .route("/dashboard", get(dashboard))
        .route("/alerts", post(ingest_alert))
        .route("/incidents", get(list_incidents).post(open_incident))
        .route("/incidents/{id}", get(get_incident))
        .route("/incidents/{id}/transition", post(transition_incident))
        .route("/incidents/{id}/close", post(close_incident))
        .route("/outage-records", get(list_records))
        .route("/outage-records/{id}/review", post(review_record))
        .route("/problems", get(list_problems))
        .route("/problems/{id}", get(get_problem))
        .route("/problems/{id}/rca", post(submit_rca))
        .route("/problems/{id}/review", post(review_rca))
        .route("/releases", get(list_releases).post(create_release))
        .route("/releases/{id}/prr", post(run_prr))
        .route("/releases/{id}/approve", post(approve_release))
        .route("/releases/{id}/deploy", post(deploy_release))
        .route("/releases/{id}/cancel", post(cancel_release))
        .route("/changes", get(list_changes).post(request_change))
        .route("/changes/review-queue", get(review_queue))
        .route("/changes/correlations", get(correlations))
        .route("/changes/{id}/approve", post(approve_change))
        .route("/changes/{id}/reject", post(reject_change))
        .route("/changes/{id}/execute", post(execute_change))
        .route("/changes/{id}/verify", post(verify_change))
        .route("/calendar", get(calendar))
        .route("/reports/executive", get(executive_report));
    Router::new().nest("/api/v1", v1).with_state(state)
}

#[derive(Debug, Default, Deserialize)]
pub struct RangeQuery {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
}

impl RangeQuery {
    /// `None` when neither bound is given.
    fn interval(&self) -> ApiResult<Option<TimeInterval>> {
        match (self.from, self.to) {
            (None, None) => Ok(None),
            (Some(from), Some(to)) => TimeInterval::new(from, to).map(Some).map_err(|e| {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_range", e.to_string())
                    .with_details(json!({ "from": from, "to": to }))
            }),
            _ => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_range", "give both `from` and `to`, or neither")),
        }
    }

    fn interval_or_ytd(&self, now: Timestamp) -> ApiResult<TimeInterval> {
        Ok(self.interval()?.unwrap_or_else(|| year_to_date(now)))
    }
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let seq = state.service().ledger().last_seq;
    Json(json!({ "status": "ok", "seq": seq, "dashboard_generated_at": state.dashboard().generated_at }))
}

async fn nines() -> Json<Vec<NinesTier>> {
    Json(nines_ladder())
}

async fn list_products(State(state): State<AppState>) -> Json<Vec<ProductConfig>> {
    Json(state.service().config().products.clone())
}

#[derive(Debug, Default, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum View {
    #[default]
    Percent,
    Minutes,
}

#[derive(Debug, Default, Deserialize)]
pub struct AvailabilityQuery {
    #[serde(flatten)]
    pub range: RangeQuery,
    #[serde(default)]
    pub view: View,
}

async fn availability(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AvailabilityQuery>,
) -> ApiResult<Response> {
    let period = q.range.interval_or_ytd(state.now())?;
    let view = state.service().availability(&id, &period)?;
    Ok(match q.view {
        View::Percent => Json(view).into_response(),
        View::Minutes => Json(view.minutes()).into_response(),
    })
}

async fn dashboard(State(state): State<AppState>, Query(q): Query<RangeQuery>) -> ApiResult<Response> {
    match q.interval()? {
        None => Ok(Json(state.dashboard().as_ref().clone()).into_response()),
        Some(period) => {
            let snapshot = state.service().dashboard(Some(period), state.now());
            Ok(Json(snapshot).into_response())
        }
    }
}

async fn ingest_alert(State(state): State<AppState>, Body(event): Body<AlertEvent>) -> ApiResult<impl IntoResponse> {
    let outcome = state.service().ingest_alert(event, state.now())?;
    Ok((StatusCode::ACCEPTED, Json(outcome)))
}

fn parse_state<T: DeserializeOwned>(raw: &str, all: &[&str]) -> ApiResult<T> {
    let name = all
        .iter()
        .find(|n| n.eq_ignore_ascii_case(raw) || n.replace('_', "").eq_ignore_ascii_case(&raw.replace(['_', '-'], "")))
        .ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", format!("unknown state `{raw}`"))
                .with_details(json!({ "allowed": all }))
        })?;
    Ok(serde_json::from_value(json!(name)).expect("listed states deserialize"))
}

#[derive(Debug, Default, Deserialize)]
pub struct StateQuery {
    pub state: Option<String>,
}

async fn list_incidents(State(state): State<AppState>, Query(q): Query<StateQuery>) -> ApiResult<Json<Vec<Incident>>> {
    let filter: Option<IncidentState> = match &q.state {
        Some(s) => Some(parse_state(s, &["New", "Classified", "InProgress", "Resolved", "Closed"])?),
        None => None,
    };
    let service = state.service();
    Ok(Json(service.ledger().incidents.values().filter(|i| filter.is_none_or(|f| i.state == f)).cloned().collect()))
}

async fn get_incident(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Incident>> {
    Ok(Json(state.service().ledger().incident(&id).map_err(availd_core::service::ServiceError::from)?.clone()))
}

async fn open_incident(
    State(state): State<AppState>,
    Actor(actor): Actor,
    Body(details): Body<NewIncident>,
) -> ApiResult<impl IntoResponse> {
    let inc = state.service().open_incident(details, &actor, state.now())?;
    Ok((StatusCode::CREATED, Json(inc)))
}

#[derive(Debug, Deserialize)]
pub struct TransitionBody {
    pub to: IncidentState,
    #[serde(flatten)]
    pub fields: TransitionFields,
}

async fn transition_incident(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(actor): Actor,
    Body(body): Body<TransitionBody>,
) -> ApiResult<impl IntoResponse> {
    let update = state.service().transition_incident(&id, body.to, body.fields, &actor, state.now())?;
    Ok(Json(update))
}

async fn close_incident(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(actor): Actor,
    bytes: Bytes,
) -> ApiResult<impl IntoResponse> {
    let fields: TransitionFields = optional_body(&bytes)?;
    let update = state.service().close_incident(&id, fields, &actor, state.now())?;
    Ok(Json(update))
}

async fn list_records(State(state): State<AppState>, Query(q): Query<StateQuery>) -> ApiResult<Json<Vec<OutageRecord>>> {
    let filter: Option<RecordState> = match &q.state {
        Some(s) => Some(parse_state(s, &["Draft", "Confirmed", "Rejected"])?),
        None => None,
    };
    let service = state.service();
    Ok(Json(service.ledger().outage_records.values().filter(|r| filter.is_none_or(|f| r.state == f)).cloned().collect()))
}

async fn review_record(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(actor): Actor,
    Body(decision): Body<ReviewDecision>,
) -> ApiResult<Json<OutageRecord>> {
    let outcome = state.service().review_outage(&id, decision, &actor, state.now())?;
    if let Some(signal) = &outcome.refresh {
        tracing::info!(record = %signal.record_id, products = ?signal.product_ids, "record confirmed; refreshing dashboard");
        state.refresh_dashboard();
    }
    Ok(Json(outcome.record))
}

async fn list_problems(State(state): State<AppState>, Query(q): Query<StateQuery>) -> ApiResult<Json<Vec<ProblemTicket>>> {
    let filter: Option<ProblemState> = match &q.state {
        Some(s) => Some(parse_state(s, &["Open", "RcaSubmitted", "Approved"])?),
        None => None,
    };
    let service = state.service();
    Ok(Json(service.ledger().problems.values().filter(|p| filter.is_none_or(|f| p.state == f)).cloned().collect()))
}

async fn get_problem(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ProblemTicket>> {
    Ok(Json(state.service().ledger().problem(&id).map_err(availd_core::service::ServiceError::from)?.clone()))
}

async fn submit_rca(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(_actor): Actor,
    Body(rca): Body<RcaDocument>,
) -> ApiResult<Json<ProblemTicket>> {
    Ok(Json(state.service().submit_rca(&id, rca, state.now())?))
}

#[derive(Debug, Deserialize)]
pub struct RcaReviewBody {
    pub decision: RcaDecision,
    #[serde(default)]
    pub note: String,
}

async fn review_rca(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(actor): Actor,
    Body(body): Body<RcaReviewBody>,
) -> ApiResult<Json<ProblemTicket>> {
    Ok(Json(state.service().review_rca(&id, &actor, body.decision, &body.note, state.now())?))
}

async fn list_releases(State(state): State<AppState>) -> Json<Vec<Release>> {
    Json(state.service().ledger().releases.values().cloned().collect())
}

async fn create_release(
    State(state): State<AppState>,
    Actor(actor): Actor,
    Body(spec): Body<NewRelease>,
) -> ApiResult<impl IntoResponse> {
    let release = state.service().create_release(spec, &actor, state.now())?;
    Ok((StatusCode::CREATED, Json(release)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PrrBody {
    Wrapped { updates: Vec<ChecklistUpdate> },
    Bare(Vec<ChecklistUpdate>),
}

async fn run_prr(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(actor): Actor,
    Body(body): Body<PrrBody>,
) -> ApiResult<impl IntoResponse> {
    let updates = match body {
        PrrBody::Wrapped { updates } | PrrBody::Bare(updates) => updates,
    };
    Ok(Json(state.service().run_prr(&id, updates, &actor, state.now())?))
}

#[derive(Debug, Serialize)]
pub struct ApprovedRelease {
    pub release: Release,
    pub approved_changes: Vec<ChangeRequest>,
}

async fn approve_release(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(board): Actor,
) -> ApiResult<Json<ApprovedRelease>> {
    let (release, approved_changes) = state.service().approve_release(&id, &board, state.now())?;
    Ok(Json(ApprovedRelease { release, approved_changes }))
}

async fn deploy_release(State(state): State<AppState>, Path(id): Path<String>, Actor(actor): Actor) -> ApiResult<Json<Release>> {
    Ok(Json(state.service().deploy_release(&id, &actor, state.now())?))
}

async fn cancel_release(State(state): State<AppState>, Path(id): Path<String>, Actor(actor): Actor) -> ApiResult<Json<Release>> {
    Ok(Json(state.service().cancel_release(&id, &actor, state.now())?))
}

async fn list_changes(State(state): State<AppState>) -> Json<Vec<ChangeRequest>> {
    Json(state.service().ledger().changes.values().cloned().collect())
}

async fn request_change(
    State(state): State<AppState>,
    Actor(actor): Actor,
    Body(spec): Body<NewChange>,
) -> ApiResult<impl IntoResponse> {
    let change = state.service().request_change(spec, &actor, state.now())?;
    Ok((StatusCode::CREATED, Json(change)))
}

#[derive(Debug, Default, Deserialize)]
pub struct QueueQuery {
    pub date: Option<NaiveDate>,
}

async fn review_queue(State(state): State<AppState>, Query(q): Query<QueueQuery>) -> Json<Vec<ChangeRequest>> {
    let date = q.date.unwrap_or_else(|| state.now().date_naive());
    Json(state.service().review_queue(date))
}

#[derive(Debug, Serialize)]
pub struct Correlation {
    pub change_id: String,
    pub incident_id: String,
}

async fn correlations(State(state): State<AppState>) -> ApiResult<Json<Vec<Correlation>>> {
    let pairs = state.service().correlations()?;
    Ok(Json(pairs.into_iter().map(|(change_id, incident_id)| Correlation { change_id, incident_id }).collect()))
}

async fn approve_change(State(state): State<AppState>, Path(id): Path<String>, Actor(board): Actor) -> ApiResult<Json<ChangeRequest>> {
    Ok(Json(state.service().approve_change(&id, &board, state.now())?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct NoteBody {
    pub note: String,
}

async fn reject_change(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Actor(board): Actor,
    bytes: Bytes,
) -> ApiResult<Json<ChangeRequest>> {
    let body: NoteBody = optional_body(&bytes)?;
    Ok(Json(state.service().reject_change(&id, &board, &body.note, state.now())?))
}

async fn execute_change(State(state): State<AppState>, Path(id): Path<String>, Actor(actor): Actor) -> ApiResult<Json<ChangeRequest>> {
    Ok(Json(state.service().execute_change(&id, &actor, state.now())?))
}

async fn verify_change(State(state): State<AppState>, Path(id): Path<String>, Actor(actor): Actor) -> ApiResult<Json<ChangeRequest>> {
    Ok(Json(state.service().verify_change(&id, &actor, state.now())?))
}

async fn calendar(State(state): State<AppState>) -> Json<availd_core::change::CalendarExport> {
    Json(state.service().calendar_export())
}

#[derive(Debug, Default, Deserialize)]
pub struct ReportQuery {
    #[serde(flatten)]
    pub range: RangeQuery,
    pub format: Option<String>,
}

async fn executive_report(State(state): State<AppState>, Query(q): Query<ReportQuery>) -> ApiResult<Response> {
    let period = q.range.interval_or_ytd(state.now())?;
    let report = state.service().executive_report(&period);
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("text") => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], report::render_text(&report)).into_response()),
        Some(other) => Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", format!("unknown format `{other}`"))),
    }
}
