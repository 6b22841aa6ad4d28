//! Independent oracles and generators shared by integration and acceptance
//! tests. Nothing here calls the interval or schedule code under test.
#![allow(dead_code)]

use std::collections::BTreeMap;

use availd_core::alert::{AlertEvent, Comparator, MonitorLayer, MonitorProfile, Threshold};
use availd_core::change::{ChangeCategory, ChangeState, ChecklistStatus, ChecklistUpdate, NewChange, NewRelease};
use availd_core::config::{ProductConfig, ScheduleSpec, ServiceConfig, WindowSpec};
use availd_core::incident::{IncidentSource, IncidentState, NewIncident, Severity, TransitionFields};
use availd_core::metrics::{OperationsSchedule, WeeklyWindow};
use availd_core::outage::{RecordEdits, RecordState, ReviewDecision};
use availd_core::problem::{ActionItem, FishboneCategory, ProblemState, RcaDecision, RcaDocument, TimelineEntry, Why};
use availd_core::service::Service;
use availd_core::time::{from_epoch, TimeInterval, Timestamp};
use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------- oracles

/// Minute-granular case: everything is expressed in whole epoch minutes.
#[derive(Debug, Clone)]
pub struct MinuteCase {
    /// (weekday index from Monday, start minute of day, end minute of day)
    pub windows: Vec<(u32, u32, u32)>,
    pub maintenance: Vec<(i64, i64)>,
    pub outages: Vec<(i64, i64)>,
    pub period: (i64, i64),
}

/// Marks each minute of the period planned/down by direct enumeration.
/// Returns (planned minutes, down minutes).
pub fn minute_grid_oracle(case: &MinuteCase) -> (i64, i64) {
    let mut planned = 0;
    let mut down = 0;
    for m in case.period.0..case.period.1 {
        let ts = from_epoch(m * 60);
        let dow = ts.weekday().num_days_from_monday();
        let mod_ = ((m % 1440) + 1440) % 1440;
        let in_window = case.windows.iter().any(|&(d, s, e)| d == dow && (s as i64) <= mod_ && mod_ < e as i64);
        let in_maint = case.maintenance.iter().any(|&(s, e)| s <= m && m < e);
        if !in_window || in_maint {
            continue;
        }
        planned += 1;
        if case.outages.iter().any(|&(s, e)| s <= m && m < e) {
            down += 1;
        }
    }
    (planned, down)
}

pub fn weekday_from_index(i: u32) -> Weekday {
    [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun][i as usize]
}

pub fn minute_interval((s, e): (i64, i64)) -> TimeInterval {
    TimeInterval::from_epoch_secs(s * 60, e * 60).expect("generated interval is valid")
}

impl MinuteCase {
    pub fn schedule(&self) -> OperationsSchedule {
        OperationsSchedule {
            weekly_windows: self
                .windows
                .iter()
                .map(|&(d, s, e)| WeeklyWindow::new(weekday_from_index(d), s * 60, e * 60))
                .collect(),
            maintenance_exceptions: self.maintenance.iter().copied().map(minute_interval).collect(),
        }
    }

    pub fn period_interval(&self) -> TimeInterval {
        minute_interval(self.period)
    }

    pub fn outage_intervals(&self) -> Vec<TimeInterval> {
        self.outages.iter().copied().map(minute_interval).collect()
    }
}

/// 2024-01-01T00:00Z in minutes.
const BASE_MINUTE: i64 = 1_704_067_200 / 60;

fn random_span(rng: &mut StdRng, lo: i64, hi: i64, max_len: i64) -> (i64, i64) {
    let s = rng.gen_range(lo..hi);
    let len = rng.gen_range(1..=max_len);
    (s, s + len)
}

pub fn random_minute_case(rng: &mut StdRng) -> MinuteCase {
    let mut windows = Vec::new();
    if rng.gen_bool(0.15) {
        for d in 0..7 {
            windows.push((d, 0, 1440));
        }
    } else {
        for d in 0..7 {
            // up to three disjoint windows per day from sorted breakpoints
            let n = rng.gen_range(0..=3usize);
            let mut cuts: Vec<u32> = (0..n * 2).map(|_| rng.gen_range(0..=1440)).collect();
            cuts.sort_unstable();
            cuts.dedup();
            for pair in cuts.chunks_exact(2) {
                if pair[0] < pair[1] {
                    windows.push((d, pair[0], pair[1]));
                }
            }
        }
    }
    let start = BASE_MINUTE + rng.gen_range(0..2 * 365 * 1440);
    let len = rng.gen_range(1..=10 * 1440);
    let period = (start, start + len);
    let around = (start - 1440, start + len + 1440);
    let maintenance = (0..rng.gen_range(0..=2)).map(|_| random_span(rng, around.0, around.1, 600)).collect();
    let outages = (0..rng.gen_range(0..=6)).map(|_| random_span(rng, around.0, around.1, 2000)).collect();
    MinuteCase { windows, maintenance, outages, period }
}

/// e^x for x >= 0 as a Taylor series of positive terms; no cancellation.
pub fn exp_series(x: f64) -> f64 {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1.0f64;
    while term > sum * 1e-20 {
        term *= x / k;
        sum += term;
        k += 1.0;
    }
    sum
}

/// e^-x from [`exp_series`].
pub fn exp_neg_oracle(x: f64) -> f64 {
    1.0 / exp_series(x)
}

/// e^-x to 30 significant digits, computed offline with arbitrary precision.
#[allow(clippy::excessive_precision)]
pub const EXP_NEG_REFERENCE: [(f64, f64); 5] = [
    (0.0, 1.0),
    (0.1, 0.904_837_418_035_959_573_164_249_684_36),
    (1.0, 0.367_879_441_171_442_321_595_523_770_161),
    (5.0, 0.006_737_946_999_085_467_096_636_048_423_15),
    (20.0, 2.061_153_622_438_557_827_965_940_380_72e-9),
];

pub fn rel_err(actual: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        actual.abs()
    } else {
        ((actual - expected) / expected).abs()
    }
}

/// Random non-overlapping (occurred, restored) history in epoch seconds.
pub fn random_history(rng: &mut StdRng) -> Vec<(i64, i64)> {
    let n = rng.gen_range(1..=40);
    let mut t = 1_700_000_000 + rng.gen_range(0..1_000_000i64);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let repair = rng.gen_range(1..=86_400);
        out.push((t, t + repair));
        t += repair + rng.gen_range(0..=30 * 86_400);
    }
    out
}

// ------------------------------------------------------- service fixtures

pub const T0: i64 = 1_740_787_200; // 2025-03-01T00:00:00Z

pub fn ts(secs_after_t0: i64) -> Timestamp {
    from_epoch(T0 + secs_after_t0)
}

pub fn march_2025() -> TimeInterval {
    TimeInterval::from_epoch_secs(T0, T0 + 31 * 86_400).unwrap()
}

pub fn test_config() -> ServiceConfig {
    ServiceConfig {
        products: vec![
            ProductConfig {
                id: "P1".into(),
                name: "Checkout".into(),
                sla_target_percent: 99.9,
                schedule: ScheduleSpec::default(),
                maintenance: Vec::new(),
                resolver: Some("sam".into()),
                management_chain: vec!["lee".into()],
            },
            ProductConfig {
                id: "P2".into(),
                name: "Reporting".into(),
                sla_target_percent: 99.5,
                schedule: ScheduleSpec::Windows(vec![WindowSpec {
                    days: vec!["weekdays".into()],
                    start: "06:00".into(),
                    end: "22:00".into(),
                }]),
                maintenance: Vec::new(),
                resolver: None,
                management_chain: Vec::new(),
            },
        ],
        monitors: vec![
            MonitorProfile {
                monitor_id: "probe-p1".into(),
                product_id: "P1".into(),
                layer: MonitorLayer::ExternalProbe,
                metric: "up".into(),
                threshold: Threshold { comparator: Comparator::Lt, value: 1.0 },
                severity_on_fire: Severity::Sev1,
                dedup_window_seconds: 900,
                marks_outage: None,
            },
            MonitorProfile {
                monitor_id: "cpu-p2".into(),
                product_id: "P2".into(),
                layer: MonitorLayer::Infrastructure,
                metric: "cpu_percent".into(),
                threshold: Threshold { comparator: Comparator::Gt, value: 90.0 },
                severity_on_fire: Severity::Sev3,
                dedup_window_seconds: 1800,
                marks_outage: None,
            },
        ],
        ..ServiceConfig::default()
    }
}

pub fn complete_rca(at: Timestamp) -> RcaDocument {
    RcaDocument {
        timeline: vec![TimelineEntry { at, text: "database failover stalled".into() }],
        fishbone: BTreeMap::from([(FishboneCategory::Technology, vec!["replica lag".into()])]),
        five_whys: vec![
            Why { question: "Why did checkout fail?".into(), answer: "primary db hung".into(), follows: None },
            Why { question: "Why did it hang?".into(), answer: "disk filled".into(), follows: Some(0) },
        ],
        root_cause: "unbounded audit table growth".into(),
        corrective_actions: vec![ActionItem {
            action: "add retention job".into(),
            owner: "dba".into(),
            target_date: NaiveDate::from_ymd_opt(2025, 4, 1).unwrap(),
        }],
        preventative_actions: Vec::new(),
    }
}

pub fn resolve_fields(restored: Timestamp) -> TransitionFields {
    TransitionFields {
        repaired_at: Some(restored),
        recovered_at: Some(restored),
        restored_at: Some(restored),
        ..TransitionFields::default()
    }
}

/// What happened during a random run, for assertions.
#[derive(Debug, Default, Clone)]
pub struct RunStats {
    pub ops: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub redeliveries: usize,
    pub alerts_sent: u64,
}

const ACTORS: [&str; 4] = ["alice", "bob", "sam", "lee"];

fn pick<'a, T>(rng: &mut StdRng, items: &'a [T]) -> Option<&'a T> {
    items.choose(rng)
}

/// Usually the next legal step, sometimes a reopen.
fn next_incident_step(rng: &mut StdRng, from: IncidentState) -> IncidentState {
    use IncidentState::*;
    match from {
        New => Classified,
        Classified => InProgress,
        InProgress => Resolved,
        Resolved if rng.gen_bool(0.85) => Closed,
        Resolved => InProgress,
        Closed => InProgress,
    }
}

/// 0 prr, 1 approve, 2 deploy, 3 cancel; mostly the legal next step.
fn next_release_step(rng: &mut StdRng, from: availd_core::change::ReleaseState) -> u8 {
    use availd_core::change::ReleaseState::*;
    if rng.gen_bool(0.3) {
        return rng.gen_range(0..4);
    }
    match from {
        Planned => 0,
        PrrPassed => 1,
        Approved => 2,
        _ => 3,
    }
}

/// 0 approve, 1 reject, 2 execute, 3 verify; mostly the legal next step.
fn next_change_step(rng: &mut StdRng, from: ChangeState) -> u8 {
    if rng.gen_bool(0.3) {
        return rng.gen_range(0..4);
    }
    match from {
        ChangeState::Requested if rng.gen_bool(0.8) => 0,
        ChangeState::Requested => 1,
        ChangeState::Approved => 2,
        _ => 3,
    }
}

/// Drives `service` with `ops` random commands, including redelivered
/// alerts, repeated closures and repeated problem triggers. Rejections are
/// expected and counted.
pub fn random_run(service: &mut Service, rng: &mut StdRng, ops: usize) -> RunStats {
    let mut stats = RunStats::default();
    let mut clock = T0 + rng.gen_range(0..86_400);
    let mut sent: Vec<AlertEvent> = Vec::new();
    for _ in 0..ops {
        clock += rng.gen_range(1..=900);
        let now = from_epoch(clock);
        let ledger = service.ledger();
        let incident_ids: Vec<String> = ledger.incidents.keys().cloned().collect();
        let open_ids: Vec<String> =
            ledger.incidents.values().filter(|i| i.state != IncidentState::Closed).map(|i| i.id.clone()).collect();
        let closed: Vec<String> =
            ledger.incidents.values().filter(|i| i.state == IncidentState::Closed).map(|i| i.id.clone()).collect();
        let drafts: Vec<String> = ledger
            .outage_records
            .values()
            .filter(|r| r.state == RecordState::Draft)
            .map(|r| r.id.clone())
            .collect();
        let problems: Vec<(String, String, ProblemState)> =
            ledger.problems.values().map(|p| (p.id.clone(), p.assignee.clone(), p.state)).collect();
        let releases: Vec<String> = ledger.releases.keys().cloned().collect();
        let changes: Vec<String> = ledger.changes.keys().cloned().collect();
        let actor = *pick(rng, &ACTORS).unwrap();

        let result: Result<(), String> = match rng.gen_range(0..100) {
            0..=5 => {
                let products = match rng.gen_range(0..3) {
                    0 => vec!["P1".to_string()],
                    1 => vec!["P2".to_string()],
                    _ => vec!["P1".to_string(), "P2".to_string()],
                };
                let details = NewIncident {
                    product_ids: products,
                    severity: *pick(rng, &Severity::ALL).unwrap(),
                    causes_outage: rng.gen_bool(0.6),
                    source: IncidentSource::Manual,
                    title: "generated".into(),
                    description: String::new(),
                    occurred_at: Some(from_epoch(clock - rng.gen_range(0..3600))),
                };
                service.open_incident(details, actor, now).map(drop).map_err(|e| e.to_string())
            }
            6..=41 => match if rng.gen_bool(0.85) && !open_ids.is_empty() { pick(rng, &open_ids) } else { pick(rng, &incident_ids) } {
                Some(id) => {
                    let inc = &service.ledger().incidents[id];
                    let to = if rng.gen_bool(0.75) { next_incident_step(rng, inc.state) } else { *pick(rng, &IncidentState::ALL).unwrap() };
                    let mut fields = TransitionFields::default();
                    match to {
                        IncidentState::Classified => {
                            fields.severity = Some(*pick(rng, &Severity::ALL).unwrap());
                        }
                        IncidentState::Resolved | IncidentState::Closed => {
                            let base = inc.lifecycle.detected_at.unwrap_or(now).max(inc.lifecycle.diagnosed_at.unwrap_or(now));
                            let base = if base > now { now } else { base };
                            let restored = base + Duration::seconds(rng.gen_range(1..=(now - base).num_seconds().max(1)));
                            if rng.gen_bool(0.9) {
                                fields.repaired_at = Some(restored);
                                fields.recovered_at = Some(restored);
                                fields.restored_at = Some(restored);
                            }
                        }
                        IncidentState::InProgress if rng.gen_bool(0.8) => fields.note = Some("reopened".into()),
                        _ => {}
                    }
                    service.transition_incident(id, to, fields, actor, now).map(drop).map_err(|e| e.to_string())
                }
                None => Err("no incidents".into()),
            },
            42..=47 => match pick(rng, &closed) {
                Some(id) => {
                    stats.redeliveries += 1;
                    if rng.gen_bool(0.5) {
                        service.spawn_problem_for(id, now).map(drop).map_err(|e| e.to_string())
                    } else {
                        service.close_incident(id, TransitionFields::default(), actor, now).map(drop).map_err(|e| e.to_string())
                    }
                }
                None => Err("nothing closed".into()),
            },
            48..=61 => {
                let event = if !sent.is_empty() && rng.gen_bool(0.25) {
                    stats.redeliveries += 1;
                    pick(rng, &sent).unwrap().clone()
                } else {
                    let (monitor, value) = if rng.gen_bool(0.5) {
                        ("probe-p1", if rng.gen_bool(0.8) { 0.0 } else { 1.0 })
                    } else if rng.gen_bool(0.85) {
                        ("cpu-p2", rng.gen_range(80.0..100.0))
                    } else {
                        ("ghost", 1.0)
                    };
                    AlertEvent {
                        monitor_id: monitor.into(),
                        fired_at: from_epoch(clock - rng.gen_range(0..120)),
                        value,
                        message: String::new(),
                    }
                };
                sent.push(event.clone());
                stats.alerts_sent += 1;
                service.ingest_alert(event, now).map(drop).map_err(|e| e.to_string())
            }
            62..=71 => match pick(rng, &drafts) {
                Some(id) => {
                    let decision = if rng.gen_bool(0.75) {
                        ReviewDecision::Confirm { edits: RecordEdits::default(), note: None }
                    } else {
                        ReviewDecision::Reject { note: if rng.gen_bool(0.9) { "not customer facing".into() } else { String::new() } }
                    };
                    service.review_outage(id, decision, actor, now).map(drop).map_err(|e| e.to_string())
                }
                None => Err("no drafts".into()),
            },
            72..=81 => match pick(rng, &problems) {
                Some((id, assignee, state)) => {
                    if *state == ProblemState::Open || rng.gen_bool(0.2) {
                        let rca = if rng.gen_bool(0.85) { complete_rca(now) } else { RcaDocument::default() };
                        service.submit_rca(id, rca, now).map(drop).map_err(|e| e.to_string())
                    } else {
                        let reviewer = if rng.gen_bool(0.3) { assignee.as_str() } else { actor };
                        let decision = if rng.gen_bool(0.6) { RcaDecision::Approve } else { RcaDecision::Reject };
                        service.review_rca(id, reviewer, decision, "reviewed", now).map(drop).map_err(|e| e.to_string())
                    }
                }
                None => Err("no problems".into()),
            },
            82..=86 => {
                let start = now + Duration::days(rng.gen_range(1..30));
                let spec = NewRelease {
                    name: "release".into(),
                    pbi_ids: vec!["PBI-1".into()],
                    target_window: TimeInterval::new(start, start + Duration::hours(2)).unwrap(),
                    prr: None,
                };
                service.create_release(spec, actor, now).map(drop).map_err(|e| e.to_string())
            }
            87..=91 => match pick(rng, &releases) {
                Some(id) => match next_release_step(rng, service.ledger().releases[id].state) {
                    0 => {
                        let updates: Vec<ChecklistUpdate> = ["storage", "firewall", "monitoring", "qa-certification", "rollback"]
                            .iter()
                            .map(|k| ChecklistUpdate {
                                key: (*k).into(),
                                status: if rng.gen_bool(0.9) { ChecklistStatus::Passed } else { ChecklistStatus::Failed },
                                waiver_note: None,
                            })
                            .collect();
                        service.run_prr(id, updates, actor, now).map(drop).map_err(|e| e.to_string())
                    }
                    1 => service.approve_release(id, "cab", now).map(drop).map_err(|e| e.to_string()),
                    2 => service.deploy_release(id, actor, now).map(drop).map_err(|e| e.to_string()),
                    _ => service.cancel_release(id, actor, now).map(drop).map_err(|e| e.to_string()),
                },
                None => Err("no releases".into()),
            },
            92..=95 => {
                let spec = NewChange {
                    release_id: if rng.gen_bool(0.3) { pick(rng, &releases).cloned() } else { None },
                    description: "patch".into(),
                    category: ChangeCategory::Software,
                    layer: Default::default(),
                    emergency: rng.gen_bool(0.1),
                    product_ids: vec!["P1".into()],
                };
                service.request_change(spec, actor, now).map(drop).map_err(|e| e.to_string())
            }
            96..=98 => match pick(rng, &changes) {
                Some(id) => match next_change_step(rng, service.ledger().changes[id].state) {
                    0 => service.approve_change(id, "cab", now).map(drop).map_err(|e| e.to_string()),
                    1 => service.reject_change(id, "cab", "too risky", now).map(drop).map_err(|e| e.to_string()),
                    2 => service.execute_change(id, actor, now).map(drop).map_err(|e| e.to_string()),
                    _ => service.verify_change(id, actor, now).map(drop).map_err(|e| e.to_string()),
                },
                None => Err("no changes".into()),
            },
            _ => match pick(rng, &incident_ids) {
                Some(id) => service
                    .edit_incident_products(id, vec!["P2".into()], actor, now)
                    .map(drop)
                    .map_err(|e| e.to_string()),
                None => Err("no incidents".into()),
            },
        };
        stats.ops += 1;
        match result {
            Ok(()) => stats.accepted += 1,
            Err(_) => stats.rejected += 1,
        }
    }
    stats
}

/// Opens, works and closes an outage incident on `products` that started at
/// `ts(start)` and was restored at `ts(end)`.
pub fn close_outage(service: &mut Service, products: &[&str], severity: Severity, start: i64, end: i64) -> availd_core::service::IncidentUpdate {
    let details = NewIncident {
        product_ids: products.iter().map(|p| p.to_string()).collect(),
        severity,
        causes_outage: true,
        source: IncidentSource::Manual,
        title: "outage".into(),
        description: String::new(),
        occurred_at: Some(ts(start)),
    };
    let inc = service.open_incident(details, "oncall", ts(start)).unwrap();
    let classify = TransitionFields { severity: Some(severity), ..TransitionFields::default() };
    service.transition_incident(&inc.id, IncidentState::Classified, classify, "oncall", ts(start)).unwrap();
    service.transition_incident(&inc.id, IncidentState::InProgress, TransitionFields::default(), "oncall", ts(start)).unwrap();
    service.transition_incident(&inc.id, IncidentState::Resolved, resolve_fields(ts(end)), "oncall", ts(end)).unwrap();
    service.close_incident(&inc.id, TransitionFields::default(), "oncall", ts(end + 60)).unwrap()
}

pub fn confirm() -> ReviewDecision {
    ReviewDecision::Confirm { edits: RecordEdits::default(), note: None }
}
