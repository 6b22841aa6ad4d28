//! UTC instants at second resolution and half-open time intervals.

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Instant on the UTC timeline. Everything in this crate works at whole seconds.
pub type Timestamp = DateTime<Utc>;

/// Drops any sub-second component.
pub fn truncate(ts: Timestamp) -> Timestamp {
    ts.trunc_subsecs(0)
}

/// Builds a timestamp from seconds since the Unix epoch.
pub fn from_epoch(secs: i64) -> Timestamp {
    DateTime::from_timestamp(secs, 0).expect("epoch seconds within chrono range")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("interval start {start} must be strictly before end {end}")]
pub struct IntervalError {
    pub start: Timestamp,
    pub end: Timestamp,
}

/// Half-open interval `[start, end)` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct TimeInterval {
    start: Timestamp,
    end: Timestamp,
}

#[derive(Deserialize)]
struct RawInterval {
    start: Timestamp,
    end: Timestamp,
}

impl TryFrom<RawInterval> for TimeInterval {
    type Error = IntervalError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        TimeInterval::new(raw.start, raw.end)
    }
}

impl TimeInterval {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, IntervalError> {
        let (start, end) = (truncate(start), truncate(end));
        if start < end {
            Ok(Self { start, end })
        } else {
            Err(IntervalError { start, end })
        }
    }

    pub fn from_epoch_secs(start: i64, end: i64) -> Result<Self, IntervalError> {
        Self::new(from_epoch(start), from_epoch(end))
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }

    pub fn start_secs(&self) -> i64 {
        self.start.timestamp()
    }

    pub fn end_secs(&self) -> i64 {
        self.end.timestamp()
    }

    pub fn duration_secs(&self) -> i64 {
        self.end_secs() - self.start_secs()
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    /// True when `other` lies entirely inside `self`.
    pub fn covers(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersect(&self, other: &TimeInterval) -> Option<TimeInterval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(TimeInterval { start, end })
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start.to_rfc3339(), self.end.to_rfc3339())
    }
}

/// Unions overlapping and abutting intervals; output is sorted and disjoint.
pub fn union(intervals: impl IntoIterator<Item = TimeInterval>) -> Vec<TimeInterval> {
    let mut sorted: Vec<TimeInterval> = intervals.into_iter().collect();
    sorted.sort();
    let mut merged: Vec<TimeInterval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match merged.last_mut() {
            Some(last) if iv.start <= last.end => {
                if iv.end > last.end {
                    last.end = iv.end;
                }
            }
            _ => merged.push(iv),
        }
    }
    merged
}

/// Removes every `holes` interval from `base`. Both inputs may be unsorted.
pub fn subtract(base: &[TimeInterval], holes: &[TimeInterval]) -> Vec<TimeInterval> {
    let holes = union(holes.iter().copied());
    let mut out = Vec::new();
    for iv in union(base.iter().copied()) {
        let mut cursor = iv.start;
        for hole in holes.iter().filter(|h| h.overlaps(&iv)) {
            if hole.start > cursor {
                out.push(TimeInterval { start: cursor, end: hole.start });
            }
            cursor = cursor.max(hole.end);
        }
        if cursor < iv.end {
            out.push(TimeInterval { start: cursor, end: iv.end });
        }
    }
    out
}

/// Pairwise intersection of two sets of intervals, sorted and disjoint.
pub fn intersect_all(a: &[TimeInterval], b: &[TimeInterval]) -> Vec<TimeInterval> {
    let a = union(a.iter().copied());
    let b = union(b.iter().copied());
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        if let Some(x) = a[i].intersect(&b[j]) {
            out.push(x);
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

pub fn total_secs(intervals: &[TimeInterval]) -> i64 {
    intervals.iter().map(TimeInterval::duration_secs).sum()
}
