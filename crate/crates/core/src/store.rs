//! Append-only event log (`events.ndjson`, one JSON event per line) and
//! snapshot file.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::time::Timestamp;

pub const SCHEMA_VERSION: u32 = 1;
pub const LOG_FILE: &str = "events.ndjson";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub seq: u64,
    pub at: Timestamp,
    pub kind: String,
    pub entity_id: String,
    pub payload: Value,
    pub schema_version: u32,
}

/// An event waiting for a sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub at: Timestamp,
    pub kind: String,
    pub entity_id: String,
    pub payload: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid event: {0}")]
    Invalid(String),
    #[error("log corrupt at seq {seq} (line {line}): {message}")]
    Corrupt { seq: u64, line: usize, message: String },
    #[error("sequence gap: expected {expected}, found {found}")]
    Gap { expected: u64, found: u64 },
    #[error("seq {seq} already holds a different event")]
    Conflict { seq: u64 },
    #[error("unsupported schema_version {found} at seq {seq}")]
    Schema { seq: u64, found: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub events: u64,
    /// An incomplete final line was dropped.
    pub truncated_tail: bool,
}

#[derive(Debug)]
enum Backend {
    Memory { events: Vec<StoredEvent>, fail_writes: bool },
    File { path: PathBuf, file: File },
}

#[derive(Debug)]
pub struct EventLog {
    backend: Backend,
    last_seq: u64,
}

fn validate(e: &NewEvent) -> Result<(), StoreError> {
    if e.kind.trim().is_empty() {
        return Err(StoreError::Invalid("kind must not be empty".into()));
    }
    if e.entity_id.trim().is_empty() {
        return Err(StoreError::Invalid(format!("{}: entity_id must not be empty", e.kind)));
    }
    if !e.payload.is_object() {
        return Err(StoreError::Invalid(format!("{}: payload must be a JSON object", e.kind)));
    }
    Ok(())
}

/// Parses log text. Returns the events and the byte length of the valid prefix.
fn parse_log(text: &str) -> Result<(Vec<StoredEvent>, usize, bool), StoreError> {
    let mut events: Vec<StoredEvent> = Vec::new();
    let mut offset = 0usize;
    let mut truncated = false;
    let mut lines = text.split_inclusive('\n').enumerate().peekable();
    while let Some((idx, raw)) = lines.next() {
        let expected = events.last().map_or(1, |e| e.seq + 1);
        let complete = raw.ends_with('\n');
        let body = raw.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            offset += raw.len();
            continue;
        }
        match serde_json::from_str::<StoredEvent>(body) {
            Ok(ev) => {
                if ev.seq != expected {
                    return Err(StoreError::Gap { expected, found: ev.seq });
                }
                if ev.schema_version > SCHEMA_VERSION {
                    return Err(StoreError::Schema { seq: ev.seq, found: ev.schema_version });
                }
                events.push(ev);
                offset += raw.len();
            }
            Err(_) if !complete && lines.peek().is_none() => {
                truncated = true;
                break;
            }
            Err(e) => {
                return Err(StoreError::Corrupt { seq: expected, line: idx + 1, message: e.to_string() });
            }
        }
    }
    Ok((events, offset, truncated))
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { backend: Backend::Memory { events: Vec::new(), fail_writes: false }, last_seq: 0 }
    }

    /// Opens or creates `path`. A torn final line (crash mid-write) is cut off
    /// with a warning; any other damage halts with the offending seq.
    pub fn open(path: &Path) -> Result<(Self, LoadReport), StoreError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let text = fs::read_to_string(path)?;
        let (events, valid_len, truncated) = parse_log(&text)?;
        if truncated {
            tracing::warn!(path = %path.display(), kept = events.len(), "dropping incomplete final log line");
            file.set_len(valid_len as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let last_seq = events.last().map_or(0, |e| e.seq);
        let report = LoadReport { events: events.len() as u64, truncated_tail: truncated };
        Ok((Self { backend: Backend::File { path: path.to_path_buf(), file }, last_seq }, report))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Makes every later append fail. In-memory logs only; used to exercise
    /// storage-failure handling.
    pub fn fail_writes(&mut self, fail: bool) {
        if let Backend::Memory { fail_writes, .. } = &mut self.backend {
            *fail_writes = fail;
        }
    }

    /// Assigns sequence numbers and durably appends the batch as one write.
    pub fn append(&mut self, batch: Vec<NewEvent>) -> Result<Vec<StoredEvent>, StoreError> {
        for e in &batch {
            validate(e)?;
        }
        let stored: Vec<StoredEvent> = batch
            .into_iter()
            .zip(self.last_seq + 1..)
            .map(|(e, seq)| StoredEvent {
                seq,
                at: e.at,
                kind: e.kind,
                entity_id: e.entity_id,
                payload: e.payload,
                schema_version: SCHEMA_VERSION,
            })
            .collect();
        self.write(&stored)?;
        Ok(stored)
    }

    /// Appends events that already carry sequence numbers. They must continue
    /// the log without gaps.
    pub fn append_stored(&mut self, events: &[StoredEvent]) -> Result<(), StoreError> {
        for (expected, e) in (self.last_seq + 1..).zip(events) {
            if e.seq != expected {
                return Err(StoreError::Gap { expected, found: e.seq });
            }
            if e.schema_version > SCHEMA_VERSION {
                return Err(StoreError::Schema { seq: e.seq, found: e.schema_version });
            }
            validate(&NewEvent {
                at: e.at,
                kind: e.kind.clone(),
                entity_id: e.entity_id.clone(),
                payload: e.payload.clone(),
            })?;
        }
        self.write(events)
    }

    fn write(&mut self, events: &[StoredEvent]) -> Result<(), StoreError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).map_err(|err| StoreError::Invalid(err.to_string()))?);
            buf.push('\n');
        }
        match &mut self.backend {
            Backend::Memory { fail_writes: true, .. } => {
                return Err(StoreError::Io(std::io::Error::other("simulated storage failure")));
            }
            Backend::Memory { events: stored, .. } => stored.extend_from_slice(events),
            Backend::File { file, .. } => {
                let before = file.metadata()?.len();
                let result = file.write_all(buf.as_bytes()).and_then(|_| file.sync_data());
                if let Err(err) = result {
                    // leave no partial batch behind
                    let _ = file.set_len(before);
                    return Err(err.into());
                }
            }
        }
        self.last_seq = events.last().map_or(self.last_seq, |e| e.seq);
        Ok(())
    }

    /// Events with `seq >= from_seq`, in order.
    pub fn read_from(&self, from_seq: u64) -> Result<Vec<StoredEvent>, StoreError> {
        let all = match &self.backend {
            Backend::Memory { events, .. } => events.clone(),
            Backend::File { path, .. } => parse_log(&fs::read_to_string(path)?)?.0,
        };
        Ok(all.into_iter().filter(|e| e.seq >= from_seq).collect())
    }
}

/// Parses ndjson produced by an export. Blank lines are skipped.
pub fn parse_ndjson(text: &str) -> Result<Vec<StoredEvent>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt { seq: 0, line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn to_ndjson(events: &[StoredEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("stored events serialize") + "\n").collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub seq: u64,
    pub state: T,
}

/// Writes `snapshot.json` via a temp file and rename.
pub fn write_snapshot<T: Serialize>(dir: &Path, seq: u64, state: &T) -> Result<(), StoreError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    let body = serde_json::to_vec(&Snapshot { seq, state }).map_err(|e| StoreError::Invalid(e.to_string()))?;
    let mut f = File::create(&tmp)?;
    f.write_all(&body)?;
    f.sync_all()?;
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

/// `Ok(None)` when absent or unreadable; an unreadable snapshot is only a
/// lost shortcut, the log stays authoritative.
pub fn load_snapshot<T: DeserializeOwned>(dir: &Path) -> Result<Option<Snapshot<T>>, StoreError> {
    let path = dir.join(SNAPSHOT_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    match serde_json::from_slice(&bytes) {
        Ok(s) => Ok(Some(s)),
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable snapshot");
            Ok(None)
        }
    }
}
