//! Per-session append-only event log plus periodic snapshots.
//!
//! Layout under a session directory:
//!
//! ```text
//! events.jsonl    one EventRecord per line, seq strictly increasing
//! snapshot.json   Snapshot { seq, state } written atomically (tmp + rename)
//! ```
//!
//! Recovery loads the snapshot (if any) and re-applies every later record.
//! A trailing line that does not parse is treated as a torn write from a
//! crash and dropped; a bad line anywhere else is corruption.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{Clock, DayReport, SessionState, TurnResult};
use crate::memory::{EpisodicRecord, MemoryError};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated,
    Turn,
    Reflection,
    DayAdvanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub schema_version: u32,
    pub session_id: String,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
    /// Milliseconds since the Unix epoch.
    pub wall_time: u64,
}

/// Payload of a `turn` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub result: TurnResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodicRecord>,
    pub clock: Clock,
    pub steps: u64,
}

/// Payload of `reflection` and `day_advanced` records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayEvent {
    pub report: DayReport,
    pub clock: Clock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    /// Last event applied to `state`.
    pub seq: u64,
    pub state: SessionState,
}

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no snapshot and no session_created record in {0}")]
    Empty(PathBuf),
    #[error("seq {got} after {last}: sequence must strictly increase")]
    Sequence { last: u64, got: u64 },
    #[error("replay diverged at seq {seq}: {message}")]
    Diverged { seq: u64, message: String },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RecoveryError + '_ {
    move |source| RecoveryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Writer for one session directory. Appends are flushed and synced before
/// returning, so an acknowledged event survives a process kill.
#[derive(Debug)]
pub struct EventLog {
    dir: PathBuf,
    session_id: String,
    file: File,
    next_seq: u64,
    snapshot_every: u64,
    since_snapshot: u64,
}

impl EventLog {
    /// Start a new log with a `session_created` record and an initial
    /// snapshot.
    pub fn create(dir: &Path, state: &SessionState, snapshot_every: u64) -> io::Result<EventLog> {
        fs::create_dir_all(dir)?;
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(dir.join(EVENTS_FILE))?;
        let mut log = EventLog {
            dir: dir.to_path_buf(),
            session_id: state.id.clone(),
            file,
            next_seq: 1,
            snapshot_every: snapshot_every.max(1),
            since_snapshot: 0,
        };
        log.append(EventKind::SessionCreated, state)?;
        log.snapshot(state)?;
        Ok(log)
    }

    /// Recover the session in `dir` and reopen its log for appending. A torn
    /// trailing line is truncated away first.
    pub fn resume(dir: &Path, snapshot_every: u64) -> Result<(EventLog, Recovered), RecoveryError> {
        let recovered = recover(dir)?;
        let path = dir.join(EVENTS_FILE);
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.set_len(recovered.valid_bytes).map_err(io_err(&path))?;
        let log = EventLog {
            dir: dir.to_path_buf(),
            session_id: recovered.state.id.clone(),
            file,
            next_seq: recovered.last_seq + 1,
            snapshot_every: snapshot_every.max(1),
            since_snapshot: recovered.events_replayed as u64,
        };
        Ok((log, recovered))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn append(&mut self, kind: EventKind, payload: &impl Serialize) -> io::Result<u64> {
        let record = EventRecord {
            schema_version: crate::SCHEMA_VERSION,
            session_id: self.session_id.clone(),
            seq: self.next_seq,
            kind,
            payload: serde_json::to_value(payload)?,
            wall_time: now_ms(),
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.next_seq += 1;
        self.since_snapshot += 1;
        Ok(record.seq)
    }

    /// Snapshot when `snapshot_every` events have accumulated.
    pub fn maybe_snapshot(&mut self, state: &SessionState) -> io::Result<bool> {
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot(state)?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn snapshot(&mut self, state: &SessionState) -> io::Result<()> {
        let snap = Snapshot {
            schema_version: crate::SCHEMA_VERSION,
            seq: self.last_seq(),
            state: state.clone(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&snap)?)?;
        File::open(&tmp)?.sync_all()?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub state: SessionState,
    pub last_seq: u64,
    /// Seq of the snapshot used as the starting point, if any.
    pub snapshot_seq: Option<u64>,
    pub events_replayed: usize,
    pub torn_tail: bool,
    /// Length of the log prefix made of complete, valid lines.
    pub valid_bytes: u64,
}

pub fn read_snapshot(dir: &Path) -> Result<Option<Snapshot>, RecoveryError> {
    let path = dir.join(SNAPSHOT_FILE);
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| RecoveryError::Corrupt {
                path,
                line: e.line(),
                message: e.to_string(),
            }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// Parsed log records plus the byte length of the valid prefix.
pub fn read_events(dir: &Path) -> Result<(Vec<EventRecord>, bool, u64), RecoveryError> {
    let path = dir.join(EVENTS_FILE);
    let text = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), false, 0)),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut torn = false;
    let mut lines = text.split_inclusive(|&b| b == b'\n').enumerate().peekable();
    while let Some((i, raw)) = lines.next() {
        let is_last = lines.peek().is_none();
        let complete = raw.ends_with(b"\n");
        let parsed = serde_json::from_slice::<EventRecord>(raw.trim_ascii());
        match parsed {
            Ok(r) if complete => {
                records.push(r);
                offset += raw.len();
            }
            _ if is_last => torn = true,
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => {
                return Err(RecoveryError::Corrupt {
                    path,
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((records, torn, offset as u64))
}

fn payload<T: serde::de::DeserializeOwned>(record: &EventRecord) -> Result<T, RecoveryError> {
    serde_json::from_value(record.payload.clone()).map_err(|e| RecoveryError::Diverged {
        seq: record.seq,
        message: format!("bad {:?} payload: {e}", record.kind),
    })
}

/// Apply one record on top of `state`.
pub fn apply(state: &mut SessionState, record: &EventRecord) -> Result<(), RecoveryError> {
    let diverged = |message: String| RecoveryError::Diverged {
        seq: record.seq,
        message,
    };
    match record.kind {
        EventKind::SessionCreated => {
            *state = payload(record)?;
        }
        EventKind::Turn => {
            let ev: TurnEvent = payload(record)?;
            if let Some(episode) = ev.episode {
                let expected = episode.id.clone();
                let id = state.store.log_episode(episode)?;
                if id != expected {
                    return Err(diverged(format!("episode id {id}, logged as {expected}")));
                }
            }
            state.emotion = ev.result.emotion;
            state.clock = ev.clock;
            state.steps = ev.steps;
        }
        EventKind::Reflection => {
            let ev: DayEvent = payload(record)?;
            state
                .store
                .apply_reflection(ev.report.day, &ev.report.memories)?;
            state.clock = ev.clock;
        }
        EventKind::DayAdvanced => {
            let ev: DayEvent = payload(record)?;
            state.clock = ev.clock;
        }
    }
    Ok(())
}

/// Snapshot plus every later record.
pub fn recover(dir: &Path) -> Result<Recovered, RecoveryError> {
    recover_inner(dir, true)
}

/// Rebuild from the log alone, ignoring any snapshot.
pub fn recover_from_log(dir: &Path) -> Result<Recovered, RecoveryError> {
    recover_inner(dir, false)
}

fn recover_inner(dir: &Path, use_snapshot: bool) -> Result<Recovered, RecoveryError> {
    let snapshot = if use_snapshot {
        read_snapshot(dir)?
    } else {
        None
    };
    let (records, torn_tail, valid_bytes) = read_events(dir)?;
    let snapshot_seq = snapshot.as_ref().map(|s| s.seq);
    let mut state = snapshot.map(|s| s.state);
    let mut last_seq = 0;
    let mut events_replayed = 0;
    for record in &records {
        if record.seq <= last_seq {
            return Err(RecoveryError::Sequence {
                last: last_seq,
                got: record.seq,
            });
        }
        last_seq = record.seq;
        if snapshot_seq.is_some_and(|s| record.seq <= s) {
            continue;
        }
        match (&mut state, record.kind) {
            (None, EventKind::SessionCreated) => {
                state = Some(payload(record)?);
            }
            (None, _) => return Err(RecoveryError::Empty(dir.to_path_buf())),
            (Some(s), _) => apply(s, record)?,
        }
        events_replayed += 1;
    }
    let state = state.ok_or_else(|| RecoveryError::Empty(dir.to_path_buf()))?;
    Ok(Recovered {
        state,
        last_seq: last_seq.max(snapshot_seq.unwrap_or(0)),
        snapshot_seq,
        events_replayed,
        torn_tail,
        valid_bytes,
    })
}
