//! Append-only event log.
//!
//! Every user response and state change lands here as an [`EventRecord`]. The
//! log is the only source of truth: sessions, profiles and summaries are all
//! rebuilt from it. Records are grouped into streams (one per session, one per
//! user for profile parameters) with gap-free sequence numbers per stream.

mod backend;
mod export;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::time::Timestamp;

pub use backend::{EventBackend, FileBackend, MemoryBackend, SyncMode};
pub use export::{import_jsonl, ExportFilter, ExportFormat, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    SessionStarted,
    PromptIssued,
    UtteranceReceived,
    AnswerCommitted,
    ReadbackIssued,
    ReadbackResult,
    Timeout,
    SessionCompleted,
    SessionAbandoned,
    UserParamSet,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::SessionStarted,
        EventKind::PromptIssued,
        EventKind::UtteranceReceived,
        EventKind::AnswerCommitted,
        EventKind::ReadbackIssued,
        EventKind::ReadbackResult,
        EventKind::Timeout,
        EventKind::SessionCompleted,
        EventKind::SessionAbandoned,
        EventKind::UserParamSet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SessionStarted => "SESSION_STARTED",
            EventKind::PromptIssued => "PROMPT_ISSUED",
            EventKind::UtteranceReceived => "UTTERANCE_RECEIVED",
            EventKind::AnswerCommitted => "ANSWER_COMMITTED",
            EventKind::ReadbackIssued => "READBACK_ISSUED",
            EventKind::ReadbackResult => "READBACK_RESULT",
            EventKind::Timeout => "TIMEOUT",
            EventKind::SessionCompleted => "SESSION_COMPLETED",
            EventKind::SessionAbandoned => "SESSION_ABANDONED",
            EventKind::UserParamSet => "USER_PARAM_SET",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StoreError::UnknownKind(s.to_string()))
    }
}

/// One immutable log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub stream_id: String,
    pub kind: EventKind,
    pub payload: Value,
    /// UTC milliseconds.
    pub at: Timestamp,
}

impl EventRecord {
    fn payload_str(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    pub fn user_id(&self) -> Option<&str> {
        self.payload_str("user_id")
    }

    pub fn flow_id(&self) -> Option<&str> {
        self.payload_str("flow_id")
    }

    pub fn question_id(&self) -> Option<&str> {
        self.payload_str("question_id")
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event store is closed")]
    Closed,
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unknown export format `{0}`")]
    UnknownFormat(String),
    #[error("unknown event kind `{0}`")]
    UnknownKind(String),
    #[error("serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

struct Inner {
    backend: Box<dyn EventBackend>,
    streams: BTreeMap<String, Vec<EventRecord>>,
    closed: bool,
}

/// Thread-safe event store: appends are serialized, reads take a snapshot.
pub struct EventStore {
    inner: RwLock<Inner>,
}

impl EventStore {
    pub fn with_backend(mut backend: Box<dyn EventBackend>) -> Result<Self, StoreError> {
        let mut streams: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
        for record in backend.load()? {
            let stream = streams.entry(record.stream_id.clone()).or_default();
            let expected = stream.len() as u64 + 1;
            if record.seq != expected {
                return Err(StoreError::Corrupt {
                    line: 0,
                    message: format!(
                        "stream `{}` expected seq {expected}, found {}",
                        record.stream_id, record.seq
                    ),
                });
            }
            stream.push(record);
        }
        Ok(EventStore { inner: RwLock::new(Inner { backend, streams, closed: false }) })
    }

    /// Volatile store, for tests and dry runs.
    pub fn in_memory() -> Self {
        Self::with_backend(Box::new(MemoryBackend)).expect("memory backend loads")
    }

    /// Opens (or creates) a JSON-lines log, fsyncing every append.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(path, SyncMode::EveryAppend)
    }

    pub fn open_with(path: impl AsRef<Path>, sync: SyncMode) -> Result<Self, StoreError> {
        Self::with_backend(Box::new(FileBackend::open(path.as_ref(), sync)?))
    }

    fn read_inner(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_inner(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Persists a record with seq = last seq of the stream + 1. The record is
    /// durable (per the backend's sync mode) before this returns.
    pub fn append(
        &self,
        stream_id: &str,
        kind: EventKind,
        payload: Value,
        at: Timestamp,
    ) -> Result<EventRecord, StoreError> {
        let mut inner = self.write_inner();
        if inner.closed {
            return Err(StoreError::Closed);
        }
        let seq = inner.streams.get(stream_id).map_or(0, Vec::len) as u64 + 1;
        let record = EventRecord { seq, stream_id: stream_id.to_string(), kind, payload, at };
        inner.backend.persist(&record)?;
        inner.streams.entry(stream_id.to_string()).or_default().push(record.clone());
        Ok(record)
    }

    /// Records with `seq >= from_seq`, in order. Unknown streams read as empty.
    pub fn read_stream(&self, stream_id: &str, from_seq: u64) -> Result<Vec<EventRecord>, StoreError> {
        let inner = self.read_inner();
        if inner.closed {
            return Err(StoreError::Closed);
        }
        let Some(stream) = inner.streams.get(stream_id) else {
            return Ok(Vec::new());
        };
        let skip = from_seq.saturating_sub(1).min(stream.len() as u64) as usize;
        Ok(stream[skip..].to_vec())
    }

    pub fn last_seq(&self, stream_id: &str) -> u64 {
        self.read_inner().streams.get(stream_id).map_or(0, Vec::len) as u64
    }

    pub fn stream_ids(&self) -> Vec<String> {
        self.read_inner().streams.keys().cloned().collect()
    }

    /// All records passing `filter`, ordered by (stream, seq).
    pub fn scan(&self, filter: &ExportFilter) -> Result<Vec<EventRecord>, StoreError> {
        let inner = self.read_inner();
        if inner.closed {
            return Err(StoreError::Closed);
        }
        Ok(inner
            .streams
            .values()
            .flat_map(|s| s.iter())
            .filter(|r| filter.matches(r))
            .cloned()
            .collect())
    }

    /// Writes the filtered records in `format` to `out`.
    pub fn export<W: std::io::Write>(
        &self,
        filter: &ExportFilter,
        format: ExportFormat,
        out: W,
    ) -> Result<(), StoreError> {
        let records = self.scan(filter)?;
        export::write(&records, format, out)
    }

    pub fn export_to_vec(&self, filter: &ExportFilter, format: ExportFormat) -> Result<Vec<u8>, StoreError> {
        let mut buf = Vec::new();
        self.export(filter, format, &mut buf)?;
        Ok(buf)
    }

    pub fn user_ids(&self) -> BTreeSet<String> {
        let inner = self.read_inner();
        inner
            .streams
            .values()
            .flat_map(|s| s.iter())
            .filter_map(|r| r.user_id().map(str::to_string))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.read_inner().streams.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flushes buffered appends to stable storage.
    pub fn sync(&self) -> Result<(), StoreError> {
        self.write_inner().backend.sync()
    }

    /// Further appends and reads fail with [`StoreError::Closed`].
    pub fn close(&self) -> Result<(), StoreError> {
        let mut inner = self.write_inner();
        if !inner.closed {
            inner.backend.sync()?;
            inner.closed = true;
        }
        Ok(())
    }
}
