//! Append-only audit trail. One JSON record per line on disk, mirrored in
//! memory for cursor reads.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Wall-clock source in unix milliseconds.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Clock that advances only when told to; replay tests use it so that
/// latencies and timestamps are reproducible.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<F: Fn() -> u64 + Send + Sync> Clock for F {
    fn now_ms(&self) -> u64 {
        self()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    ToolCall,
    Provider,
    Approval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Position in the log, starting at 1. Used as the read cursor.
    pub seq: u64,
    /// Unix milliseconds, never decreasing.
    pub ts: u64,
    pub session_id: String,
    pub turn_id: String,
    pub kind: AuditKind,
    pub payload: Value,
}

struct Inner {
    records: Vec<AuditRecord>,
    last_ts: u64,
    file: Option<File>,
    sink_error: Option<String>,
}

pub struct AuditLog {
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            inner: Mutex::new(Inner {
                records: Vec::new(),
                last_ts: 0,
                file: None,
                sink_error: None,
            }),
        }
    }

    /// Appends to `path` in addition to keeping records in memory. Existing
    /// file content is left untouched.
    pub fn with_file(clock: Arc<dyn Clock>, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let log = Self::in_memory(clock);
        log.inner.lock().unwrap().file = Some(file);
        Ok(log)
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn append(&self, session_id: &str, turn_id: &str, kind: AuditKind, payload: Value) -> AuditRecord {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock().unwrap();
        let ts = now.max(inner.last_ts);
        inner.last_ts = ts;
        let record = AuditRecord {
            seq: inner.records.len() as u64 + 1,
            ts,
            session_id: session_id.to_string(),
            turn_id: turn_id.to_string(),
            kind,
            payload,
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("audit record serializes");
            line.push(b'\n');
            if let Err(e) = file.write_all(&line).and_then(|_| file.flush()) {
                inner.sink_error = Some(e.to_string());
            }
        }
        inner.records.push(record.clone());
        record
    }

    /// Records with `seq > after`, in order.
    pub fn after(&self, after: u64) -> Vec<AuditRecord> {
        let inner = self.inner.lock().unwrap();
        let start = usize::try_from(after).unwrap_or(usize::MAX).min(inner.records.len());
        inner.records[start..].to_vec()
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.after(0)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Last error seen while writing the on-disk log, if any.
    pub fn sink_error(&self) -> Option<String> {
        self.inner.lock().unwrap().sink_error.clone()
    }
}
