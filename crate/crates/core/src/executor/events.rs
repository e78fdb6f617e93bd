//! Timestamped client-side dispatch events, mirrored to `events.ndjson`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DispatchEventKind {
    Enqueued,
    Sent,
    RetryScheduled,
    Completed,
    Failed,
}

/// One state transition of one run, timestamped in milliseconds from the
/// start of the dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchEvent {
    pub t: f64,
    pub run_id: u64,
    pub kind: DispatchEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

struct LogInner {
    events: Vec<DispatchEvent>,
    file: Option<File>,
}

/// Append-only event log; the timestamp is taken under the lock so the
/// stored order is also the time order.
pub struct EventLog {
    start: Instant,
    inner: Mutex<LogInner>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self {
            start: Instant::now(),
            inner: Mutex::new(LogInner {
                events: Vec::new(),
                file: None,
            }),
        }
    }

    /// Creates (truncating) an on-disk log at `path`; each run gets a fresh
    /// event file.
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self {
            start: Instant::now(),
            inner: Mutex::new(LogInner {
                events: Vec::new(),
                file: Some(file),
            }),
        })
    }

    pub fn append(&self, run_id: u64, kind: DispatchEventKind, detail: Option<String>) {
        let mut inner = self.inner.lock().unwrap();
        let event = DispatchEvent {
            t: self.start.elapsed().as_secs_f64() * 1e3,
            run_id,
            kind,
            detail,
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&event).expect("event serialization");
            line.push(b'\n');
            let _ = file.write_all(&line);
        }
        inner.events.push(event);
    }

    pub fn snapshot(&self) -> Vec<DispatchEvent> {
        self.inner.lock().unwrap().events.clone()
    }
}

/// Reads an event log back from disk.
pub fn load_events(path: &Path) -> std::io::Result<Vec<DispatchEvent>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => events.push(e),
            Err(e) => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("malformed event line: {e}"),
                ))
            }
        }
    }
    Ok(events)
}
