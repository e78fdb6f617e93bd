//! Provider-side event log: what the cloud saw, per request.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkerEventKind {
    Received,
    InstanceColdStarted,
    Started,
    Finished,
    Throttled,
    InjectedFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerEvent {
    pub t: f64,
    pub run_id: u64,
    pub kind: WorkerEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u64>,
}

struct LogInner {
    events: Vec<WorkerEvent>,
    file: Option<File>,
}

pub struct WorkerEventLog {
    start: Instant,
    inner: Mutex<LogInner>,
}

impl WorkerEventLog {
    pub fn in_memory() -> Self {
        Self {
            start: Instant::now(),
            inner: Mutex::new(LogInner {
                events: Vec::new(),
                file: None,
            }),
        }
    }

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

    pub fn append(&self, run_id: u64, kind: WorkerEventKind, instance_id: Option<u64>) {
        let mut inner = self.inner.lock().unwrap();
        let event = WorkerEvent {
            t: self.start.elapsed().as_secs_f64() * 1e3,
            run_id,
            kind,
            instance_id,
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_vec(&event).expect("event serialization");
            line.push(b'\n');
            let _ = file.write_all(&line);
        }
        inner.events.push(event);
    }

    pub fn snapshot(&self) -> Vec<WorkerEvent> {
        self.inner.lock().unwrap().events.clone()
    }
}

pub fn load_worker_events(path: &Path) -> std::io::Result<Vec<WorkerEvent>> {
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
                    format!("malformed worker event line: {e}"),
                ))
            }
        }
    }
    Ok(events)
}
