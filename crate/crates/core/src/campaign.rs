//! Campaign data model and durable run store.
//!
//! A campaign owns the parameter definitions, one [`RunRecord`] per sample
//! with a small lifecycle state machine, and two files inside the campaign
//! directory:
//!
//! * `campaign.json` — the [`CampaignManifest`], rewritten atomically.
//! * `runs.ndjson` — an append-only log of run-record snapshots, one JSON
//!   object per line. The latest line for a `run_id` wins on replay, so a
//!   crash loses at most the record whose write did not return.
//!
//! `SUBMITTED` is an in-memory state only: a process that dies mid-dispatch
//! reopens with those runs back in `QUEUED`, which is exactly what resume
//! needs.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Manifest file name inside a campaign directory.
pub const MANIFEST_FILE: &str = "campaign.json";
/// Run store file name inside a campaign directory.
pub const RUNS_FILE: &str = "runs.ndjson";
/// Dispatch event log file name inside a campaign directory.
pub const EVENTS_FILE: &str = "events.ndjson";

/// Ordered input map: parameter name to value.
pub type Inputs = IndexMap<String, f64>;
/// Ordered output map: output name to value.
pub type Outputs = IndexMap<String, f64>;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("campaign already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("no campaign manifest at {0}")]
    NotFound(PathBuf),
    #[error("duplicate run id {0}")]
    DuplicateRunId(u64),
    #[error("unknown run id {0}")]
    UnknownRunId(u64),
    #[error("run {run_id}: input keys do not match campaign parameters ({detail})")]
    InputKeyMismatch { run_id: u64, detail: String },
    #[error("run {run_id}: output keys do not match campaign outputs ({detail})")]
    OutputKeyMismatch { run_id: u64, detail: String },
    #[error("run {0} is already completed")]
    AlreadyCompleted(u64),
    #[error("illegal transition for run {run_id}: {from:?} -> {to:?}")]
    IllegalTransition {
        run_id: u64,
        from: RunState,
        to: RunState,
    },
    #[error("run {run_id}: wall_time_ms {wall} is less than sim_time_ms {sim}")]
    NegativeOverhead { run_id: u64, wall: f64, sim: f64 },
    #[error("corrupt record in {file} line {line}: {reason}")]
    CorruptRecord {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Input distribution for a sampled parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, stddev: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Distribution::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    Err("uniform bounds must be finite".into())
                } else if lo >= hi {
                    Err(format!("uniform requires lo < hi, got [{lo}, {hi}]"))
                } else {
                    Ok(())
                }
            }
            Distribution::Normal { mean, stddev } => {
                if !mean.is_finite() || !stddev.is_finite() {
                    Err("normal moments must be finite".into())
                } else if stddev <= 0.0 {
                    Err(format!("normal requires stddev > 0, got {stddev}"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Whether `value` is a legal fixed default under this distribution.
    pub fn admits_default(&self, value: f64) -> bool {
        match *self {
            Distribution::Uniform { lo, hi } => value >= lo && value <= hi,
            Distribution::Normal { .. } => value.is_finite(),
        }
    }
}

/// A named input dimension of the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub distribution: Distribution,
    /// Value used when the parameter is held fixed.
    pub default: f64,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, distribution: Distribution, default: f64) -> Self {
        Self {
            name: name.into(),
            distribution,
            default,
        }
    }
}

fn valid_identifier(name: &str) -> bool {
    !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !name.starts_with(|c: char| c.is_ascii_digit())
}

/// Validates a parameter list: unique identifier names, legal distributions,
/// defaults admissible under each distribution.
pub fn validate_parameters(parameters: &[ParameterSpec]) -> Result<(), CampaignError> {
    let mut seen = std::collections::HashSet::new();
    for p in parameters {
        if !valid_identifier(&p.name) {
            return Err(CampaignError::InvalidParameter {
                name: p.name.clone(),
                reason: "name must be a non-empty identifier ([A-Za-z_][A-Za-z0-9_]*)".into(),
            });
        }
        if !seen.insert(p.name.clone()) {
            return Err(CampaignError::DuplicateParameter(p.name.clone()));
        }
        p.distribution
            .validate()
            .map_err(|reason| CampaignError::InvalidParameter {
                name: p.name.clone(),
                reason,
            })?;
        if !p.distribution.admits_default(p.default) {
            return Err(CampaignError::InvalidParameter {
                name: p.name.clone(),
                reason: format!("default {} lies outside the distribution", p.default),
            });
        }
    }
    Ok(())
}

/// One input vector awaiting dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub run_id: u64,
    pub inputs: Inputs,
}

/// Lifecycle state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunState {
    Queued,
    Submitted,
    Completed,
    Failed,
}

/// Full record of one run: inputs, state, outputs, and timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub state: RunState,
    pub inputs: Inputs,
    pub outputs: Option<Outputs>,
    pub sim_time_ms: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl RunRecord {
    fn queued(sample: Sample) -> Self {
        Self {
            run_id: sample.run_id,
            state: RunState::Queued,
            inputs: sample.inputs,
            outputs: None,
            sim_time_ms: None,
            wall_time_ms: None,
            attempts: 0,
            reason: None,
        }
    }

    /// Client-observed overhead, `wall - sim`, for completed runs.
    pub fn overhead_ms(&self) -> Option<f64> {
        match (self.wall_time_ms, self.sim_time_ms) {
            (Some(w), Some(s)) => Some(w - s),
            _ => None,
        }
    }
}

/// Sampling-design metadata persisted in the manifest so an analysis run can
/// rebind collected outputs to estimator slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignMeta {
    Saltelli {
        base_count: u64,
        varied_names: Vec<String>,
    },
    StochasticCollocation {
        order: u32,
        varied_names: Vec<String>,
    },
    MonteCarlo {
        count: u64,
        seed: u64,
        varied_names: Vec<String>,
    },
    Perturbation {
        varied_names: Vec<String>,
        steps: Vec<f64>,
    },
}

/// The manifest persisted as `campaign.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignManifest {
    pub name: String,
    pub parameters: Vec<ParameterSpec>,
    /// Output schema, discovered from the first completed run.
    pub output_names: Option<Vec<String>>,
    pub design: Option<DesignMeta>,
    pub created_at: String,
}

/// Per-state run counts; the sum always equals the number of runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub queued: usize,
    pub submitted: usize,
    pub completed: usize,
    pub failed: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.queued + self.submitted + self.completed + self.failed
    }
}

#[derive(Debug)]
struct Inner {
    manifest: CampaignManifest,
    runs: BTreeMap<u64, RunRecord>,
    writer: File,
}

/// A campaign bound to its on-disk store. Shareable across concurrent tasks;
/// writes are serialized internally.
#[derive(Debug)]
pub struct Campaign {
    dir: PathBuf,
    warnings: Vec<String>,
    inner: Mutex<Inner>,
}

impl Campaign {
    /// Creates a fresh campaign in `dir` (created if missing) and persists an
    /// empty run store.
    pub fn create(
        name: &str,
        parameters: Vec<ParameterSpec>,
        dir: impl AsRef<Path>,
    ) -> Result<Self, CampaignError> {
        let dir = dir.as_ref().to_path_buf();
        validate_parameters(&parameters)?;
        std::fs::create_dir_all(&dir)?;
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.exists() {
            return Err(CampaignError::AlreadyExists(dir));
        }
        let manifest = CampaignManifest {
            name: name.to_string(),
            parameters,
            output_names: None,
            design: None,
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        write_manifest(&dir, &manifest)?;
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(RUNS_FILE))?;
        Ok(Self {
            dir,
            warnings: Vec::new(),
            inner: Mutex::new(Inner {
                manifest,
                runs: BTreeMap::new(),
                writer,
            }),
        })
    }

    /// Opens an existing campaign, replaying the run store. With
    /// `strict = false`, corrupt lines are skipped and reported via
    /// [`Campaign::warnings`]; with `strict = true` they are fatal.
    pub fn open(dir: impl AsRef<Path>, strict: bool) -> Result<Self, CampaignError> {
        let dir = dir.as_ref().to_path_buf();
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(CampaignError::NotFound(dir));
        }
        let manifest: CampaignManifest =
            serde_json::from_reader(BufReader::new(File::open(&manifest_path)?))?;

        let runs_path = dir.join(RUNS_FILE);
        let mut runs = BTreeMap::new();
        let mut warnings = Vec::new();
        if runs_path.exists() {
            let reader = BufReader::new(File::open(&runs_path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<RunRecord>(&line) {
                    Ok(mut record) => {
                        // SUBMITTED is never persisted, but tolerate it in a
                        // hand-edited store by mapping back to QUEUED.
                        if record.state == RunState::Submitted {
                            record.state = RunState::Queued;
                        }
                        runs.insert(record.run_id, record);
                    }
                    Err(e) => {
                        let err = CampaignError::CorruptRecord {
                            file: RUNS_FILE.to_string(),
                            line: idx + 1,
                            reason: e.to_string(),
                        };
                        if strict {
                            return Err(err);
                        }
                        warnings.push(err.to_string());
                    }
                }
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(runs_path)?;
        Ok(Self {
            dir,
            warnings,
            inner: Mutex::new(Inner {
                manifest,
                runs,
                writer,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Corrupt-record reports collected while opening (lenient mode).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn manifest(&self) -> CampaignManifest {
        self.inner.lock().unwrap().manifest.clone()
    }

    /// Stores design metadata in the manifest.
    pub fn set_design(&self, design: DesignMeta) -> Result<(), CampaignError> {
        let mut inner = self.inner.lock().unwrap();
        inner.manifest.design = Some(design);
        write_manifest(&self.dir, &inner.manifest)
    }

    /// Inserts samples as `QUEUED` run records. The whole batch is validated
    /// before anything is persisted.
    pub fn add_samples(&self, samples: &[Sample]) -> Result<usize, CampaignError> {
        let mut inner = self.inner.lock().unwrap();
        let param_names: Vec<String> = inner
            .manifest
            .parameters
            .iter()
            .map(|p| p.name.clone())
            .collect();
        let expected: Vec<&str> = param_names.iter().map(|s| s.as_str()).collect();
        let mut batch_ids = std::collections::HashSet::new();
        for sample in samples {
            if inner.runs.contains_key(&sample.run_id) || !batch_ids.insert(sample.run_id) {
                return Err(CampaignError::DuplicateRunId(sample.run_id));
            }
            check_key_set(sample.run_id, &sample.inputs, &expected).map_err(|detail| {
                CampaignError::InputKeyMismatch {
                    run_id: sample.run_id,
                    detail,
                }
            })?;
        }
        for sample in samples {
            // Normalize input order to the manifest parameter order so every
            // persisted record and outgoing payload is canonical.
            let mut inputs = Inputs::with_capacity(sample.inputs.len());
            for name in &param_names {
                inputs.insert(name.clone(), sample.inputs[name.as_str()]);
            }
            let record = RunRecord::queued(Sample {
                run_id: sample.run_id,
                inputs,
            });
            append_record(&mut inner.writer, &record)?;
            inner.runs.insert(record.run_id, record);
        }
        Ok(samples.len())
    }

    /// Marks a run as in flight (in-memory only). `attempt` counts from 1.
    pub fn mark_submitted(&self, run_id: u64, attempt: u32) -> Result<(), CampaignError> {
        let mut inner = self.inner.lock().unwrap();
        let record = inner
            .runs
            .get_mut(&run_id)
            .ok_or(CampaignError::UnknownRunId(run_id))?;
        match record.state {
            RunState::Queued => {
                record.state = RunState::Submitted;
                record.attempts = attempt;
                Ok(())
            }
            from => Err(CampaignError::IllegalTransition {
                run_id,
                from,
                to: RunState::Submitted,
            }),
        }
    }

    /// Returns a submitted run to the queue ahead of a retry (in-memory only).
    pub fn mark_requeued(&self, run_id: u64) -> Result<(), CampaignError> {
        let mut inner = self.inner.lock().unwrap();
        let record = inner
            .runs
            .get_mut(&run_id)
            .ok_or(CampaignError::UnknownRunId(run_id))?;
        match record.state {
            RunState::Submitted => {
                record.state = RunState::Queued;
                Ok(())
            }
            from => Err(CampaignError::IllegalTransition {
                run_id,
                from,
                to: RunState::Queued,
            }),
        }
    }

    /// Completes a run, fixing the campaign output schema on first use, and
    /// appends the result durably before returning.
    pub fn record_result(
        &self,
        run_id: u64,
        outputs: Outputs,
        sim_time_ms: f64,
        wall_time_ms: f64,
        attempts: u32,
    ) -> Result<(), CampaignError> {
        let mut inner = self.inner.lock().unwrap();
        let state = inner
            .runs
            .get(&run_id)
            .map(|r| r.state)
            .ok_or(CampaignError::UnknownRunId(run_id))?;
        match state {
            RunState::Completed => return Err(CampaignError::AlreadyCompleted(run_id)),
            RunState::Failed => {
                return Err(CampaignError::IllegalTransition {
                    run_id,
                    from: RunState::Failed,
                    to: RunState::Completed,
                })
            }
            RunState::Queued | RunState::Submitted => {}
        }
        if wall_time_ms < sim_time_ms {
            return Err(CampaignError::NegativeOverhead {
                run_id,
                wall: wall_time_ms,
                sim: sim_time_ms,
            });
        }
        match &inner.manifest.output_names {
            Some(names) => {
                let expected: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
                check_key_set(run_id, &outputs, &expected)
                    .map_err(|detail| CampaignError::OutputKeyMismatch { run_id, detail })?;
            }
            None => {
                let names: Vec<String> = outputs.keys().cloned().collect();
                inner.manifest.output_names = Some(names);
                write_manifest(&self.dir, &inner.manifest)?;
            }
        }
        let record = inner.runs.get_mut(&run_id).expect("checked above");
        record.state = RunState::Completed;
        record.outputs = Some(outputs);
        record.sim_time_ms = Some(sim_time_ms);
        record.wall_time_ms = Some(wall_time_ms);
        record.attempts = attempts;
        record.reason = None;
        let snapshot = record.clone();
        append_record(&mut inner.writer, &snapshot)?;
        Ok(())
    }

    /// Marks a run as permanently failed, persisting the reason.
    pub fn mark_failed(
        &self,
        run_id: u64,
        attempts: u32,
        reason: &str,
    ) -> Result<(), CampaignError> {
        let mut inner = self.inner.lock().unwrap();
        let record = inner
            .runs
            .get_mut(&run_id)
            .ok_or(CampaignError::UnknownRunId(run_id))?;
        match record.state {
            RunState::Queued | RunState::Submitted => {}
            from => {
                return Err(CampaignError::IllegalTransition {
                    run_id,
                    from,
                    to: RunState::Failed,
                })
            }
        }
        record.state = RunState::Failed;
        record.attempts = attempts;
        record.reason = Some(reason.to_string());
        let snapshot = record.clone();
        append_record(&mut inner.writer, &snapshot)?;
        Ok(())
    }

    /// Completed records, ordered by run id.
    pub fn load_results(&self) -> Vec<RunRecord> {
        let inner = self.inner.lock().unwrap();
        inner
            .runs
            .values()
            .filter(|r| r.state == RunState::Completed)
            .cloned()
            .collect()
    }

    /// All records, ordered by run id.
    pub fn records(&self) -> Vec<RunRecord> {
        self.inner.lock().unwrap().runs.values().cloned().collect()
    }

    pub fn failed_run_ids(&self) -> Vec<u64> {
        let inner = self.inner.lock().unwrap();
        inner
            .runs
            .values()
            .filter(|r| r.state == RunState::Failed)
            .map(|r| r.run_id)
            .collect()
    }

    pub fn record(&self, run_id: u64) -> Option<RunRecord> {
        self.inner.lock().unwrap().runs.get(&run_id).cloned()
    }

    pub fn status(&self) -> StatusCounts {
        let inner = self.inner.lock().unwrap();
        let mut counts = StatusCounts::default();
        for r in inner.runs.values() {
            match r.state {
                RunState::Queued => counts.queued += 1,
                RunState::Submitted => counts.submitted += 1,
                RunState::Completed => counts.completed += 1,
                RunState::Failed => counts.failed += 1,
            }
        }
        counts
    }

    /// Samples still awaiting dispatch (`QUEUED`), ordered by run id. After a
    /// reopen this is exactly the resume set.
    pub fn pending_samples(&self) -> Vec<Sample> {
        let inner = self.inner.lock().unwrap();
        inner
            .runs
            .values()
            .filter(|r| r.state == RunState::Queued)
            .map(|r| Sample {
                run_id: r.run_id,
                inputs: r.inputs.clone(),
            })
            .collect()
    }
}

fn check_key_set(
    _run_id: u64,
    map: &IndexMap<String, f64>,
    expected: &[&str],
) -> Result<(), String> {
    for name in expected {
        if !map.contains_key(*name) {
            return Err(format!("missing key `{name}`"));
        }
    }
    if map.len() != expected.len() {
        let extra: Vec<&str> = map
            .keys()
            .map(|k| k.as_str())
            .filter(|k| !expected.contains(k))
            .collect();
        return Err(format!("unexpected keys {extra:?}"));
    }
    Ok(())
}

fn append_record(writer: &mut File, record: &RunRecord) -> Result<(), CampaignError> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    writer.write_all(&line)?;
    Ok(())
}

fn write_manifest(dir: &Path, manifest: &CampaignManifest) -> Result<(), CampaignError> {
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let bytes = serde_json::to_vec_pretty(manifest)?;
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
    Ok(())
}
