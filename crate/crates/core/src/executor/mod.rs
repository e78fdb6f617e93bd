//! Client-side dispatcher: drains a request queue under a counting-semaphore
//! in-flight cap, sends each sample as one signed HTTP request, classifies
//! failures into retryable and fatal, and persists results as they arrive.
//!
//! Scheduling is event-driven: a request task is spawned when both a queued
//! request and a semaphore permit are available, and the permit is held from
//! the `SENT` event to the matching terminal or `RETRY_SCHEDULED` event, so
//! the event log itself witnesses the in-flight bound. Retried requests go to
//! the back of the queue after their backoff delay.

mod backoff;
mod events;
mod signer;

pub use backoff::{backoff_delay, BackoffPolicy};
pub use events::{load_events, DispatchEvent, DispatchEventKind, EventLog};
pub use signer::{IdentitySigner, RequestSigner, SignerError, StaticTokenSigner};

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Semaphore};

use crate::campaign::{Campaign, CampaignError, Outputs, Sample, EVENTS_FILE};
use crate::protocol::{parse_response, serialize_request, ProtocolError, WireRequest};

#[derive(Debug, Error)]
pub enum ExecutorError {
    #[error("invalid executor config: {0}")]
    InvalidConfig(String),
    #[error("campaign store failure: {0}")]
    Store(#[from] CampaignError),
    #[error("http client setup: {0}")]
    Client(#[from] reqwest::Error),
    #[error("event log io: {0}")]
    Io(#[from] std::io::Error),
}

/// Dispatcher knobs: endpoint, in-flight cap, timeout, and retry policy.
#[derive(Clone)]
pub struct ExecutorConfig {
    pub endpoint_url: String,
    /// Maximum number of requests in flight at once.
    pub max_load: usize,
    pub request_timeout_ms: u64,
    /// Retries allowed after the first attempt; a run makes at most
    /// `max_retries + 1` attempts.
    pub max_retries: u32,
    pub backoff: BackoffPolicy,
    pub signer: Arc<dyn RequestSigner>,
}

impl std::fmt::Debug for ExecutorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExecutorConfig")
            .field("endpoint_url", &self.endpoint_url)
            .field("max_load", &self.max_load)
            .field("request_timeout_ms", &self.request_timeout_ms)
            .field("max_retries", &self.max_retries)
            .field("backoff", &self.backoff)
            .finish_non_exhaustive()
    }
}

impl ExecutorConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            max_load: 256,
            request_timeout_ms: 30_000,
            max_retries: 5,
            backoff: BackoffPolicy::default(),
            signer: Arc::new(IdentitySigner),
        }
    }

    pub fn validate(&self) -> Result<(), ExecutorError> {
        if self.max_load == 0 {
            return Err(ExecutorError::InvalidConfig("max_load must be >= 1".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(ExecutorError::InvalidConfig(
                "request_timeout_ms must be >= 1".into(),
            ));
        }
        self.backoff
            .validate()
            .map_err(ExecutorError::InvalidConfig)
    }
}

/// Result of one dispatch batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total: usize,
    pub completed: usize,
    pub failed: usize,
    pub retries_total: usize,
    pub retried_run_ids: Vec<u64>,
    pub wall_time_ms: f64,
    pub sum_sim_time_ms: f64,
    /// `sum_sim_time_ms / wall_time_ms`: the parallel speedup over
    /// sequential execution of the same simulations.
    pub speedup: f64,
}

#[derive(Debug)]
pub struct SendSuccess {
    pub outputs: Outputs,
    pub sim_time_ms: f64,
    pub wall_time_ms: f64,
}

/// Failure classification: retryable errors heal on retry (throttles, server
/// errors, transport failures, timeouts); fatal ones never do (client-side
/// protocol errors).
#[derive(Debug, Clone, PartialEq)]
pub enum SendFailure {
    Retryable(String),
    Fatal(String),
}

struct Pending {
    sample: Sample,
    attempt: u32,
}

enum TaskOutcome {
    Completed { sim_time_ms: f64 },
    Failed,
    StoreError(ExecutorError),
}

struct Ctx {
    client: reqwest::Client,
    config: ExecutorConfig,
    campaign: Arc<Campaign>,
    log: Arc<EventLog>,
    work_tx: mpsc::UnboundedSender<Pending>,
    done_tx: mpsc::UnboundedSender<TaskOutcome>,
}

/// Dispatches `samples` (all `QUEUED`) against the configured endpoint and
/// blocks until every one is `COMPLETED` or `FAILED`. Events are written to
/// `events.ndjson` in the campaign directory, truncated per invocation.
pub async fn run(
    samples: Vec<Sample>,
    config: &ExecutorConfig,
    campaign: Arc<Campaign>,
) -> Result<RunSummary, ExecutorError> {
    let log = Arc::new(EventLog::create(&campaign.dir().join(EVENTS_FILE))?);
    run_with_log(samples, config, campaign, log).await
}

/// [`run`] against a caller-provided event log.
pub async fn run_with_log(
    samples: Vec<Sample>,
    config: &ExecutorConfig,
    campaign: Arc<Campaign>,
    log: Arc<EventLog>,
) -> Result<RunSummary, ExecutorError> {
    config.validate()?;
    let started = Instant::now();
    let total = samples.len();

    let client = reqwest::Client::builder()
        .http1_only()
        .pool_max_idle_per_host(config.max_load)
        .timeout(Duration::from_millis(config.request_timeout_ms))
        .build()?;

    let (work_tx, mut work_rx) = mpsc::unbounded_channel::<Pending>();
    let (done_tx, mut done_rx) = mpsc::unbounded_channel::<TaskOutcome>();
    for sample in &samples {
        log.append(sample.run_id, DispatchEventKind::Enqueued, None);
    }
    for sample in samples {
        work_tx
            .send(Pending { sample, attempt: 1 })
            .expect("receiver alive");
    }

    let ctx = Arc::new(Ctx {
        client,
        config: config.clone(),
        campaign,
        log: log.clone(),
        work_tx,
        done_tx,
    });

    let semaphore = Arc::new(Semaphore::new(config.max_load));
    let dispatcher = tokio::spawn({
        let ctx = ctx.clone();
        async move {
            while let Some(pending) = work_rx.recv().await {
                let permit = semaphore
                    .clone()
                    .acquire_owned()
                    .await
                    .expect("semaphore never closed");
                tokio::spawn(handle_one(pending, permit, ctx.clone()));
            }
        }
    });

    let mut completed = 0usize;
    let mut failed = 0usize;
    let mut sum_sim_time_ms = 0.0;
    let mut store_error = None;
    while completed + failed < total {
        match done_rx.recv().await {
            Some(TaskOutcome::Completed { sim_time_ms }) => {
                completed += 1;
                sum_sim_time_ms += sim_time_ms;
            }
            Some(TaskOutcome::Failed) => failed += 1,
            Some(TaskOutcome::StoreError(e)) => {
                store_error = Some(e);
                break;
            }
            None => break,
        }
    }
    dispatcher.abort();
    if let Some(e) = store_error {
        return Err(e);
    }

    let events = log.snapshot();
    let retried: Vec<u64> = {
        let mut ids: Vec<u64> = events
            .iter()
            .filter(|e| e.kind == DispatchEventKind::RetryScheduled)
            .map(|e| e.run_id)
            .collect();
        ids.sort_unstable();
        ids
    };
    let retries_total = retried.len();
    let mut retried_run_ids = retried;
    retried_run_ids.dedup();

    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(RunSummary {
        total,
        completed,
        failed,
        retries_total,
        retried_run_ids,
        wall_time_ms,
        sum_sim_time_ms,
        speedup: if wall_time_ms > 0.0 {
            sum_sim_time_ms / wall_time_ms
        } else {
            0.0
        },
    })
}

async fn handle_one(pending: Pending, permit: tokio::sync::OwnedSemaphorePermit, ctx: Arc<Ctx>) {
    let Pending { sample, attempt } = pending;
    let run_id = sample.run_id;
    let done = |outcome| {
        let _ = ctx.done_tx.send(outcome);
    };

    if let Err(e) = ctx.campaign.mark_submitted(run_id, attempt) {
        done(TaskOutcome::StoreError(e.into()));
        return;
    }
    ctx.log.append(run_id, DispatchEventKind::Sent, None);

    match send_one(&ctx.client, &ctx.config, &sample).await {
        Ok(success) => {
            match ctx.campaign.record_result(
                run_id,
                success.outputs,
                success.sim_time_ms,
                success.wall_time_ms,
                attempt,
            ) {
                Ok(()) => {
                    ctx.log.append(run_id, DispatchEventKind::Completed, None);
                    drop(permit);
                    done(TaskOutcome::Completed {
                        sim_time_ms: success.sim_time_ms,
                    });
                }
                // A response for a run that is already completed (a late
                // duplicate) is discarded; persistence stays exactly-once.
                Err(CampaignError::AlreadyCompleted(_)) => {
                    ctx.log.append(
                        run_id,
                        DispatchEventKind::Completed,
                        Some("duplicate response discarded".into()),
                    );
                    drop(permit);
                    done(TaskOutcome::Completed { sim_time_ms: 0.0 });
                }
                Err(e @ (CampaignError::Io(_) | CampaignError::Serde(_))) => {
                    done(TaskOutcome::StoreError(e.into()));
                }
                // Validation failures (e.g. an output schema mismatch) are
                // failures of this run, not of the whole dispatch.
                Err(e) => fail_run(&ctx, run_id, attempt, &e.to_string(), permit, done),
            }
        }
        Err(SendFailure::Retryable(detail)) if attempt <= ctx.config.max_retries => {
            ctx.log
                .append(run_id, DispatchEventKind::RetryScheduled, Some(detail));
            if let Err(e) = ctx.campaign.mark_requeued(run_id) {
                done(TaskOutcome::StoreError(e.into()));
                return;
            }
            drop(permit);
            let delay_ms = backoff_delay(attempt, &ctx.config.backoff, rand::rng().random());
            let work_tx = ctx.work_tx.clone();
            tokio::spawn(async move {
                tokio::time::sleep(Duration::from_secs_f64(delay_ms / 1e3)).await;
                let _ = work_tx.send(Pending {
                    sample,
                    attempt: attempt + 1,
                });
            });
        }
        Err(failure) => {
            let reason = match failure {
                SendFailure::Retryable(d) => format!("max retries exceeded: {d}"),
                SendFailure::Fatal(d) => format!("fatal: {d}"),
            };
            fail_run(&ctx, run_id, attempt, &reason, permit, done);
        }
    }
}

fn fail_run(
    ctx: &Ctx,
    run_id: u64,
    attempt: u32,
    reason: &str,
    permit: tokio::sync::OwnedSemaphorePermit,
    done: impl FnOnce(TaskOutcome),
) {
    match ctx.campaign.mark_failed(run_id, attempt, reason) {
        Ok(()) => {
            ctx.log
                .append(run_id, DispatchEventKind::Failed, Some(reason.to_string()));
            drop(permit);
            done(TaskOutcome::Failed);
        }
        Err(e) => done(TaskOutcome::StoreError(e.into())),
    }
}

/// Sends one signed request and classifies the outcome. Wall time is
/// measured client-side around the full exchange, signing included.
pub async fn send_one(
    client: &reqwest::Client,
    config: &ExecutorConfig,
    sample: &Sample,
) -> Result<SendSuccess, SendFailure> {
    let payload = serialize_request(&WireRequest::from(sample));
    let started = Instant::now();

    let headers = config
        .signer
        .sign(&payload)
        .map_err(|e| SendFailure::Retryable(e.to_string()))?;
    let mut request = client
        .post(&config.endpoint_url)
        .header("content-type", "application/json")
        .body(payload);
    for (name, value) in headers {
        request = request.header(name, value);
    }

    let response = request.send().await.map_err(classify_transport)?;
    let status = response.status();
    if status.as_u16() == 200 {
        let body = response.bytes().await.map_err(classify_transport)?;
        let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        let parsed = parse_response(&body, sample.run_id).map_err(|e| match e {
            ProtocolError::Schema(msg) => SendFailure::Fatal(format!("protocol: {msg}")),
            ProtocolError::RunIdMismatch { .. } => SendFailure::Fatal(e.to_string()),
        })?;
        Ok(SendSuccess {
            outputs: parsed.outputs,
            sim_time_ms: parsed.sim_time_ms,
            wall_time_ms,
        })
    } else if status.as_u16() == 429 || status.is_server_error() {
        Err(SendFailure::Retryable(format!("HTTP {}", status.as_u16())))
    } else {
        Err(SendFailure::Fatal(format!("HTTP {}", status.as_u16())))
    }
}

fn classify_transport(e: reqwest::Error) -> SendFailure {
    let class = if e.is_timeout() {
        "timeout"
    } else if e.is_connect() {
        "connect"
    } else {
        "transport"
    };
    SendFailure::Retryable(format!("{class}: {e}"))
}
