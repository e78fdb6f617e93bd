//! End-to-end dispatcher behavior against in-process workers: completion,
//! in-flight bounds, retry and failure classification, signing, and resume.

use std::sync::Arc;

use uqfarm_core::campaign::{Campaign, Distribution, ParameterSpec, RunState, Sample};
use uqfarm_core::executor::{
    self, BackoffPolicy, DispatchEventKind, EventLog, ExecutorConfig, RequestSigner, SignerError,
    StaticTokenSigner,
};
use uqfarm_core::metrics;
use uqfarm_core::worker::{mock_cloud_serve, serve, BuiltinModel, MockCloudConfig, ModelAdapter};

fn specs() -> Vec<ParameterSpec> {
    vec![
        ParameterSpec::new("x1", Distribution::Uniform { lo: -1.0, hi: 1.0 }, 0.0),
        ParameterSpec::new("x2", Distribution::Uniform { lo: -1.0, hi: 1.0 }, 0.0),
    ]
}

fn samples(n: u64) -> Vec<Sample> {
    (0..n)
        .map(|run_id| Sample {
            run_id,
            inputs: [
                ("x1".to_string(), (run_id as f64 / n as f64) * 2.0 - 1.0),
                ("x2".to_string(), 0.25),
            ]
            .into_iter()
            .collect(),
        })
        .collect()
}

fn linear_adapter() -> ModelAdapter {
    ModelAdapter::BuiltIn(BuiltinModel::Linear {
        coefficients: vec![2.0, 3.0],
        delay_ms: 0,
    })
}

fn campaign_with(n: u64) -> (tempfile::TempDir, Arc<Campaign>) {
    let dir = tempfile::tempdir().unwrap();
    let campaign = Campaign::create("test", specs(), dir.path().join("camp")).unwrap();
    campaign.add_samples(&samples(n)).unwrap();
    (dir, Arc::new(campaign))
}

fn fast_backoff() -> BackoffPolicy {
    BackoffPolicy {
        initial_ms: 5.0,
        multiplier: 1.5,
        max_ms: 50.0,
        jitter: 0.2,
    }
}

/// Per run, events must read `ENQUEUED (SENT RETRY_SCHEDULED?)* SENT?` with a
/// single trailing `COMPLETED` or `FAILED`.
fn assert_event_grammar(events: &[executor::DispatchEvent]) {
    use std::collections::HashMap;
    let mut per_run: HashMap<u64, Vec<DispatchEventKind>> = HashMap::new();
    for e in events {
        per_run.entry(e.run_id).or_default().push(e.kind);
    }
    for (run_id, kinds) in per_run {
        assert_eq!(kinds[0], DispatchEventKind::Enqueued, "run {run_id}");
        let mut in_flight = false;
        let mut terminal = false;
        for kind in &kinds[1..] {
            assert!(!terminal, "run {run_id}: event after terminal");
            match kind {
                DispatchEventKind::Enqueued => panic!("run {run_id}: duplicate ENQUEUED"),
                DispatchEventKind::Sent => {
                    assert!(!in_flight, "run {run_id}: SENT while in flight");
                    in_flight = true;
                }
                DispatchEventKind::RetryScheduled => {
                    assert!(in_flight, "run {run_id}: retry without SENT");
                    in_flight = false;
                }
                DispatchEventKind::Completed | DispatchEventKind::Failed => {
                    assert!(in_flight, "run {run_id}: terminal without SENT");
                    terminal = true;
                }
            }
        }
        assert!(terminal, "run {run_id}: no terminal event");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn healthy_run_completes_everything() {
    let handle = serve(linear_adapter(), "127.0.0.1:0", None).await.unwrap();
    let (_dir, campaign) = campaign_with(200);
    let config = ExecutorConfig {
        max_load: 32,
        ..ExecutorConfig::new(handle.url())
    };
    let summary = executor::run(campaign.pending_samples(), &config, campaign.clone())
        .await
        .unwrap();
    assert_eq!(
        (summary.total, summary.completed, summary.failed),
        (200, 200, 0)
    );
    let status = campaign.status();
    assert_eq!(status.completed, 200);

    // Every persisted result echoes the linear model.
    for record in campaign.load_results() {
        let want = 2.0 * record.inputs["x1"] + 3.0 * record.inputs["x2"];
        assert!((record.outputs.as_ref().unwrap()["y"] - want).abs() < 1e-12);
        assert!(record.wall_time_ms.unwrap() >= record.sim_time_ms.unwrap());
        assert_eq!(record.attempts, 1);
    }

    // Event log: bound respected, terminal multiset equals the sample set.
    let events = executor::load_events(&campaign.dir().join("events.ndjson")).unwrap();
    assert_event_grammar(&events);
    assert!(metrics::peak_in_flight(&events) <= 32);
    let mut terminal_ids: Vec<u64> = events
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                DispatchEventKind::Completed | DispatchEventKind::Failed
            )
        })
        .map(|e| e.run_id)
        .collect();
    terminal_ids.sort_unstable();
    assert_eq!(terminal_ids, (0..200).collect::<Vec<u64>>());
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn max_load_one_is_strictly_sequential() {
    let handle = serve(linear_adapter(), "127.0.0.1:0", None).await.unwrap();
    let (_dir, campaign) = campaign_with(10);
    let config = ExecutorConfig {
        max_load: 1,
        ..ExecutorConfig::new(handle.url())
    };
    let log = Arc::new(EventLog::in_memory());
    executor::run_with_log(
        campaign.pending_samples(),
        &config,
        campaign.clone(),
        log.clone(),
    )
    .await
    .unwrap();
    let events = log.snapshot();
    // Each SENT strictly follows the previous terminal event.
    assert_eq!(metrics::peak_in_flight(&events), 1);
    let mut in_flight = false;
    for e in &events {
        match e.kind {
            DispatchEventKind::Sent => {
                assert!(!in_flight, "overlapping SENT at t={}", e.t);
                in_flight = true;
            }
            DispatchEventKind::Completed | DispatchEventKind::Failed => in_flight = false,
            _ => {}
        }
    }
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn all_failing_worker_exhausts_retries() {
    // failure_rate cannot reach 1.0; a mock with an impossible model fails
    // every request with 500 instead.
    let broken = ModelAdapter::BuiltIn(BuiltinModel::Linear {
        coefficients: vec![1.0, 1.0, 1.0, 1.0, 1.0],
        delay_ms: 0,
    });
    let handle = serve(broken, "127.0.0.1:0", None).await.unwrap();
    let (_dir, campaign) = campaign_with(100);
    let config = ExecutorConfig {
        max_load: 16,
        max_retries: 2,
        backoff: fast_backoff(),
        ..ExecutorConfig::new(handle.url())
    };
    let summary = executor::run(campaign.pending_samples(), &config, campaign.clone())
        .await
        .unwrap();
    assert_eq!((summary.completed, summary.failed), (0, 100));
    for id in 0..100 {
        let record = campaign.record(id).unwrap();
        assert_eq!(record.state, RunState::Failed);
        assert_eq!(record.attempts, 3, "run {id}");
        assert!(record.reason.as_deref().unwrap().contains("HTTP 500"));
    }
    assert_eq!(summary.retries_total, 200);
    let events = executor::load_events(&campaign.dir().join("events.ndjson")).unwrap();
    assert_event_grammar(&events);
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn http_400_is_fatal_without_retry() {
    // An endpoint that rejects every request with 400 stands in for the
    // non-healing class (a malformed request will not heal on retry).
    use axum::routing::post;
    let router = axum::Router::new().route(
        "/",
        post(|| async { (axum::http::StatusCode::BAD_REQUEST, "bad request") }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let server = tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });

    let (_dir, campaign) = campaign_with(5);
    let config = ExecutorConfig {
        max_load: 4,
        max_retries: 5,
        backoff: fast_backoff(),
        ..ExecutorConfig::new(url)
    };
    let log = Arc::new(EventLog::in_memory());
    let summary = executor::run_with_log(
        campaign.pending_samples(),
        &config,
        campaign.clone(),
        log.clone(),
    )
    .await
    .unwrap();
    assert_eq!((summary.completed, summary.failed), (0, 5));
    assert_eq!(summary.retries_total, 0);
    for id in 0..5 {
        let record = campaign.record(id).unwrap();
        assert_eq!(record.attempts, 1);
        assert!(record.reason.as_deref().unwrap().contains("HTTP 400"));
    }
    assert!(log
        .snapshot()
        .iter()
        .all(|e| e.kind != DispatchEventKind::RetryScheduled));
    server.abort();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn static_token_signer_reaches_the_worker() {
    use axum::http::HeaderMap;
    use axum::routing::post;
    let router = axum::Router::new().route(
        "/",
        post(|headers: HeaderMap, body: axum::body::Bytes| async move {
            assert_eq!(headers.get("authorization").unwrap(), "Bearer sesame");
            let request = uqfarm_core::protocol::parse_request(&body).unwrap();
            let response = uqfarm_core::protocol::WireResponse {
                run_id: request.run_id,
                outputs: [("y".to_string(), 1.0)].into_iter().collect(),
                sim_time_ms: 0.1,
            };
            (
                axum::http::StatusCode::OK,
                uqfarm_core::protocol::serialize_response(&response),
            )
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let server = tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });

    let (_dir, campaign) = campaign_with(3);
    let config = ExecutorConfig {
        signer: Arc::new(StaticTokenSigner::bearer("sesame")),
        ..ExecutorConfig::new(url)
    };
    let summary = executor::run(campaign.pending_samples(), &config, campaign.clone())
        .await
        .unwrap();
    assert_eq!(summary.completed, 3);
    server.abort();
}

struct FlakySigner {
    failures_left: std::sync::Mutex<u32>,
}

impl RequestSigner for FlakySigner {
    fn sign(&self, _body: &[u8]) -> Result<Vec<(String, String)>, SignerError> {
        let mut left = self.failures_left.lock().unwrap();
        if *left > 0 {
            *left -= 1;
            return Err(SignerError("credential refresh pending".into()));
        }
        Ok(Vec::new())
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn failing_signer_schedules_retry() {
    let handle = serve(linear_adapter(), "127.0.0.1:0", None).await.unwrap();
    let (_dir, campaign) = campaign_with(1);
    let config = ExecutorConfig {
        signer: Arc::new(FlakySigner {
            failures_left: std::sync::Mutex::new(1),
        }),
        backoff: fast_backoff(),
        ..ExecutorConfig::new(handle.url())
    };
    let log = Arc::new(EventLog::in_memory());
    let summary = executor::run_with_log(
        campaign.pending_samples(),
        &config,
        campaign.clone(),
        log.clone(),
    )
    .await
    .unwrap();
    assert_eq!(summary.completed, 1);
    assert_eq!(summary.retried_run_ids, vec![0]);
    let events = log.snapshot();
    let retry = events
        .iter()
        .find(|e| e.kind == DispatchEventKind::RetryScheduled)
        .expect("retry scheduled");
    assert!(retry.detail.as_deref().unwrap().contains("signer"));
    assert_eq!(campaign.record(0).unwrap().attempts, 2);
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn resume_dispatches_only_pending_runs() {
    let handle = serve(linear_adapter(), "127.0.0.1:0", None).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("camp");
    {
        let campaign = Campaign::create("test", specs(), &path).unwrap();
        campaign.add_samples(&samples(10)).unwrap();
        // First five runs already completed in an earlier session.
        for id in 0..5 {
            campaign
                .record_result(
                    id,
                    [("y".to_string(), id as f64)].into_iter().collect(),
                    1.0,
                    2.0,
                    1,
                )
                .unwrap();
        }
    }
    let campaign = Arc::new(Campaign::open(&path, false).unwrap());
    assert!(campaign.warnings().is_empty());
    let pending = campaign.pending_samples();
    assert_eq!(pending.len(), 5);

    let config = ExecutorConfig::new(handle.url());
    let log = Arc::new(EventLog::in_memory());
    let summary = executor::run_with_log(pending, &config, campaign.clone(), log.clone())
        .await
        .unwrap();
    assert_eq!(summary.total, 5);
    assert_eq!(campaign.status().completed, 10);

    // Only the pending five were sent.
    let sent: std::collections::HashSet<u64> = log
        .snapshot()
        .iter()
        .filter(|e| e.kind == DispatchEventKind::Sent)
        .map(|e| e.run_id)
        .collect();
    assert_eq!(sent, (5..10).collect());

    // Exactly one persisted completion per run.
    let stored = std::fs::read_to_string(path.join("runs.ndjson")).unwrap();
    for id in 0..10 {
        let completions = stored
            .lines()
            .filter(|l| l.contains("\"COMPLETED\"") && l.contains(&format!("\"run_id\":{id},")))
            .count();
        assert_eq!(completions, 1, "run {id}");
    }
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn throttled_runs_recover_through_retries() {
    let mock = MockCloudConfig {
        max_instances: 4,
        ..Default::default()
    };
    let handle = mock_cloud_serve(
        ModelAdapter::BuiltIn(BuiltinModel::Sleep { duration_ms: 10 }),
        mock,
        "127.0.0.1:0",
        None,
    )
    .await
    .unwrap();
    let (_dir, campaign) = campaign_with(64);
    let config = ExecutorConfig {
        max_load: 32,
        max_retries: 50,
        backoff: fast_backoff(),
        ..ExecutorConfig::new(handle.url())
    };
    let summary = executor::run(campaign.pending_samples(), &config, campaign.clone())
        .await
        .unwrap();
    assert_eq!((summary.completed, summary.failed), (64, 0));
    assert!(summary.retries_total > 0, "expected 429-driven retries");
    handle.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn unreachable_endpoint_fails_runs_not_process() {
    let (_dir, campaign) = campaign_with(3);
    let config = ExecutorConfig {
        max_retries: 1,
        request_timeout_ms: 500,
        backoff: fast_backoff(),
        ..ExecutorConfig::new("http://127.0.0.1:9/") // discard port, refuses
    };
    let summary = executor::run(campaign.pending_samples(), &config, campaign.clone())
        .await
        .unwrap();
    assert_eq!((summary.completed, summary.failed), (0, 3));
    assert_eq!(campaign.status().failed, 3);
}
