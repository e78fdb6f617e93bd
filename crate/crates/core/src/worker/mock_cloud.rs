//! In-process emulation of serverless instance semantics: bounded instance
//! pools, cold starts, idle reclamation, throttling, and injected failures.
//!
//! The admission decision is one serialized critical section over the pool;
//! model executions then proceed in parallel, up to
//! `max_instances * instance_concurrency` at a time.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::response::Response;
use axum::routing::post;
use axum::Router;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{parse_request, serialize_response};

use super::events::{WorkerEventKind, WorkerEventLog};
use super::models::ModelAdapter;
use super::{error_body, execute_model, raw_response, spawn_server, ServerHandle, WorkerError};

/// Service limits and failure knobs of the emulated platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockCloudConfig {
    /// Instance initialization delay, surfaced as client-observed overhead.
    pub cold_start_ms: u64,
    pub max_instances: usize,
    /// Requests an instance can process at once (1 for function platforms).
    pub instance_concurrency: usize,
    /// Warm instances idle longer than this are reclaimed.
    pub idle_reclaim_ms: u64,
    /// Probability that an admitted request is answered 500.
    pub failure_rate: f64,
    /// Fraction of `max_instances` the platform actually provisions.
    pub provision_fraction: f64,
    /// Seed for the failure-injection stream.
    pub seed: u64,
}

impl Default for MockCloudConfig {
    fn default() -> Self {
        Self {
            cold_start_ms: 0,
            max_instances: 1000,
            instance_concurrency: 1,
            idle_reclaim_ms: 60_000,
            failure_rate: 0.0,
            provision_fraction: 1.0,
            seed: 0,
        }
    }
}

impl MockCloudConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_instances == 0 {
            return Err("max_instances must be >= 1".into());
        }
        if self.instance_concurrency == 0 {
            return Err("instance_concurrency must be >= 1".into());
        }
        if self.idle_reclaim_ms == 0 {
            return Err("idle_reclaim_ms must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.failure_rate) {
            return Err(format!(
                "failure_rate must be in [0, 1), got {}",
                self.failure_rate
            ));
        }
        if !(self.provision_fraction > 0.0 && self.provision_fraction <= 1.0) {
            return Err(format!(
                "provision_fraction must be in (0, 1], got {}",
                self.provision_fraction
            ));
        }
        Ok(())
    }

    fn effective_max_instances(&self) -> usize {
        ((self.max_instances as f64 * self.provision_fraction).floor() as usize).max(1)
    }
}

struct Instance {
    id: u64,
    active: usize,
    warm: bool,
    idle_since: Instant,
}

struct Pool {
    instances: Vec<Instance>,
    next_id: u64,
    rng: ChaCha8Rng,
}

enum Admission {
    Run {
        instance: u64,
        cold: bool,
        inject_failure: bool,
    },
    Throttled,
}

struct CloudState {
    adapter: ModelAdapter,
    config: MockCloudConfig,
    log: Arc<WorkerEventLog>,
    pool: Mutex<Pool>,
}

impl CloudState {
    fn admit(&self) -> Admission {
        let mut pool = self.pool.lock().unwrap();
        let now = Instant::now();
        let reclaim = Duration::from_millis(self.config.idle_reclaim_ms);
        pool.instances
            .retain(|i| i.active > 0 || !i.warm || now.duration_since(i.idle_since) < reclaim);

        let inject_failure =
            self.config.failure_rate > 0.0 && pool.rng.random::<f64>() < self.config.failure_rate;

        if let Some(instance) = pool
            .instances
            .iter_mut()
            .find(|i| i.warm && i.active < self.config.instance_concurrency)
        {
            instance.active += 1;
            return Admission::Run {
                instance: instance.id,
                cold: false,
                inject_failure,
            };
        }
        if pool.instances.len() < self.config.effective_max_instances() {
            let id = pool.next_id;
            pool.next_id += 1;
            pool.instances.push(Instance {
                id,
                active: 1,
                warm: false,
                idle_since: now,
            });
            return Admission::Run {
                instance: id,
                cold: true,
                inject_failure,
            };
        }
        Admission::Throttled
    }

    fn mark_warm(&self, instance: u64) {
        let mut pool = self.pool.lock().unwrap();
        if let Some(i) = pool.instances.iter_mut().find(|i| i.id == instance) {
            i.warm = true;
        }
    }

    fn release(&self, instance: u64) {
        let mut pool = self.pool.lock().unwrap();
        if let Some(i) = pool.instances.iter_mut().find(|i| i.id == instance) {
            i.active -= 1;
            if i.active == 0 {
                i.idle_since = Instant::now();
            }
        }
    }
}

async fn cloud_handler(State(state): State<Arc<CloudState>>, body: Bytes) -> Response {
    let request = match parse_request(&body) {
        Ok(r) => r,
        Err(e) => return raw_response(400, error_body(&e.to_string())),
    };
    let run_id = request.run_id;
    state.log.append(run_id, WorkerEventKind::Received, None);

    let (instance, cold, inject_failure) = match state.admit() {
        Admission::Throttled => {
            state.log.append(run_id, WorkerEventKind::Throttled, None);
            return raw_response(429, error_body("no instance available"));
        }
        Admission::Run {
            instance,
            cold,
            inject_failure,
        } => (instance, cold, inject_failure),
    };

    if cold {
        if state.config.cold_start_ms > 0 {
            tokio::time::sleep(Duration::from_millis(state.config.cold_start_ms)).await;
        }
        state.mark_warm(instance);
        state
            .log
            .append(run_id, WorkerEventKind::InstanceColdStarted, Some(instance));
    }

    if inject_failure {
        state
            .log
            .append(run_id, WorkerEventKind::InjectedFailure, Some(instance));
        state.release(instance);
        return raw_response(500, error_body("injected failure"));
    }

    state
        .log
        .append(run_id, WorkerEventKind::Started, Some(instance));
    let result = execute_model(&state.adapter, &request).await;
    match result {
        Ok(response) => {
            state
                .log
                .append(run_id, WorkerEventKind::Finished, Some(instance));
            state.release(instance);
            raw_response(200, serialize_response(&response))
        }
        Err(e) => {
            state.release(instance);
            raw_response(500, error_body(&e.to_string()))
        }
    }
}

/// Serves the model behind the emulated instance pool: idle warm instances
/// start immediately, fresh ones pay the cold start, and requests beyond the
/// pool limit are answered 429 at once.
pub async fn mock_cloud_serve(
    adapter: ModelAdapter,
    config: MockCloudConfig,
    bind: &str,
    events_path: Option<&Path>,
) -> Result<ServerHandle, WorkerError> {
    config
        .validate()
        .map_err(|e| WorkerError::Bind(std::io::Error::new(std::io::ErrorKind::InvalidInput, e)))?;
    let log = Arc::new(match events_path {
        Some(path) => WorkerEventLog::create(path)?,
        None => WorkerEventLog::in_memory(),
    });
    let state = Arc::new(CloudState {
        adapter,
        config,
        log: log.clone(),
        pool: Mutex::new(Pool {
            instances: Vec::new(),
            next_id: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }),
    });
    let router = Router::new()
        .route("/", post(cloud_handler))
        .with_state(state);
    spawn_server(router, bind, log).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::Inputs;
    use crate::protocol::WireRequest;
    use crate::worker::BuiltinModel;

    fn sleep_adapter(ms: u64) -> ModelAdapter {
        ModelAdapter::BuiltIn(BuiltinModel::Sleep { duration_ms: ms })
    }

    fn request_bytes(run_id: u64) -> Vec<u8> {
        let inputs: Inputs = [("x".to_string(), 0.0)].into_iter().collect();
        crate::protocol::serialize_request(&WireRequest { run_id, inputs })
    }

    async fn fire(url: &str, run_id: u64) -> u16 {
        reqwest::Client::new()
            .post(url)
            .body(request_bytes(run_id))
            .send()
            .await
            .unwrap()
            .status()
            .as_u16()
    }

    #[tokio::test]
    async fn admission_throttles_exactly_beyond_pool() {
        // 10 simultaneous requests against 4 instances: the first wave admits
        // 4 and turns the remaining 6 away with 429.
        let config = MockCloudConfig {
            max_instances: 4,
            ..Default::default()
        };
        let handle = mock_cloud_serve(sleep_adapter(100), config, "127.0.0.1:0", None)
            .await
            .unwrap();
        let mut joins = Vec::new();
        for run_id in 0..10 {
            let url = handle.url();
            joins.push(tokio::spawn(async move { fire(&url, run_id).await }));
        }
        let mut ok = 0;
        let mut throttled = 0;
        for j in joins {
            match j.await.unwrap() {
                200 => ok += 1,
                429 => throttled += 1,
                other => panic!("unexpected status {other}"),
            }
        }
        assert_eq!((ok, throttled), (4, 6));
        handle.shutdown().await;
    }

    #[tokio::test]
    async fn cold_start_hits_first_wave_only() {
        let config = MockCloudConfig {
            cold_start_ms: 400,
            max_instances: 4,
            ..Default::default()
        };
        let handle = mock_cloud_serve(sleep_adapter(10), config, "127.0.0.1:0", None)
            .await
            .unwrap();
        let url = handle.url();

        let t0 = Instant::now();
        assert_eq!(fire(&url, 0).await, 200);
        let cold_wall = t0.elapsed().as_secs_f64() * 1e3;

        let t0 = Instant::now();
        assert_eq!(fire(&url, 1).await, 200);
        let warm_wall = t0.elapsed().as_secs_f64() * 1e3;

        assert!(
            cold_wall - warm_wall > 300.0,
            "cold {cold_wall} warm {warm_wall}"
        );

        // Exactly one cold start, preceding the first execution.
        let events = handle.events();
        let cold_starts: Vec<_> = events
            .iter()
            .filter(|e| e.kind == WorkerEventKind::InstanceColdStarted)
            .collect();
        assert_eq!(cold_starts.len(), 1);
        let first_started = events
            .iter()
            .find(|e| e.kind == WorkerEventKind::Started)
            .unwrap();
        assert!(cold_starts[0].t <= first_started.t);
        handle.shutdown().await;
    }

    #[tokio::test]
    async fn no_failures_when_rate_is_zero_and_some_when_not() {
        let handle = mock_cloud_serve(
            sleep_adapter(0),
            MockCloudConfig::default(),
            "127.0.0.1:0",
            None,
        )
        .await
        .unwrap();
        for run_id in 0..50 {
            assert_eq!(fire(&handle.url(), run_id).await, 200);
        }
        handle.shutdown().await;

        let config = MockCloudConfig {
            failure_rate: 0.5,
            seed: 3,
            ..Default::default()
        };
        let handle = mock_cloud_serve(sleep_adapter(0), config, "127.0.0.1:0", None)
            .await
            .unwrap();
        let mut failures = 0;
        for run_id in 0..50 {
            if fire(&handle.url(), run_id).await == 500 {
                failures += 1;
            }
        }
        assert!(failures > 10, "failures = {failures}");
        let events = handle.events();
        assert_eq!(
            events
                .iter()
                .filter(|e| e.kind == WorkerEventKind::InjectedFailure)
                .count(),
            failures
        );
        handle.shutdown().await;
    }

    #[tokio::test]
    async fn provision_fraction_shrinks_the_pool() {
        // 90% provisioning of 10 instances leaves 9 usable slots.
        let config = MockCloudConfig {
            max_instances: 10,
            provision_fraction: 0.9,
            ..Default::default()
        };
        let handle = mock_cloud_serve(sleep_adapter(100), config, "127.0.0.1:0", None)
            .await
            .unwrap();
        let mut joins = Vec::new();
        for run_id in 0..10 {
            let url = handle.url();
            joins.push(tokio::spawn(async move { fire(&url, run_id).await }));
        }
        let mut throttled = 0;
        for j in joins {
            if j.await.unwrap() == 429 {
                throttled += 1;
            }
        }
        assert_eq!(throttled, 1);
        handle.shutdown().await;
    }

    #[tokio::test]
    async fn instance_concurrency_multiplies_capacity() {
        let config = MockCloudConfig {
            max_instances: 2,
            instance_concurrency: 2,
            ..Default::default()
        };
        let handle = mock_cloud_serve(sleep_adapter(150), config, "127.0.0.1:0", None)
            .await
            .unwrap();
        // Warm up both instances sequentially so they are assignable.
        assert_eq!(fire(&handle.url(), 100).await, 200);
        assert_eq!(fire(&handle.url(), 101).await, 200);

        let mut joins = Vec::new();
        for run_id in 0..5 {
            let url = handle.url();
            joins.push(tokio::spawn(async move { fire(&url, run_id).await }));
        }
        let mut ok = 0;
        let mut throttled = 0;
        for j in joins {
            match j.await.unwrap() {
                200 => ok += 1,
                429 => throttled += 1,
                other => panic!("unexpected status {other}"),
            }
        }
        // 2 instances x concurrency 2 admit four; the fifth is throttled.
        assert_eq!((ok, throttled), (4, 1));
        let events = handle.events();
        let started: Vec<_> = events
            .iter()
            .filter(|e| e.kind == WorkerEventKind::Started)
            .collect();
        assert_eq!(started.len(), 6);
        handle.shutdown().await;
    }

    #[tokio::test]
    async fn warm_instances_are_reclaimed_after_idle_window() {
        let config = MockCloudConfig {
            idle_reclaim_ms: 150,
            max_instances: 8,
            ..Default::default()
        };
        let handle = mock_cloud_serve(sleep_adapter(0), config, "127.0.0.1:0", None)
            .await
            .unwrap();
        assert_eq!(fire(&handle.url(), 0).await, 200);
        tokio::time::sleep(Duration::from_millis(300)).await;
        assert_eq!(fire(&handle.url(), 1).await, 200);
        let cold_starts = handle
            .events()
            .iter()
            .filter(|e| e.kind == WorkerEventKind::InstanceColdStarted)
            .count();
        // The second request found the pool empty again.
        assert_eq!(cold_starts, 2);
        handle.shutdown().await;
    }
}
