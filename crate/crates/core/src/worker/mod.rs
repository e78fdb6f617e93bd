//! Provider side: an HTTP handler that runs the model for exactly one sample
//! per request and returns outputs with the measured simulation time, plus a
//! mock-cloud wrapper that emulates serverless instance semantics.

mod events;
mod mock_cloud;
mod models;

pub use events::{load_worker_events, WorkerEvent, WorkerEventKind, WorkerEventLog};
pub use mock_cloud::{mock_cloud_serve, MockCloudConfig};
pub use models::{ishigami, BuiltinModel, ModelAdapter, ModelError, SubprocessModel};

use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::protocol::{parse_request, serialize_response, WireRequest, WireResponse};

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error("bind failure: {0}")]
    Bind(std::io::Error),
    #[error("event log io: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs the model for one parsed request, measuring simulation time around
/// the model execution only (parse/serialize excluded).
pub async fn execute_model(
    adapter: &ModelAdapter,
    request: &WireRequest,
) -> Result<WireResponse, ModelError> {
    let started = Instant::now();
    let outputs = adapter.run(request.run_id, &request.inputs).await?;
    let sim_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(WireResponse {
        run_id: request.run_id,
        outputs,
        sim_time_ms,
    })
}

/// The provider-side request path as one testable function: payload in,
/// `(status, body)` out. Malformed payloads get 400, model failures 500.
pub async fn handle_request(adapter: &ModelAdapter, body: &[u8]) -> (u16, Vec<u8>) {
    let request = match parse_request(body) {
        Ok(r) => r,
        Err(e) => return (400, error_body(&e.to_string())),
    };
    match execute_model(adapter, &request).await {
        Ok(response) => (200, serialize_response(&response)),
        Err(e) => (500, error_body(&e.to_string())),
    }
}

fn error_body(message: &str) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({ "error": message })).expect("error body")
}

fn raw_response(status: u16, body: Vec<u8>) -> Response {
    (
        StatusCode::from_u16(status).expect("static status"),
        [("content-type", "application/json")],
        body,
    )
        .into_response()
}

/// A running worker server. Dropping the handle aborts the server; calling
/// [`ServerHandle::shutdown`] drains in-flight requests first.
pub struct ServerHandle {
    addr: SocketAddr,
    log: Arc<WorkerEventLog>,
    shutdown_tx: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    /// Provider events recorded so far.
    pub fn events(&self) -> Vec<WorkerEvent> {
        self.log.snapshot()
    }

    /// Graceful shutdown: stops accepting and drains in-flight requests.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown_tx.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

struct PlainState {
    adapter: ModelAdapter,
    log: Arc<WorkerEventLog>,
    next_slot: AtomicU64,
}

async fn plain_handler(State(state): State<Arc<PlainState>>, body: Bytes) -> Response {
    let request = match parse_request(&body) {
        Ok(r) => r,
        Err(e) => return raw_response(400, error_body(&e.to_string())),
    };
    // Each request gets a fresh execution slot; there is no instance pool in
    // the plain worker.
    let slot = state.next_slot.fetch_add(1, Ordering::Relaxed);
    state
        .log
        .append(request.run_id, WorkerEventKind::Received, Some(slot));
    state
        .log
        .append(request.run_id, WorkerEventKind::Started, Some(slot));
    match execute_model(&state.adapter, &request).await {
        Ok(response) => {
            state
                .log
                .append(request.run_id, WorkerEventKind::Finished, Some(slot));
            raw_response(200, serialize_response(&response))
        }
        Err(e) => raw_response(500, error_body(&e.to_string())),
    }
}

/// Serves the model on `bind` (e.g. `127.0.0.1:0`), handling requests
/// concurrently with one model execution per request.
pub async fn serve(
    adapter: ModelAdapter,
    bind: &str,
    events_path: Option<&Path>,
) -> Result<ServerHandle, WorkerError> {
    let log = Arc::new(match events_path {
        Some(path) => WorkerEventLog::create(path)?,
        None => WorkerEventLog::in_memory(),
    });
    let state = Arc::new(PlainState {
        adapter,
        log: log.clone(),
        next_slot: AtomicU64::new(0),
    });
    let router = Router::new()
        .route("/", post(plain_handler))
        .with_state(state);
    spawn_server(router, bind, log).await
}

pub(crate) async fn spawn_server(
    router: Router,
    bind: &str,
    log: Arc<WorkerEventLog>,
) -> Result<ServerHandle, WorkerError> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(WorkerError::Bind)?;
    let addr = listener.local_addr().map_err(WorkerError::Bind)?;
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            })
            .await;
    });
    Ok(ServerHandle {
        addr,
        log,
        shutdown_tx: Some(shutdown_tx),
        task,
    })
}
