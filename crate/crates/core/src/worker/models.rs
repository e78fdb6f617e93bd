//! Model adapters: built-in benchmark functions and a subprocess wrapper.

use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::AsyncWriteExt;

use crate::campaign::{Inputs, Outputs};
use crate::protocol::{serialize_request, WireRequest};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model expects at least {expected} inputs, got {got}")]
    NotEnoughInputs { expected: usize, got: usize },
    #[error("non-finite input `{0}`")]
    NonFiniteInput(String),
    #[error("failed to spawn model process: {0}")]
    Spawn(std::io::Error),
    #[error("model process io: {0}")]
    ProcessIo(std::io::Error),
    #[error("model process exited with {0}")]
    NonZeroExit(i32),
    #[error("model process killed after exceeding {0} ms")]
    Timeout(u64),
    #[error("model process produced unparseable outputs: {0}")]
    BadOutputs(String),
}

/// Built-in analytic benchmark models. `delay_ms` emulates compute time so
/// desk-scale runs exhibit realistic request durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinModel {
    Ishigami {
        a: f64,
        b: f64,
        #[serde(default)]
        delay_ms: u64,
    },
    Linear {
        coefficients: Vec<f64>,
        #[serde(default)]
        delay_ms: u64,
    },
    Sleep {
        duration_ms: u64,
    },
}

/// Subprocess contract: the wire request is written to the child's stdin,
/// the child prints an output map (`{"<name>": <number>, ...}`) on stdout
/// and exits zero. Spawn time counts toward the measured simulation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubprocessModel {
    /// Program and arguments.
    pub command: Vec<String>,
    pub timeout_ms: u64,
}

/// What the worker runs for each request: a deterministic mapping from
/// inputs to outputs (the sleep model varies only in timing).
#[derive(Debug, Clone, PartialEq)]
pub enum ModelAdapter {
    BuiltIn(BuiltinModel),
    Subprocess(SubprocessModel),
}

impl ModelAdapter {
    pub async fn run(&self, run_id: u64, inputs: &Inputs) -> Result<Outputs, ModelError> {
        match self {
            ModelAdapter::BuiltIn(model) => model.run(inputs).await,
            ModelAdapter::Subprocess(model) => model.run(run_id, inputs).await,
        }
    }
}

impl BuiltinModel {
    async fn run(&self, inputs: &Inputs) -> Result<Outputs, ModelError> {
        match self {
            BuiltinModel::Ishigami { a, b, delay_ms } => {
                let x = positional(inputs, 3)?;
                sleep_ms(*delay_ms).await;
                Ok(single("y", ishigami(x[0], x[1], x[2], *a, *b)))
            }
            BuiltinModel::Linear {
                coefficients,
                delay_ms,
            } => {
                let x = positional(inputs, coefficients.len())?;
                sleep_ms(*delay_ms).await;
                let y = coefficients.iter().zip(&x).map(|(a, x)| a * x).sum();
                Ok(single("y", y))
            }
            BuiltinModel::Sleep { duration_ms } => {
                sleep_ms(*duration_ms).await;
                Ok(single("slept_ms", *duration_ms as f64))
            }
        }
    }
}

/// `y = sin x1 + a sin^2 x2 + b x3^4 sin x1`, the standard benchmark with a
/// closed-form variance decomposition.
pub fn ishigami(x1: f64, x2: f64, x3: f64, a: f64, b: f64) -> f64 {
    x1.sin() + a * x2.sin().powi(2) + b * x3.powi(4) * x1.sin()
}

fn positional(inputs: &Inputs, expected: usize) -> Result<Vec<f64>, ModelError> {
    if inputs.len() < expected {
        return Err(ModelError::NotEnoughInputs {
            expected,
            got: inputs.len(),
        });
    }
    for (name, value) in inputs {
        if !value.is_finite() {
            return Err(ModelError::NonFiniteInput(name.clone()));
        }
    }
    Ok(inputs.values().copied().take(expected).collect())
}

fn single(name: &str, value: f64) -> Outputs {
    let mut outputs = IndexMap::with_capacity(1);
    outputs.insert(name.to_string(), value);
    outputs
}

async fn sleep_ms(ms: u64) {
    if ms > 0 {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
}

impl SubprocessModel {
    async fn run(&self, run_id: u64, inputs: &Inputs) -> Result<Outputs, ModelError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| ModelError::BadOutputs("empty command".into()))?;
        let mut child = tokio::process::Command::new(program)
            .args(args)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::null())
            .kill_on_drop(true)
            .spawn()
            .map_err(ModelError::Spawn)?;

        let payload = serialize_request(&WireRequest {
            run_id,
            inputs: inputs.clone(),
        });
        let mut stdin = child.stdin.take().expect("stdin piped");
        stdin
            .write_all(&payload)
            .await
            .map_err(ModelError::ProcessIo)?;
        drop(stdin);

        let output = tokio::time::timeout(
            Duration::from_millis(self.timeout_ms),
            child.wait_with_output(),
        )
        .await
        .map_err(|_| ModelError::Timeout(self.timeout_ms))?
        .map_err(ModelError::ProcessIo)?;

        if !output.status.success() {
            return Err(ModelError::NonZeroExit(output.status.code().unwrap_or(-1)));
        }
        serde_json::from_slice::<Outputs>(&output.stdout)
            .map_err(|e| ModelError::BadOutputs(e.to_string()))
    }
}
