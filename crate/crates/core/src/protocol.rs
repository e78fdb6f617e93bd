//! JSON wire protocol between the dispatcher and workers.
//!
//! Both directions are fixed byte-for-byte by the golden-file tests:
//!
//! * request:  `{"run_id": <int>, "inputs": {"<name>": <number>, ...}}`
//! * response: `{"run_id": <int>, "outputs": {...}, "sim_time_ms": <number>}`
//!
//! Input/output maps keep their insertion order on the wire. Unknown fields
//! are schema violations.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::Sample;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("response run_id {got} does not match request run_id {expected}")]
    RunIdMismatch { expected: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub run_id: u64,
    pub inputs: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireResponse {
    pub run_id: u64,
    pub outputs: IndexMap<String, f64>,
    pub sim_time_ms: f64,
}

impl From<&Sample> for WireRequest {
    fn from(sample: &Sample) -> Self {
        Self {
            run_id: sample.run_id,
            inputs: sample.inputs.clone(),
        }
    }
}

/// Canonical request payload bytes for a sample.
pub fn serialize_request(request: &WireRequest) -> Vec<u8> {
    serde_json::to_vec(request).expect("wire request serialization is infallible")
}

pub fn parse_request(bytes: &[u8]) -> Result<WireRequest, ProtocolError> {
    serde_json::from_slice(bytes).map_err(|e| ProtocolError::Schema(excerpt(bytes, &e)))
}

pub fn serialize_response(response: &WireResponse) -> Vec<u8> {
    serde_json::to_vec(response).expect("wire response serialization is infallible")
}

/// Parses a response and checks the run-id echo against the request.
pub fn parse_response(bytes: &[u8], expected_run_id: u64) -> Result<WireResponse, ProtocolError> {
    let response: WireResponse =
        serde_json::from_slice(bytes).map_err(|e| ProtocolError::Schema(excerpt(bytes, &e)))?;
    if response.run_id != expected_run_id {
        return Err(ProtocolError::RunIdMismatch {
            expected: expected_run_id,
            got: response.run_id,
        });
    }
    Ok(response)
}

fn excerpt(bytes: &[u8], err: &serde_json::Error) -> String {
    let text = String::from_utf8_lossy(bytes);
    let head: String = text.chars().take(120).collect();
    format!("{err} (body: {head:?})")
}
