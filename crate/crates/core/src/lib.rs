//! Engine for sensitivity-analysis campaigns over stateless HTTP workers.
//!
//! The crate is organised around the lifecycle of a campaign:
//!
//! * [`campaign`] — parameter definitions, run records, and the durable
//!   on-disk store (`campaign.json` + `runs.ndjson`).
//! * [`sampling`] — Sobol sequences, Saltelli designs, Monte Carlo draws,
//!   tensor-grid quadrature, and local perturbation designs.
//! * [`protocol`] — the JSON wire format spoken between client and worker.
//! * [`executor`] — the bounded-concurrency dispatcher with retries,
//!   timeouts, and a timestamped event log.
//! * [`worker`] — the single-sample HTTP handler, built-in benchmark
//!   models, subprocess adapters, and a mock serverless cloud.
//! * [`analysis`] — Sobol indices, derivative-based local sensitivities,
//!   and quadrature moments from collected outputs.
//! * [`metrics`] — state timelines, overhead distributions, runtime tables,
//!   and speedup figures reconstructed from event logs.

pub mod analysis;
pub mod campaign;
pub mod executor;
pub mod metrics;
pub mod protocol;
pub mod sampling;
pub mod worker;
