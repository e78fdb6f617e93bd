//! Capped exponential retry backoff with uniform jitter.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackoffPolicy {
    pub initial_ms: f64,
    pub multiplier: f64,
    pub max_ms: f64,
    /// Jitter fraction in `[0, 1]`: the capped delay is scaled by a uniform
    /// factor in `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            initial_ms: 100.0,
            multiplier: 2.0,
            max_ms: 5_000.0,
            jitter: 0.1,
        }
    }
}

impl BackoffPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.initial_ms < 0.0 {
            return Err(format!(
                "backoff initial_ms must be >= 0, got {}",
                self.initial_ms
            ));
        }
        if self.multiplier < 1.0 {
            return Err(format!(
                "backoff multiplier must be >= 1, got {}",
                self.multiplier
            ));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(format!(
                "backoff jitter must be in [0, 1], got {}",
                self.jitter
            ));
        }
        Ok(())
    }
}

/// Delay before retry number `attempt` (1-based): the capped exponential
/// `min(initial * multiplier^(attempt - 1), max)` jittered by `unit_jitter`,
/// a uniform draw in `[0, 1)`.
pub fn backoff_delay(attempt: u32, policy: &BackoffPolicy, unit_jitter: f64) -> f64 {
    assert!(attempt >= 1, "attempt counts from 1");
    let base = policy.initial_ms * policy.multiplier.powi(attempt as i32 - 1);
    let capped = base.min(policy.max_ms);
    (capped * (1.0 + policy.jitter * (2.0 * unit_jitter - 1.0))).max(0.0)
}
