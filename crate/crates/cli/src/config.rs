//! Campaign configuration file: parameters, sampler, executor and worker
//! settings in one JSON document. Unknown keys are rejected and the whole
//! file is validated before any command takes effect.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use uqfarm_core::campaign::{validate_parameters, Distribution, ParameterSpec};
use uqfarm_core::executor::BackoffPolicy;
use uqfarm_core::worker::{BuiltinModel, MockCloudConfig, ModelAdapter, SubprocessModel};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfigFile {
    pub name: String,
    pub parameters: Vec<ParameterConfig>,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub executor: ExecutorSection,
    #[serde(default)]
    pub worker: Option<WorkerSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub name: String,
    pub distribution: Distribution,
    pub default: f64,
    /// Sampled when true (the default); held at `default` otherwise.
    #[serde(default = "default_true")]
    pub varied: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerConfig {
    Saltelli { base_count: u64 },
    StochasticCollocation { order: u32 },
    MonteCarlo { count: u64, seed: u64 },
    Perturbation { rel_step: f64 },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorSection {
    pub endpoint_url: Option<String>,
    pub max_load: Option<usize>,
    pub request_timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub backoff: Option<BackoffPolicy>,
    /// Static bearer token added by the request signer.
    pub auth_token: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerSection {
    pub model: ModelConfig,
    #[serde(default)]
    pub mock: Option<MockCloudConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Ishigami {
        #[serde(default = "default_ishigami_a")]
        a: f64,
        #[serde(default = "default_ishigami_b")]
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
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_subprocess_timeout")]
        timeout_ms: u64,
    },
}

fn default_ishigami_a() -> f64 {
    7.0
}

fn default_ishigami_b() -> f64 {
    0.1
}

fn default_subprocess_timeout() -> u64 {
    30_000
}

impl ModelConfig {
    pub fn adapter(&self) -> Result<ModelAdapter> {
        Ok(match self.clone() {
            ModelConfig::Ishigami { a, b, delay_ms } => {
                ModelAdapter::BuiltIn(BuiltinModel::Ishigami { a, b, delay_ms })
            }
            ModelConfig::Linear {
                coefficients,
                delay_ms,
            } => {
                if coefficients.is_empty() {
                    bail!("linear model needs at least one coefficient");
                }
                ModelAdapter::BuiltIn(BuiltinModel::Linear {
                    coefficients,
                    delay_ms,
                })
            }
            ModelConfig::Sleep { duration_ms } => {
                ModelAdapter::BuiltIn(BuiltinModel::Sleep { duration_ms })
            }
            ModelConfig::Subprocess {
                command,
                timeout_ms,
            } => {
                if command.is_empty() {
                    bail!("subprocess model needs a command");
                }
                ModelAdapter::Subprocess(SubprocessModel {
                    command,
                    timeout_ms,
                })
            }
        })
    }
}

impl CampaignConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: CampaignConfigFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let specs = self.parameter_specs();
        validate_parameters(&specs).context("invalid parameters")?;
        if self.varied_names().is_empty() {
            bail!("at least one parameter must be varied");
        }
        match self.sampler {
            SamplerConfig::Saltelli { base_count: 0 } => {
                bail!("saltelli base_count must be >= 1")
            }
            SamplerConfig::StochasticCollocation { order: 0 } => {
                bail!("stochastic collocation order must be >= 1")
            }
            SamplerConfig::MonteCarlo { count: 0, .. } => {
                bail!("monte carlo count must be >= 1")
            }
            SamplerConfig::Perturbation { rel_step } if rel_step <= 0.0 => {
                bail!("perturbation rel_step must be > 0")
            }
            _ => {}
        }
        if let Some(backoff) = &self.executor.backoff {
            backoff.validate().map_err(anyhow::Error::msg)?;
        }
        if let Some(worker) = &self.worker {
            worker.model.adapter()?;
            if let Some(mock) = &worker.mock {
                mock.validate().map_err(anyhow::Error::msg)?;
            }
        }
        Ok(())
    }

    pub fn parameter_specs(&self) -> Vec<ParameterSpec> {
        self.parameters
            .iter()
            .map(|p| ParameterSpec::new(p.name.clone(), p.distribution, p.default))
            .collect()
    }

    pub fn varied_names(&self) -> Vec<String> {
        self.parameters
            .iter()
            .filter(|p| p.varied)
            .map(|p| p.name.clone())
            .collect()
    }
}
