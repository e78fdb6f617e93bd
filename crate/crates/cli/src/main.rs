//! `uqfarm`: sensitivity-analysis campaigns over stateless HTTP workers:
//! sample generation, worker serving, mock-cloud emulation, bounded-
//! concurrency dispatch, analysis, and reporting.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{AnalyzeMethod, DemoScale, RunOverrides};
use config::{CampaignConfigFile, ModelConfig};
use uqfarm_core::worker::{MockCloudConfig, ModelAdapter};

/// Environment variable holding the default campaign directory.
const CAMPAIGN_DIR_ENV: &str = "UQFARM_CAMPAIGN_DIR";

#[derive(Parser)]
#[command(
    name = "uqfarm",
    version,
    about = "Sensitivity-analysis campaigns over stateless HTTP workers",
    after_help = "Exit codes: 0 success, 1 run failures present, 2 configuration error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate samples from a campaign config and write them to the store
    Sample {
        /// Campaign config file (JSON)
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        campaign: CampaignDirArg,
    },
    /// Serve a model as a plain single-sample HTTP worker
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        /// Bind address, e.g. 127.0.0.1:8080 (port 0 picks a free port)
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Write provider events to this file
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Serve a model behind an emulated serverless instance pool
    MockCloud {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Instance pool size
        #[arg(long)]
        max_instances: Option<usize>,
        /// Cold-start delay per fresh instance (ms)
        #[arg(long)]
        cold_start_ms: Option<u64>,
        /// Requests one instance can process at once
        #[arg(long)]
        instance_concurrency: Option<usize>,
        /// Idle time before a warm instance is reclaimed (ms)
        #[arg(long)]
        idle_reclaim_ms: Option<u64>,
        /// Probability an admitted request is answered 500
        #[arg(long)]
        failure_rate: Option<f64>,
        /// Fraction of max_instances the platform actually provisions
        #[arg(long)]
        provision_fraction: Option<f64>,
        /// Seed of the failure-injection stream
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dispatch pending samples to a worker endpoint
    Run {
        #[command(flatten)]
        campaign: CampaignDirArg,
        /// Campaign config file supplying executor defaults
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker endpoint URL (overrides the config)
        #[arg(long)]
        endpoint: Option<String>,
        /// Maximum requests in flight
        #[arg(long)]
        max_load: Option<usize>,
        /// Per-request timeout (ms)
        #[arg(long)]
        timeout_ms: Option<u64>,
        /// Retries allowed per run after the first attempt
        #[arg(long)]
        max_retries: Option<u32>,
        /// Static bearer token for the request signer
        #[arg(long)]
        auth_token: Option<String>,
    },
    /// Compute sensitivity measures from collected outputs
    Analyze {
        #[command(flatten)]
        campaign: CampaignDirArg,
        /// sobol (Saltelli design), local (perturbation), moments (collocation)
        #[arg(long, value_enum)]
        method: AnalyzeMethod,
        /// Bootstrap resamples for Sobol confidence intervals
        #[arg(long, default_value_t = 100)]
        bootstrap: usize,
    },
    /// Reconstruct timelines, overhead stats, and speedup from event logs
    Report {
        #[command(flatten)]
        campaign: CampaignDirArg,
        /// Provider event log (defaults to worker_events.ndjson in the campaign dir)
        #[arg(long)]
        worker_events: Option<PathBuf>,
        /// Timeline resolution (ms)
        #[arg(long, default_value_t = 100.0)]
        tick_ms: f64,
    },
    /// Run the full pipeline against an in-process mock cloud
    Demo {
        /// small: Saltelli N=256, 20 ms model; medium: N=8192, instant model
        #[arg(long, value_enum, default_value_t = DemoScale::Small)]
        scale: DemoScale,
        /// Campaign directory (default ./uqfarm-demo-<scale>)
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CampaignDirArg {
    /// Campaign directory (or set UQFARM_CAMPAIGN_DIR)
    #[arg(long)]
    campaign: Option<PathBuf>,
}

impl CampaignDirArg {
    fn resolve(&self) -> Result<PathBuf> {
        if let Some(dir) = &self.campaign {
            return Ok(dir.clone());
        }
        std::env::var_os(CAMPAIGN_DIR_ENV)
            .map(PathBuf::from)
            .with_context(|| {
                format!("no campaign directory: pass --campaign or set {CAMPAIGN_DIR_ENV}")
            })
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Campaign config file; its worker.model section is used unless --model is given
    #[arg(long)]
    config: Option<PathBuf>,
    /// ishigami | linear | sleep | subprocess
    #[arg(long)]
    model: Option<String>,
    /// Ishigami `a` coefficient
    #[arg(long, default_value_t = 7.0)]
    a: f64,
    /// Ishigami `b` coefficient
    #[arg(long, default_value_t = 0.1)]
    b: f64,
    /// Artificial model compute time (ms) for ishigami/linear
    #[arg(long, default_value_t = 0)]
    delay_ms: u64,
    /// Linear model coefficients
    #[arg(long, value_delimiter = ',')]
    coefficients: Vec<f64>,
    /// Sleep model duration (ms)
    #[arg(long, default_value_t = 150)]
    duration_ms: u64,
    /// Subprocess command line (whitespace-split; use a config file for
    /// arguments containing spaces)
    #[arg(long)]
    command: Option<String>,
    /// Subprocess timeout (ms)
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(ModelAdapter, Option<MockCloudConfig>)> {
        let config = self
            .config
            .as_deref()
            .map(CampaignConfigFile::load)
            .transpose()?;
        let config_worker = config.and_then(|c| c.worker);
        let model = match self.model.as_deref() {
            None => match &config_worker {
                Some(w) => w.model.clone(),
                None => ModelConfig::Ishigami {
                    a: self.a,
                    b: self.b,
                    delay_ms: self.delay_ms,
                },
            },
            Some("ishigami") => ModelConfig::Ishigami {
                a: self.a,
                b: self.b,
                delay_ms: self.delay_ms,
            },
            Some("linear") => ModelConfig::Linear {
                coefficients: self.coefficients.clone(),
                delay_ms: self.delay_ms,
            },
            Some("sleep") => ModelConfig::Sleep {
                duration_ms: self.duration_ms,
            },
            Some("subprocess") => {
                let command = self
                    .command
                    .as_deref()
                    .context("--model subprocess needs --command")?;
                ModelConfig::Subprocess {
                    command: command.split_whitespace().map(String::from).collect(),
                    timeout_ms: self.timeout_ms,
                }
            }
            Some(other) => bail!("unknown model `{other}` (ishigami, linear, sleep, subprocess)"),
        };
        Ok((model.adapter()?, config_worker.and_then(|w| w.mock)))
    }
}

#[tokio::main]
async fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

async fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Sample { config, campaign } => commands::cmd_sample(&config, &campaign.resolve()?),
        Command::Serve {
            model,
            bind,
            events,
        } => {
            let (adapter, _) = model.resolve()?;
            commands::cmd_serve(adapter, &bind, events.as_deref()).await
        }
        Command::MockCloud {
            model,
            bind,
            events,
            max_instances,
            cold_start_ms,
            instance_concurrency,
            idle_reclaim_ms,
            failure_rate,
            provision_fraction,
            seed,
        } => {
            let (adapter, config_mock) = model.resolve()?;
            let mut mock = config_mock.unwrap_or_default();
            if let Some(v) = max_instances {
                mock.max_instances = v;
            }
            if let Some(v) = cold_start_ms {
                mock.cold_start_ms = v;
            }
            if let Some(v) = instance_concurrency {
                mock.instance_concurrency = v;
            }
            if let Some(v) = idle_reclaim_ms {
                mock.idle_reclaim_ms = v;
            }
            if let Some(v) = failure_rate {
                mock.failure_rate = v;
            }
            if let Some(v) = provision_fraction {
                mock.provision_fraction = v;
            }
            if let Some(v) = seed {
                mock.seed = v;
            }
            commands::cmd_mock_cloud(adapter, mock, &bind, events.as_deref()).await
        }
        Command::Run {
            campaign,
            config,
            endpoint,
            max_load,
            timeout_ms,
            max_retries,
            auth_token,
        } => {
            commands::cmd_run(
                &campaign.resolve()?,
                config.as_deref(),
                RunOverrides {
                    endpoint,
                    max_load,
                    timeout_ms,
                    max_retries,
                    auth_token,
                },
            )
            .await
        }
        Command::Analyze {
            campaign,
            method,
            bootstrap,
        } => commands::cmd_analyze(&campaign.resolve()?, method, bootstrap),
        Command::Report {
            campaign,
            worker_events,
            tick_ms,
        } => commands::cmd_report(&campaign.resolve()?, worker_events.as_deref(), tick_ms),
        Command::Demo { scale, dir } => {
            let dir = dir
                .unwrap_or_else(|| PathBuf::from(format!("uqfarm-demo-{scale:?}").to_lowercase()));
            commands::cmd_demo(scale, &dir).await
        }
    }
}
