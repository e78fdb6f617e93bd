//! Subcommand implementations. Each returns the process exit code:
//! 0 success, 1 run failures present; configuration errors surface as `Err`
//! and exit 2.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use uqfarm_core::analysis::{
    self, local_csv, moments_csv, render_sobol_table, sobol_csv, sobol_report_svg,
};
use uqfarm_core::campaign::{
    Campaign, DesignMeta, ParameterSpec, Sample, EVENTS_FILE, MANIFEST_FILE, RUNS_FILE,
};
use uqfarm_core::executor::{self, ExecutorConfig, RunSummary, StaticTokenSigner};
use uqfarm_core::metrics::{self, svg, DEFAULT_TICK_MS};
use uqfarm_core::sampling::{self, PerturbationDesign, SaltelliDesign};
use uqfarm_core::worker::{
    load_worker_events, mock_cloud_serve, serve, MockCloudConfig, ModelAdapter, WorkerEvent,
};

use crate::config::{CampaignConfigFile, ModelConfig, SamplerConfig};

pub const WORKER_EVENTS_FILE: &str = "worker_events.ndjson";

/// Builds the sample set and design metadata for a validated config.
fn build_samples(
    config: &CampaignConfigFile,
    specs: &[ParameterSpec],
    varied: &[String],
) -> Result<(Vec<Sample>, DesignMeta, Option<String>)> {
    match config.sampler {
        SamplerConfig::Saltelli { base_count } => {
            let (samples, design) = sampling::saltelli_design(specs, varied, base_count)?;
            let warning = (!base_count.is_power_of_two()).then(|| {
                format!(
                    "saltelli base_count {base_count} is not a power of two; QMC balance degrades"
                )
            });
            Ok((samples, design.meta(), warning))
        }
        SamplerConfig::StochasticCollocation { order } => {
            let (samples, design) = sampling::stochastic_collocation(specs, varied, order)?;
            Ok((samples, design.meta(), None))
        }
        SamplerConfig::MonteCarlo { count, seed } => {
            let (samples, meta) = sampling::monte_carlo(specs, varied, count, seed)?;
            Ok((samples, meta, None))
        }
        SamplerConfig::Perturbation { rel_step } => {
            let reference = Sample {
                run_id: 0,
                inputs: specs.iter().map(|s| (s.name.clone(), s.default)).collect(),
            };
            let (samples, design) =
                sampling::perturbation_design(specs, &reference, varied, rel_step)?;
            Ok((samples, design.meta(), None))
        }
    }
}

/// Makes `dir` ready for a fresh campaign. An existing campaign is replaced
/// only if it holds no results yet.
fn prepare_campaign_dir(dir: &Path) -> Result<()> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Ok(());
    }
    let existing = Campaign::open(dir, false)?;
    let status = existing.status();
    if status.completed + status.failed > 0 {
        bail!(
            "campaign at {} already has {} finished runs; use a fresh directory",
            dir.display(),
            status.completed + status.failed
        );
    }
    for name in [MANIFEST_FILE, RUNS_FILE, EVENTS_FILE] {
        let path = dir.join(name);
        if path.exists() {
            std::fs::remove_file(path)?;
        }
    }
    Ok(())
}

pub fn cmd_sample(config_path: &Path, dir: &Path) -> Result<i32> {
    let config = CampaignConfigFile::load(config_path)?;
    let specs = config.parameter_specs();
    let varied = config.varied_names();
    let (samples, design, warning) = build_samples(&config, &specs, &varied)?;

    prepare_campaign_dir(dir)?;
    let campaign = Campaign::create(&config.name, specs, dir)?;
    campaign.set_design(design)?;
    campaign.add_samples(&samples)?;
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    println!("{} samples written to {}", samples.len(), dir.display());
    Ok(0)
}

pub struct RunOverrides {
    pub endpoint: Option<String>,
    pub max_load: Option<usize>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub auth_token: Option<String>,
}

pub async fn cmd_run(
    dir: &Path,
    config_path: Option<&Path>,
    overrides: RunOverrides,
) -> Result<i32> {
    let campaign = Campaign::open(dir, false)?;
    for w in campaign.warnings() {
        eprintln!("warning: {w}");
    }
    let section = match config_path {
        Some(path) => CampaignConfigFile::load(path)?.executor,
        None => Default::default(),
    };
    let endpoint = overrides
        .endpoint
        .or(section.endpoint_url)
        .context("an endpoint is required (--endpoint or executor.endpoint_url in the config)")?;
    let mut config = ExecutorConfig::new(endpoint);
    if let Some(v) = section.max_load {
        config.max_load = v;
    }
    if let Some(v) = section.request_timeout_ms {
        config.request_timeout_ms = v;
    }
    if let Some(v) = section.max_retries {
        config.max_retries = v;
    }
    if let Some(v) = section.backoff {
        config.backoff = v;
    }
    if let Some(token) = section.auth_token.or(overrides.auth_token) {
        config.signer = Arc::new(StaticTokenSigner::bearer(&token));
    }
    if let Some(v) = overrides.max_load {
        config.max_load = v;
    }
    if let Some(v) = overrides.timeout_ms {
        config.request_timeout_ms = v;
    }
    if let Some(v) = overrides.max_retries {
        config.max_retries = v;
    }
    config.validate()?;

    let pending = campaign.pending_samples();
    if pending.is_empty() {
        println!("nothing to dispatch: no runs in state QUEUED");
        return Ok(0);
    }
    println!(
        "dispatching {} runs to {} (max_load {}, timeout {} ms, max_retries {})",
        pending.len(),
        config.endpoint_url,
        config.max_load,
        config.request_timeout_ms,
        config.max_retries
    );
    let campaign = Arc::new(campaign);
    let summary = executor::run(pending, &config, campaign.clone()).await?;
    print_summary(&summary);
    if summary.failed > 0 {
        let failed = campaign.failed_run_ids();
        println!("failed runs: {failed:?}");
        return Ok(1);
    }
    Ok(0)
}

pub fn print_summary(summary: &RunSummary) {
    println!(
        "completed {}/{} ({} failed), retries {} on runs {:?}",
        summary.completed,
        summary.total,
        summary.failed,
        summary.retries_total,
        summary.retried_run_ids
    );
    println!(
        "wall time {:.1} ms, total simulation time {:.1} ms, speedup {:.1}x",
        summary.wall_time_ms, summary.sum_sim_time_ms, summary.speedup
    );
}

pub async fn cmd_serve(adapter: ModelAdapter, bind: &str, events: Option<&Path>) -> Result<i32> {
    let handle = serve(adapter, bind, events).await?;
    println!("worker listening on {}", handle.url());
    tokio::signal::ctrl_c().await?;
    eprintln!("shutting down, draining in-flight requests");
    handle.shutdown().await;
    Ok(0)
}

pub async fn cmd_mock_cloud(
    adapter: ModelAdapter,
    mock: MockCloudConfig,
    bind: &str,
    events: Option<&Path>,
) -> Result<i32> {
    mock.validate().map_err(anyhow::Error::msg)?;
    let handle = mock_cloud_serve(adapter, mock, bind, events).await?;
    println!(
        "mock cloud listening on {} ({} instances, {} ms cold start)",
        handle.url(),
        mock.max_instances,
        mock.cold_start_ms
    );
    tokio::signal::ctrl_c().await?;
    eprintln!("shutting down, draining in-flight requests");
    handle.shutdown().await;
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalyzeMethod {
    Sobol,
    Local,
    Moments,
}

pub fn cmd_analyze(dir: &Path, method: AnalyzeMethod, bootstrap: usize) -> Result<i32> {
    let campaign = Campaign::open(dir, false)?;
    for w in campaign.warnings() {
        eprintln!("warning: {w}");
    }
    let manifest = campaign.manifest();
    let records = campaign.load_results();
    if records.is_empty() {
        bail!("campaign has no completed runs to analyze");
    }
    let design = manifest
        .design
        .context("campaign manifest carries no design metadata; run `sample` first")?;

    match (method, design) {
        (
            AnalyzeMethod::Sobol,
            DesignMeta::Saltelli {
                base_count,
                varied_names,
            },
        ) => {
            let design = SaltelliDesign {
                base_count,
                varied_names,
            };
            let result = analysis::sobol_indices(&design, &records, bootstrap)?;
            std::fs::write(dir.join("sobol.csv"), sobol_csv(&result))?;
            std::fs::write(dir.join("report.svg"), sobol_report_svg(&result))?;
            print!("{}", render_sobol_table(&result));
            println!("wrote sobol.csv and report.svg to {}", dir.display());
        }
        (
            AnalyzeMethod::Local,
            DesignMeta::Perturbation {
                varied_names,
                steps,
            },
        ) => {
            let design = PerturbationDesign {
                varied_names,
                steps,
            };
            let result = analysis::local_sensitivity(&design, &records)?;
            std::fs::write(dir.join("local.csv"), local_csv(&result))?;
            let panels: Vec<svg::BarPanel> = result
                .outputs
                .iter()
                .map(|o| svg::BarPanel {
                    title: format!("Local sensitivities: {}", o.output),
                    labels: o.params.iter().map(|p| p.name.clone()).collect(),
                    series: vec![(
                        "dY/dX".to_string(),
                        o.params.iter().map(|p| p.derivative).collect(),
                    )],
                })
                .collect();
            std::fs::write(dir.join("report.svg"), svg::bar_chart(&panels))?;
            for output in &result.outputs {
                println!("output {}", output.output);
                for p in &output.params {
                    println!(
                        "  d/d{:<14} {:>12.6} (step {})",
                        p.name, p.derivative, p.step
                    );
                }
            }
            println!("wrote local.csv and report.svg to {}", dir.display());
        }
        (
            AnalyzeMethod::Moments,
            DesignMeta::StochasticCollocation {
                order,
                varied_names,
            },
        ) => {
            let (_, design) =
                sampling::stochastic_collocation(&manifest.parameters, &varied_names, order)?;
            let result = analysis::quadrature_moments(&design, &records)?;
            std::fs::write(dir.join("moments.csv"), moments_csv(&result))?;
            let panel = svg::BarPanel {
                title: "Quadrature moments".to_string(),
                labels: result.outputs.iter().map(|o| o.output.clone()).collect(),
                series: vec![
                    (
                        "mean".to_string(),
                        result.outputs.iter().map(|o| o.mean).collect(),
                    ),
                    (
                        "variance".to_string(),
                        result.outputs.iter().map(|o| o.variance).collect(),
                    ),
                ],
            };
            std::fs::write(dir.join("report.svg"), svg::bar_chart(&[panel]))?;
            for o in &result.outputs {
                println!(
                    "output {:<16} mean {:>12.6}  variance {:>12.6}",
                    o.output, o.mean, o.variance
                );
            }
            println!("wrote moments.csv and report.svg to {}", dir.display());
        }
        (method, design) => bail!(
            "method {method:?} does not match the campaign design {design:?}; \
             sobol needs a saltelli design, local a perturbation design, moments a \
             stochastic_collocation design"
        ),
    }
    Ok(0)
}

pub fn cmd_report(dir: &Path, worker_events: Option<&Path>, tick_ms: f64) -> Result<i32> {
    let campaign = Campaign::open(dir, false)?;
    for w in campaign.warnings() {
        eprintln!("warning: {w}");
    }
    let events_path = dir.join(EVENTS_FILE);
    let events = if events_path.exists() {
        executor::load_events(&events_path)?
    } else {
        eprintln!("note: no {EVENTS_FILE} in campaign dir; client timeline will be empty");
        Vec::new()
    };
    let provider: Option<Vec<WorkerEvent>> = match worker_events {
        Some(path) => Some(load_worker_events(path)?),
        None => {
            let default = dir.join(WORKER_EVENTS_FILE);
            if default.exists() {
                Some(load_worker_events(&default)?)
            } else {
                None
            }
        }
    };
    let records = campaign.records();
    let written = metrics::write_report(dir, &events, provider.as_deref(), &records, tick_ms)?;
    let summary = metrics::summarize(&events, &records);
    println!(
        "total {} completed {} failed {} retries {} wall {:.1} ms speedup {:.1}x",
        summary.total,
        summary.completed,
        summary.failed,
        summary.retries_total,
        summary.wall_time_ms,
        summary.speedup
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DemoScale {
    Small,
    Medium,
}

/// End-to-end pipeline against an in-process mock cloud: sample, dispatch,
/// analyze, report. Small finishes in seconds; medium runs the full
/// 2^13-base Saltelli design.
pub async fn cmd_demo(scale: DemoScale, dir: &Path) -> Result<i32> {
    use std::f64::consts::PI;
    let (base_count, delay_ms, max_load, mock) = match scale {
        DemoScale::Small => (
            256,
            20,
            64,
            MockCloudConfig {
                cold_start_ms: 50,
                max_instances: 128,
                failure_rate: 0.01,
                seed: 7,
                ..Default::default()
            },
        ),
        DemoScale::Medium => (
            8192,
            0,
            256,
            MockCloudConfig {
                max_instances: 512,
                failure_rate: 0.005,
                seed: 7,
                ..Default::default()
            },
        ),
    };

    let parameters: Vec<serde_json::Value> = ["x1", "x2", "x3"]
        .iter()
        .map(|n| {
            serde_json::json!({
                "name": n,
                "distribution": {"kind": "uniform", "lo": -PI, "hi": PI},
                "default": 0.0,
            })
        })
        .collect();
    let config: CampaignConfigFile = serde_json::from_value(serde_json::json!({
        "name": format!("ishigami-demo-{scale:?}").to_lowercase(),
        "parameters": parameters,
        "sampler": {"kind": "saltelli", "base_count": base_count},
    }))?;
    config.validate()?;
    let specs = config.parameter_specs();
    let varied = config.varied_names();
    let (samples, design_meta, _) = build_samples(&config, &specs, &varied)?;

    prepare_campaign_dir(dir)?;
    let campaign = Campaign::create(&config.name, specs, dir)?;
    campaign.set_design(design_meta)?;
    campaign.add_samples(&samples)?;
    println!("{} samples written to {}", samples.len(), dir.display());

    let adapter = ModelConfig::Ishigami {
        a: 7.0,
        b: 0.1,
        delay_ms,
    }
    .adapter()?;
    let handle = mock_cloud_serve(
        adapter,
        mock,
        "127.0.0.1:0",
        Some(&dir.join(WORKER_EVENTS_FILE)),
    )
    .await?;
    println!(
        "mock cloud on {} ({} instances, {} ms cold start, failure rate {})",
        handle.url(),
        mock.max_instances,
        mock.cold_start_ms,
        mock.failure_rate
    );

    let exec_config = ExecutorConfig {
        max_load,
        max_retries: 8,
        ..ExecutorConfig::new(handle.url())
    };
    let campaign = Arc::new(campaign);
    let summary = executor::run(campaign.pending_samples(), &exec_config, campaign.clone()).await?;
    print_summary(&summary);
    handle.shutdown().await;

    let records = campaign.load_results();
    let design = SaltelliDesign {
        base_count,
        varied_names: varied,
    };
    let result = analysis::sobol_indices(&design, &records, 100)?;
    print!("{}", render_sobol_table(&result));
    std::fs::write(dir.join("sobol.csv"), sobol_csv(&result))?;
    std::fs::write(dir.join("report.svg"), sobol_report_svg(&result))?;

    let events = executor::load_events(&dir.join(EVENTS_FILE))?;
    let provider = load_worker_events(&dir.join(WORKER_EVENTS_FILE))?;
    metrics::write_report(
        dir,
        &events,
        Some(&provider),
        &campaign.records(),
        DEFAULT_TICK_MS,
    )?;
    println!("report bundle written to {}", dir.display());

    Ok(if summary.failed > 0 { 1 } else { 0 })
}
