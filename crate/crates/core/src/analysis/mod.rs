//! Turns collected outputs into sensitivity measures: variance-based Sobol
//! indices from a Saltelli design, derivative-based local indices from a
//! perturbation design, and quadrature moments from a collocation design.
//!
//! Records are matched to estimator slots by `run_id`, never by position, so
//! any ordering of the completed records yields the same result.

mod tables;

pub use tables::{local_csv, moments_csv, render_sobol_table, sobol_csv, sobol_report_svg};

use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{RunRecord, RunState};
use crate::sampling::{PerturbationDesign, QuadratureDesign, SaltelliDesign, Slot};

/// Fixed seed of the bootstrap resampling stream, so confidence intervals
/// are reproducible run to run.
const BOOTSTRAP_SEED: u64 = 0x0b0075;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("design run {0} is missing or not completed")]
    MissingRun(u64),
    #[error("run {run_id} has no output named `{output}`")]
    MissingOutput { run_id: u64, output: String },
    #[error("no completed records")]
    NoData,
}

/// First-order and total indices for one parameter, with bootstrap 95%
/// confidence half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSobol {
    pub name: String,
    pub s_first: f64,
    pub s_first_ci: f64,
    pub s_total: f64,
    pub s_total_ci: f64,
}

/// Sobol indices of one output; `zero_variance` flags the degenerate case
/// (all outputs equal) in which the indices are undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSobol {
    pub output: String,
    pub variance: f64,
    pub zero_variance: bool,
    pub params: Vec<ParamSobol>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub base_count: u64,
    pub outputs: Vec<OutputSobol>,
}

/// Estimates first-order and total Sobol indices from a completed Saltelli
/// design with the Saltelli/Jansen estimators:
///
/// * `S_i  = mean_j( f(B)_j (f(AB_i)_j - f(A)_j) ) / V`
/// * `ST_i = mean_j( (f(A)_j - f(AB_i)_j)^2 ) / (2 V)`
///
/// where `V` is the unbiased variance of the pooled `A ∪ B` evaluations.
/// Confidence intervals come from `bootstrap_n` resamples of the row index.
pub fn sobol_indices(
    design: &SaltelliDesign,
    records: &[RunRecord],
    bootstrap_n: usize,
) -> Result<SobolResult, AnalysisError> {
    let by_id = index_completed(records);
    let n = design.base_count;
    let d = design.dimension();
    let output_names = output_names(records)?;

    let mut outputs = Vec::with_capacity(output_names.len());
    for name in &output_names {
        let fetch = |slot: Slot| -> Result<f64, AnalysisError> {
            let run_id = design.run_id_of(slot);
            let record = by_id
                .get(&run_id)
                .ok_or(AnalysisError::MissingRun(run_id))?;
            record
                .outputs
                .as_ref()
                .and_then(|o| o.get(name.as_str()))
                .copied()
                .ok_or_else(|| AnalysisError::MissingOutput {
                    run_id,
                    output: name.clone(),
                })
        };
        let fa: Vec<f64> = (0..n)
            .map(|j| fetch(Slot::A(j)))
            .collect::<Result<_, _>>()?;
        let fb: Vec<f64> = (0..n)
            .map(|j| fetch(Slot::B(j)))
            .collect::<Result<_, _>>()?;
        let mut fab = Vec::with_capacity(d);
        for coord in 0..d {
            fab.push(
                (0..n)
                    .map(|j| fetch(Slot::Ab { coord, j }))
                    .collect::<Result<Vec<f64>, _>>()?,
            );
        }

        let variance = pooled_variance(&fa, &fb);
        if variance <= 0.0 {
            outputs.push(OutputSobol {
                output: name.clone(),
                variance: 0.0,
                zero_variance: true,
                params: design
                    .varied_names
                    .iter()
                    .map(|p| ParamSobol {
                        name: p.clone(),
                        s_first: 0.0,
                        s_first_ci: 0.0,
                        s_total: 0.0,
                        s_total_ci: 0.0,
                    })
                    .collect(),
            });
            continue;
        }

        let point = estimate(&fa, &fb, &fab);
        let cis = bootstrap_cis(&fa, &fb, &fab, bootstrap_n);
        let params = design
            .varied_names
            .iter()
            .enumerate()
            .map(|(i, p)| ParamSobol {
                name: p.clone(),
                s_first: point[i].0,
                s_first_ci: cis[i].0,
                s_total: point[i].1,
                s_total_ci: cis[i].1,
            })
            .collect();
        outputs.push(OutputSobol {
            output: name.clone(),
            variance,
            zero_variance: false,
            params,
        });
    }
    Ok(SobolResult {
        base_count: n,
        outputs,
    })
}

fn index_completed(records: &[RunRecord]) -> IndexMap<u64, &RunRecord> {
    records
        .iter()
        .filter(|r| r.state == RunState::Completed)
        .map(|r| (r.run_id, r))
        .collect()
}

fn output_names(records: &[RunRecord]) -> Result<Vec<String>, AnalysisError> {
    records
        .iter()
        .find(|r| r.state == RunState::Completed)
        .and_then(|r| r.outputs.as_ref())
        .map(|o| o.keys().cloned().collect())
        .ok_or(AnalysisError::NoData)
}

/// Unbiased variance of the pooled A and B evaluations (divisor `2N - 1`).
fn pooled_variance(fa: &[f64], fb: &[f64]) -> f64 {
    let n2 = (fa.len() + fb.len()) as f64;
    let mean = (fa.iter().sum::<f64>() + fb.iter().sum::<f64>()) / n2;
    let ss: f64 = fa.iter().chain(fb.iter()).map(|x| (x - mean).powi(2)).sum();
    ss / (n2 - 1.0)
}

fn estimate(fa: &[f64], fb: &[f64], fab: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = fa.len() as f64;
    let variance = pooled_variance(fa, fb);
    fab.iter()
        .map(|fab_i| {
            let mut first = 0.0;
            let mut total = 0.0;
            for j in 0..fa.len() {
                first += fb[j] * (fab_i[j] - fa[j]);
                total += (fa[j] - fab_i[j]).powi(2);
            }
            (first / n / variance, total / (2.0 * n) / variance)
        })
        .collect()
}

/// Percentile-bootstrap 95% half-widths over resampled row indices.
fn bootstrap_cis(fa: &[f64], fb: &[f64], fab: &[Vec<f64>], bootstrap_n: usize) -> Vec<(f64, f64)> {
    let d = fab.len();
    if bootstrap_n == 0 {
        return vec![(0.0, 0.0); d];
    }
    let n = fa.len();
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let mut s_reps = vec![Vec::with_capacity(bootstrap_n); d];
    let mut st_reps = vec![Vec::with_capacity(bootstrap_n); d];
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    let mut rab = vec![vec![0.0; n]; d];
    for _ in 0..bootstrap_n {
        for j in 0..n {
            let pick = rng.random_range(0..n);
            ra[j] = fa[pick];
            rb[j] = fb[pick];
            for i in 0..d {
                rab[i][j] = fab[i][pick];
            }
        }
        if pooled_variance(&ra, &rb) <= 0.0 {
            continue;
        }
        for (i, (s, st)) in estimate(&ra, &rb, &rab).into_iter().enumerate() {
            s_reps[i].push(s);
            st_reps[i].push(st);
        }
    }
    (0..d)
        .map(|i| (half_width(&mut s_reps[i]), half_width(&mut st_reps[i])))
        .collect()
}

fn half_width(replicas: &mut [f64]) -> f64 {
    if replicas.is_empty() {
        return 0.0;
    }
    replicas.sort_by(f64::total_cmp);
    let hi = crate::metrics::nearest_rank(replicas, 0.975);
    let lo = crate::metrics::nearest_rank(replicas, 0.025);
    (hi - lo) / 2.0
}

/// Central-difference derivative of each output with respect to each varied
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSensitivityResult {
    pub outputs: Vec<OutputLocal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLocal {
    pub output: String,
    pub params: Vec<ParamLocal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLocal {
    pub name: String,
    pub derivative: f64,
    pub step: f64,
}

/// `S_j = (Y(plus j) - Y(minus j)) / (2 step_j)` over a completed
/// perturbation design.
pub fn local_sensitivity(
    design: &PerturbationDesign,
    records: &[RunRecord],
) -> Result<LocalSensitivityResult, AnalysisError> {
    let by_id = index_completed(records);
    let names = output_names(records)?;
    let fetch = |run_id: u64, output: &str| -> Result<f64, AnalysisError> {
        by_id
            .get(&run_id)
            .ok_or(AnalysisError::MissingRun(run_id))?
            .outputs
            .as_ref()
            .and_then(|o| o.get(output))
            .copied()
            .ok_or_else(|| AnalysisError::MissingOutput {
                run_id,
                output: output.to_string(),
            })
    };
    // The center run participates only as a layout anchor, but require it so
    // a partially completed design is reported rather than silently used.
    for run_id in 0..design.total_runs() {
        if !by_id.contains_key(&run_id) {
            return Err(AnalysisError::MissingRun(run_id));
        }
    }
    let mut outputs = Vec::with_capacity(names.len());
    for name in &names {
        let params = design
            .varied_names
            .iter()
            .zip(&design.steps)
            .enumerate()
            .map(|(coord, (p, &step))| {
                let plus = fetch(design.plus_id(coord), name)?;
                let minus = fetch(design.minus_id(coord), name)?;
                Ok(ParamLocal {
                    name: p.clone(),
                    derivative: (plus - minus) / (2.0 * step),
                    step,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        outputs.push(OutputLocal {
            output: name.clone(),
            params,
        });
    }
    Ok(LocalSensitivityResult { outputs })
}

/// Weighted mean and variance of each output over a quadrature design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub outputs: Vec<OutputMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMoments {
    pub output: String,
    pub mean: f64,
    pub variance: f64,
}

/// `mean = Σ w_i f(x_i)`, `variance = Σ w_i f(x_i)^2 - mean^2` (clamped at
/// zero against roundoff).
pub fn quadrature_moments(
    design: &QuadratureDesign,
    records: &[RunRecord],
) -> Result<MomentResult, AnalysisError> {
    let by_id = index_completed(records);
    let names = output_names(records)?;
    let mut outputs = Vec::with_capacity(names.len());
    for name in &names {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (run_id, &w) in design.weights.iter().enumerate() {
            let record = by_id
                .get(&(run_id as u64))
                .ok_or(AnalysisError::MissingRun(run_id as u64))?;
            let f = record
                .outputs
                .as_ref()
                .and_then(|o| o.get(name.as_str()))
                .copied()
                .ok_or_else(|| AnalysisError::MissingOutput {
                    run_id: run_id as u64,
                    output: name.clone(),
                })?;
            mean += w * f;
            second += w * f * f;
        }
        let variance = second - mean * mean;
        debug_assert!(variance > -1e-12, "variance {variance} below tolerance");
        outputs.push(OutputMoments {
            output: name.clone(),
            mean,
            variance: variance.max(0.0),
        });
    }
    Ok(MomentResult { outputs })
}
