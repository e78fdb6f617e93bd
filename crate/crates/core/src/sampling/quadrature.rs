//! Gauss quadrature rules and the tensor-grid stochastic-collocation design.
//!
//! Nodes and weights come from the Golub–Welsch eigendecomposition of the
//! Jacobi matrix of the orthogonal-polynomial recurrence; weights are
//! returned already normalized against the probability measure, so each
//! one-dimensional rule's weights sum to one.

use indexmap::IndexMap;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::campaign::{DesignMeta, Distribution, ParameterSpec, Sample};

use super::{resolve_varied, SamplingError};

/// Tensor-grid quadrature design: node samples are bound to run ids
/// `0..(p+1)^d` in row-major order and `weights[i]` belongs to run `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDesign {
    pub order: u32,
    pub varied_names: Vec<String>,
    pub weights: Vec<f64>,
}

impl QuadratureDesign {
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn meta(&self) -> DesignMeta {
        DesignMeta::StochasticCollocation {
            order: self.order,
            varied_names: self.varied_names.clone(),
        }
    }
}

/// Nodes and normalized weights of an `n`-point rule for one distribution.
/// Uniform maps Gauss–Legendre onto `[lo, hi]`; Normal scales probabilists'
/// Gauss–Hermite by the standard deviation.
pub fn distribution_rule(distribution: &Distribution, n: usize) -> (Vec<f64>, Vec<f64>) {
    match *distribution {
        Distribution::Uniform { lo, hi } => {
            let (t, w) = gauss_legendre(n);
            let nodes = t
                .iter()
                .map(|&t| lo + 0.5 * (t + 1.0) * (hi - lo))
                .collect();
            (nodes, w)
        }
        Distribution::Normal { mean, stddev } => {
            let (t, w) = gauss_hermite_prob(n);
            let nodes = t.iter().map(|&t| mean + stddev * t).collect();
            (nodes, w)
        }
    }
}

/// Builds the `(order + 1)^d` tensor design over the varied parameters;
/// fixed parameters sit at their defaults in every node sample.
pub fn stochastic_collocation(
    specs: &[ParameterSpec],
    varied_names: &[String],
    order: u32,
) -> Result<(Vec<Sample>, QuadratureDesign), SamplingError> {
    if order == 0 {
        return Err(SamplingError::InvalidOrder(order));
    }
    let varied = resolve_varied(specs, varied_names)?;
    let n_per_dim = order as usize + 1;
    let rules: Vec<(Vec<f64>, Vec<f64>)> = varied
        .iter()
        .map(|spec| distribution_rule(&spec.distribution, n_per_dim))
        .collect();

    let d = varied.len();
    let total = n_per_dim.pow(d as u32);
    let mut samples = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for lin in 0..total {
        let mut rem = lin;
        let mut values = vec![0.0; d];
        let mut weight = 1.0;
        // Row-major: the last varied dimension cycles fastest.
        for k in (0..d).rev() {
            let idx = rem % n_per_dim;
            rem /= n_per_dim;
            values[k] = rules[k].0[idx];
            weight *= rules[k].1[idx];
        }
        weights.push(weight);
        samples.push(build_sample(lin as u64, specs, varied_names, &values));
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok((
        samples,
        QuadratureDesign {
            order,
            varied_names: varied_names.to_vec(),
            weights,
        },
    ))
}

pub(super) fn build_sample(
    run_id: u64,
    specs: &[ParameterSpec],
    varied_names: &[String],
    varied_values: &[f64],
) -> Sample {
    let mut inputs = IndexMap::with_capacity(specs.len());
    for spec in specs {
        let value = match varied_names.iter().position(|n| n == &spec.name) {
            Some(k) => varied_values[k],
            None => spec.default,
        };
        inputs.insert(spec.name.clone(), value);
    }
    Sample { run_id, inputs }
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]` with weights normalized to
/// sum 1 (i.e. against the uniform density).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(n, |k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    })
}

/// `n`-point probabilists' Gauss–Hermite rule (weight `exp(-x^2/2)`),
/// weights normalized to sum 1.
pub fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(n, |k| (k as f64).sqrt())
}

/// Eigendecomposition of the symmetric tridiagonal Jacobi matrix with zero
/// diagonal and off-diagonal `beta(k)`, `k = 1..n-1`. Nodes are eigenvalues,
/// normalized weights the squared first eigenvector components.
fn golub_welsch(n: usize, beta: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = beta(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eigen = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eigen.eigenvalues[i];
            let w = eigen.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sum: f64 = pairs.iter().map(|p| p.1).sum();
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / sum).collect(),
    )
}
