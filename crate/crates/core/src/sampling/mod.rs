//! Sample generation: Sobol sequences, Saltelli matrices, Monte Carlo,
//! tensor-grid stochastic collocation, and local perturbation designs.
//!
//! Everything here is a pure function over immutable inputs and safe to call
//! from any number of concurrent tasks.

mod designs;
mod quadrature;
mod sobol;
mod sobol_table;
mod transform;

pub use designs::{
    monte_carlo, perturbation_design, saltelli_design, PerturbationDesign, SaltelliDesign, Slot,
};
pub use quadrature::{
    distribution_rule, gauss_hermite_prob, gauss_legendre, stochastic_collocation, QuadratureDesign,
};
pub use sobol::{sobol_points, SobolSequence};
pub use transform::{inverse_normal_cdf, normal_cdf, transform_point};

use thiserror::Error;

use crate::campaign::ParameterSpec;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("dimension {dim} unsupported: direction-number table covers 1..={max}")]
    UnsupportedDimension { dim: usize, max: usize },
    #[error("point has {point} coordinates but {specs} parameter specs were given")]
    DimensionMismatch { point: usize, specs: usize },
    #[error("unit sample {0} outside [0, 1)")]
    UnitSampleOutOfRange(f64),
    #[error("no varied parameters selected")]
    EmptyVariedSet,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate varied parameter `{0}`")]
    DuplicateVaried(String),
    #[error("sample count must be positive, got {0}")]
    InvalidCount(u64),
    #[error("quadrature order must be >= 1, got {0}")]
    InvalidOrder(u32),
    #[error("perturbation step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

/// Resolves varied-parameter names against the parameter specs, preserving
/// the requested order.
pub(crate) fn resolve_varied<'a>(
    specs: &'a [ParameterSpec],
    varied_names: &[String],
) -> Result<Vec<&'a ParameterSpec>, SamplingError> {
    if varied_names.is_empty() {
        return Err(SamplingError::EmptyVariedSet);
    }
    let mut seen = std::collections::HashSet::new();
    varied_names
        .iter()
        .map(|name| {
            if !seen.insert(name.as_str()) {
                return Err(SamplingError::DuplicateVaried(name.clone()));
            }
            specs
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| SamplingError::UnknownParameter(name.clone()))
        })
        .collect()
}
