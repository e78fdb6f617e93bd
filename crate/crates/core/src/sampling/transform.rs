//! Inverse-CDF mapping from the unit cube to parameter space.

use crate::campaign::{Distribution, ParameterSpec};

use super::SamplingError;

/// Maps a point of the unit cube onto the varied parameters: uniform by
/// affine stretch, normal via the inverse CDF (absolute accuracy well below
/// 1e-9 over (0, 1)).
pub fn transform_point(u: &[f64], specs: &[&ParameterSpec]) -> Result<Vec<f64>, SamplingError> {
    if u.len() != specs.len() {
        return Err(SamplingError::DimensionMismatch {
            point: u.len(),
            specs: specs.len(),
        });
    }
    u.iter()
        .zip(specs)
        .map(|(&ui, spec)| {
            if !(0.0..1.0).contains(&ui) {
                return Err(SamplingError::UnitSampleOutOfRange(ui));
            }
            Ok(match spec.distribution {
                Distribution::Uniform { lo, hi } => lo + ui * (hi - lo),
                Distribution::Normal { mean, stddev } => mean + stddev * inverse_normal_cdf(ui),
            })
        })
        .collect()
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: a rational approximation (Acklam) polished by
/// Newton steps against [`normal_cdf`]. `p = 0` and `p = 1` map to the
/// corresponding infinities.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = acklam(p);
    for _ in 0..2 {
        let err = normal_cdf(x) - p;
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf <= f64::MIN_POSITIVE {
            break;
        }
        x -= err / pdf;
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |p: f64| {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail(p)
    } else if p > 1.0 - P_LOW {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
