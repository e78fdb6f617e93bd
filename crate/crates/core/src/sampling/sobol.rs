//! Sobol low-discrepancy sequence over a fixed direction-number table.
//!
//! Points are generated in Gray-code order with 32 fractional bits, so the
//! sequence is deterministic: the same dimension and index range always yield
//! the same points. The first point of the raw sequence is the origin; most
//! callers skip it (see [`super::designs`]).

use super::sobol_table::{JOE_KUO, MAX_DIMENSION};
use super::SamplingError;

const BITS: usize = 32;
const SCALE: f64 = 1.0 / (1u64 << BITS) as f64;

/// Streaming Sobol generator for one fixed dimensionality.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    dim: usize,
    index: u64,
    direction: Vec<[u32; BITS]>,
    state: Vec<u32>,
}

impl SobolSequence {
    /// Supported dimension bound of the shipped direction-number table.
    pub const MAX_DIM: usize = MAX_DIMENSION;

    pub fn new(dim: usize) -> Result<Self, SamplingError> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(SamplingError::UnsupportedDimension {
                dim,
                max: MAX_DIMENSION,
            });
        }
        let direction = (0..dim).map(direction_numbers).collect();
        Ok(Self {
            dim,
            index: 0,
            direction,
            state: vec![0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the next point to be emitted.
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Jumps directly to `index` using the Gray-code expansion
    /// `x_k = XOR of v_j over set bits j of k ^ (k >> 1)`.
    pub fn seek(&mut self, index: u64) {
        assert!(index < 1 << BITS, "sobol index exceeds 2^32");
        let gray = index ^ (index >> 1);
        for (d, xs) in self.state.iter_mut().enumerate() {
            let mut x = 0u32;
            for (bit, v) in self.direction[d].iter().enumerate() {
                if gray >> bit & 1 == 1 {
                    x ^= v;
                }
            }
            *xs = x;
        }
        self.index = index;
    }

    /// Emits the point at the current index and advances.
    pub fn next_point(&mut self) -> Vec<f64> {
        let point = self.state.iter().map(|&x| x as f64 * SCALE).collect();
        self.index += 1;
        let bit = self.index.trailing_zeros() as usize;
        for (d, x) in self.state.iter_mut().enumerate() {
            *x ^= self.direction[d][bit];
        }
        point
    }
}

/// `count` points of the `dim`-dimensional sequence starting at `skip`.
/// Every coordinate lies in `[0, 1)`.
pub fn sobol_points(dim: usize, count: usize, skip: u64) -> Result<Vec<Vec<f64>>, SamplingError> {
    let mut seq = SobolSequence::new(dim)?;
    seq.seek(skip);
    Ok((0..count).map(|_| seq.next_point()).collect())
}

/// Expands one table row into the 32 direction numbers of dimension `d`.
fn direction_numbers(d: usize) -> [u32; BITS] {
    let (poly, m) = JOE_KUO[d];
    let mut v = [0u32; BITS];
    let degree = (32 - poly.leading_zeros() - 1) as usize;
    if degree == 0 {
        // First dimension: van der Corput sequence in base 2.
        for (i, v) in v.iter_mut().enumerate() {
            *v = 1 << (31 - i);
        }
        return v;
    }
    for i in 0..degree.min(BITS) {
        debug_assert!(m[i] % 2 == 1 && (m[i] as u64) < (1u64 << (i + 1)));
        v[i] = m[i] << (31 - i);
    }
    for i in degree..BITS {
        let mut x = v[i - degree] ^ (v[i - degree] >> degree);
        for k in 1..degree {
            if poly >> (degree - k) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}
