//! Sample designs: the Saltelli A/B/AB matrices, plain Monte Carlo, and
//! one-at-a-time perturbation layouts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::campaign::{DesignMeta, ParameterSpec, Sample};

use super::quadrature::build_sample;
use super::sobol::SobolSequence;
use super::transform::transform_point;
use super::{resolve_varied, SamplingError};

/// Slot of a run inside a Saltelli design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Row `j` of the A matrix.
    A(u64),
    /// Row `j` of the B matrix.
    B(u64),
    /// Row `j` of A with coordinate `coord` taken from B.
    Ab { coord: usize, j: u64 },
}

/// Radial Saltelli layout: `N` rows each of A and B plus `N` rows per varied
/// coordinate, `N (d + 2)` runs in total. Run ids are dense: block 0 is A,
/// block 1 is B, block `2 + i` is `AB^(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliDesign {
    pub base_count: u64,
    pub varied_names: Vec<String>,
}

impl SaltelliDesign {
    pub fn dimension(&self) -> usize {
        self.varied_names.len()
    }

    pub fn total_runs(&self) -> u64 {
        self.base_count * (self.dimension() as u64 + 2)
    }

    pub fn slot(&self, run_id: u64) -> Option<Slot> {
        if run_id >= self.total_runs() {
            return None;
        }
        let block = run_id / self.base_count;
        let j = run_id % self.base_count;
        Some(match block {
            0 => Slot::A(j),
            1 => Slot::B(j),
            i => Slot::Ab {
                coord: (i - 2) as usize,
                j,
            },
        })
    }

    pub fn run_id_of(&self, slot: Slot) -> u64 {
        match slot {
            Slot::A(j) => j,
            Slot::B(j) => self.base_count + j,
            Slot::Ab { coord, j } => self.base_count * (2 + coord as u64) + j,
        }
    }

    pub fn meta(&self) -> DesignMeta {
        DesignMeta::Saltelli {
            base_count: self.base_count,
            varied_names: self.varied_names.clone(),
        }
    }
}

/// Generates the Saltelli evaluation matrices from a `2d`-dimensional Sobol
/// sequence: A from dimensions `[0, d)`, B from `[d, 2d)`, skipping the
/// all-zeros first point. `base_count` should be a power of two for QMC
/// balance; other values are accepted but flagged by
/// [`SaltelliDesign::base_count`] not being one.
pub fn saltelli_design(
    specs: &[ParameterSpec],
    varied_names: &[String],
    base_count: u64,
) -> Result<(Vec<Sample>, SaltelliDesign), SamplingError> {
    let varied = resolve_varied(specs, varied_names)?;
    let d = varied.len();
    if base_count == 0 {
        return Err(SamplingError::InvalidCount(0));
    }
    let mut seq = SobolSequence::new(2 * d)?;
    seq.seek(1);

    let mut a_rows = Vec::with_capacity(base_count as usize);
    let mut b_rows = Vec::with_capacity(base_count as usize);
    for _ in 0..base_count {
        let u = seq.next_point();
        a_rows.push(transform_point(&u[..d], &varied)?);
        b_rows.push(transform_point(&u[d..], &varied)?);
    }

    let design = SaltelliDesign {
        base_count,
        varied_names: varied_names.to_vec(),
    };
    let mut samples = Vec::with_capacity(design.total_runs() as usize);
    for row in &a_rows {
        samples.push(build_sample(samples.len() as u64, specs, varied_names, row));
    }
    for row in &b_rows {
        samples.push(build_sample(samples.len() as u64, specs, varied_names, row));
    }
    for coord in 0..d {
        for j in 0..base_count as usize {
            let mut row = a_rows[j].clone();
            row[coord] = b_rows[j][coord];
            samples.push(build_sample(
                samples.len() as u64,
                specs,
                varied_names,
                &row,
            ));
        }
    }
    Ok((samples, design))
}

/// `count` i.i.d. draws from the parameter distributions, deterministic under
/// `seed` (inverse-CDF transform of a seeded uniform stream).
pub fn monte_carlo(
    specs: &[ParameterSpec],
    varied_names: &[String],
    count: u64,
    seed: u64,
) -> Result<(Vec<Sample>, DesignMeta), SamplingError> {
    let varied = resolve_varied(specs, varied_names)?;
    if count == 0 {
        return Err(SamplingError::InvalidCount(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count as usize);
    for run_id in 0..count {
        let u: Vec<f64> = (0..varied.len()).map(|_| rng.random::<f64>()).collect();
        let values = transform_point(&u, &varied)?;
        samples.push(build_sample(run_id, specs, varied_names, &values));
    }
    Ok((
        samples,
        DesignMeta::MonteCarlo {
            count,
            seed,
            varied_names: varied_names.to_vec(),
        },
    ))
}

/// One-at-a-time layout around a reference point: run 0 is the center, runs
/// `1 + 2i` / `2 + 2i` perturb coordinate `i` by `+step_i` / `-step_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDesign {
    pub varied_names: Vec<String>,
    pub steps: Vec<f64>,
}

impl PerturbationDesign {
    pub fn total_runs(&self) -> u64 {
        2 * self.varied_names.len() as u64 + 1
    }

    pub fn center_id(&self) -> u64 {
        0
    }

    pub fn plus_id(&self, coord: usize) -> u64 {
        1 + 2 * coord as u64
    }

    pub fn minus_id(&self, coord: usize) -> u64 {
        2 + 2 * coord as u64
    }

    pub fn meta(&self) -> DesignMeta {
        DesignMeta::Perturbation {
            varied_names: self.varied_names.clone(),
            steps: self.steps.clone(),
        }
    }
}

/// Builds the `2d + 1` perturbation samples. Steps are relative to the
/// reference coordinate (`|x| * rel_step`), falling back to an absolute step
/// of `rel_step` where the reference coordinate is zero.
pub fn perturbation_design(
    specs: &[ParameterSpec],
    reference: &Sample,
    varied_names: &[String],
    rel_step: f64,
) -> Result<(Vec<Sample>, PerturbationDesign), SamplingError> {
    let varied = resolve_varied(specs, varied_names)?;
    if rel_step <= 0.0 || !rel_step.is_finite() {
        return Err(SamplingError::InvalidStep(rel_step));
    }
    let center: Vec<f64> = varied
        .iter()
        .map(|spec| {
            reference
                .inputs
                .get(&spec.name)
                .copied()
                .ok_or_else(|| SamplingError::UnknownParameter(spec.name.clone()))
        })
        .collect::<Result<_, _>>()?;
    let steps: Vec<f64> = center
        .iter()
        .map(|&x| {
            if x != 0.0 {
                x.abs() * rel_step
            } else {
                rel_step
            }
        })
        .collect();

    let design = PerturbationDesign {
        varied_names: varied_names.to_vec(),
        steps: steps.clone(),
    };
    let mut samples = Vec::with_capacity(design.total_runs() as usize);
    samples.push(build_sample(0, specs, varied_names, &center));
    for (coord, &step) in steps.iter().enumerate() {
        let mut plus = center.clone();
        plus[coord] += step;
        samples.push(build_sample(
            design.plus_id(coord),
            specs,
            varied_names,
            &plus,
        ));
        let mut minus = center.clone();
        minus[coord] -= step;
        samples.push(build_sample(
            design.minus_id(coord),
            specs,
            varied_names,
            &minus,
        ));
    }
    Ok((samples, design))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::Distribution;
    use proptest::prelude::*;

    fn uniform_specs(names: &[&str]) -> Vec<ParameterSpec> {
        names
            .iter()
            .map(|n| {
                ParameterSpec::new(
                    *n,
                    Distribution::Uniform {
                        lo: -std::f64::consts::PI,
                        hi: std::f64::consts::PI,
                    },
                    0.0,
                )
            })
            .collect()
    }

    fn names(specs: &[ParameterSpec]) -> Vec<String> {
        specs.iter().map(|s| s.name.clone()).collect()
    }

    #[test]
    fn saltelli_counts() {
        let specs = uniform_specs(&["x1", "x2", "x3"]);
        let varied = names(&specs);
        let (samples, design) = saltelli_design(&specs, &varied, 8).unwrap();
        assert_eq!(samples.len(), 40);
        assert_eq!(design.total_runs(), 40);
    }

    #[test]
    fn saltelli_ab_rows_follow_layout_invariant() {
        let specs = uniform_specs(&["x1", "x2", "x3"]);
        let varied = names(&specs);
        let n = 1024u64;
        let (samples, design) = saltelli_design(&specs, &varied, n).unwrap();
        assert_eq!(samples.len(), 5120);
        for j in 0..n {
            let a = &samples[design.run_id_of(Slot::A(j)) as usize];
            let b = &samples[design.run_id_of(Slot::B(j)) as usize];
            let ab1 = &samples[design.run_id_of(Slot::Ab { coord: 1, j }) as usize];
            assert_eq!(ab1.inputs["x1"], a.inputs["x1"]);
            assert_eq!(ab1.inputs["x2"], b.inputs["x2"]);
            assert_eq!(ab1.inputs["x3"], a.inputs["x3"]);
        }
    }

    #[test]
    fn saltelli_requires_varied_parameters() {
        let specs = uniform_specs(&["x1"]);
        assert!(matches!(
            saltelli_design(&specs, &[], 8),
            Err(SamplingError::EmptyVariedSet)
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic_and_centred() {
        let specs = vec![ParameterSpec::new(
            "x",
            Distribution::Uniform { lo: -1.0, hi: 1.0 },
            0.0,
        )];
        let varied = names(&specs);
        let (a, _) = monte_carlo(&specs, &varied, 100, 42).unwrap();
        let (b, _) = monte_carlo(&specs, &varied, 100, 42).unwrap();
        assert_eq!(a, b);

        assert!(matches!(
            monte_carlo(&specs, &varied, 0, 42),
            Err(SamplingError::InvalidCount(0))
        ));

        // Law of large numbers: N = 1e5 puts the mean within 0.01 of zero.
        let (big, _) = monte_carlo(&specs, &varied, 100_000, 7).unwrap();
        let mean: f64 = big.iter().map(|s| s.inputs["x"]).sum::<f64>() / big.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn perturbation_layout() {
        let specs = uniform_specs(&["x1", "x2", "x3"]);
        let varied = names(&specs);
        let reference = build_sample(0, &specs, &varied, &[2.0, 1.0, -1.0]);
        let (samples, design) = perturbation_design(&specs, &reference, &varied, 0.01).unwrap();
        assert_eq!(samples.len(), 7);
        let center = &samples[design.center_id() as usize];
        let plus0 = &samples[design.plus_id(0) as usize];
        assert!((plus0.inputs["x1"] - 2.02).abs() < 1e-12);
        assert_eq!(plus0.inputs["x2"], center.inputs["x2"]);
        assert_eq!(plus0.inputs["x3"], center.inputs["x3"]);
        let minus2 = &samples[design.minus_id(2) as usize];
        assert!((minus2.inputs["x3"] - -1.01).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn saltelli_slot_roundtrip(n in 1u64..=4096, d in 1usize..=16, probe in 0u64..) {
            let design = SaltelliDesign {
                base_count: n,
                varied_names: (0..d).map(|i| format!("p{i}")).collect(),
            };
            let run_id = probe % design.total_runs();
            let slot = design.slot(run_id).unwrap();
            prop_assert_eq!(design.run_id_of(slot), run_id);
            prop_assert_eq!(design.slot(design.total_runs()), None);
        }
    }
}
