//! Planted AND-OR labelling functions and datasets that realize them.
//!
//! Each variable is either present or absent. A present variable has feature
//! value `±(1 + u)` and an absent one `±u`, with `u ~ U[0, 0.1)` and a random
//! sign, so the per-feature mean (the masking baseline) sits at zero, i.e. in
//! the absent state. Samples are emitted in sign-mirrored pairs, which makes
//! the empirical mean exactly zero. The label is drawn from
//! `sigmoid(planted_score(presence) + noise)`, so the log-odds of a perfect
//! model equal the planted score.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Role, Sample};
use crate::error::{Error, Result};
use crate::interaction::Kind;
use crate::masking::{MaskedOutputTable, Scorer};
use crate::subset::{check_n, full_bits};

/// Distance between the absent and present feature magnitudes.
pub const PRESENCE_OFFSET: f64 = 1.0;
const JITTER: f64 = 0.1;
const PRESENCE_PROB: f64 = 0.5;
pub const MIN_COEFFICIENT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub mask: u32,
    pub kind: Kind,
    pub coefficient: f64,
}

impl PlantedTerm {
    pub fn triggered(&self, present: u32) -> bool {
        match self.kind {
            Kind::And => present & self.mask == self.mask,
            Kind::Or => present & self.mask != 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub planted: Vec<PlantedTerm>,
    pub bias: f64,
    pub noise_std: f64,
    pub num_train: usize,
    pub num_test: usize,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        check_n(self.n)?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("planted task needs at least one variable".into()));
        }
        for t in &self.planted {
            if t.mask == 0 || t.mask as usize > full_bits(self.n) {
                return Err(Error::InvalidArgument(format!("planted mask {:#b} out of range", t.mask)));
            }
            if !(t.coefficient.abs() >= MIN_COEFFICIENT && t.coefficient.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "planted coefficient {} below {MIN_COEFFICIENT} in magnitude",
                    t.coefficient
                )));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite() && self.bias.is_finite()) {
            return Err(Error::InvalidArgument("noise_std and bias must be finite, noise_std ≥ 0".into()));
        }
        if self.num_train == 0 || self.num_test == 0 {
            return Err(Error::InvalidArgument("num_train and num_test must be positive".into()));
        }
        Ok(())
    }

    /// Draws `k` distinct planted subsets of order 2..=min(4, n) (order 1 when
    /// n = 1; a singleton AND term is indistinguishable from the singleton OR
    /// term, so singletons would make recovery ambiguous) with kinds
    /// picked uniformly from `kinds` and coefficients `±U[0.5, 2]`. The bias
    /// centres the score over presence patterns so the classes are balanced.
    pub fn random(n: usize, k: usize, kinds: &[Kind], seed: u64) -> Result<Self> {
        check_n(n)?;
        if n == 0 || kinds.is_empty() {
            return Err(Error::InvalidArgument("need n ≥ 1 and at least one kind".into()));
        }
        let max_order = n.min(4);
        let min_order = n.min(2);
        let mut candidates: Vec<u32> = (1..=full_bits(n) as u32)
            .filter(|m| (min_order..=max_order).contains(&(m.count_ones() as usize)))
            .collect();
        if k > candidates.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot plant {k} distinct subsets of order {min_order}..={max_order} over {n} variables"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        candidates.shuffle(&mut rng);
        let planted = candidates[..k]
            .iter()
            .map(|&mask| {
                let kind = kinds[rng.random_range(0..kinds.len())];
                let magnitude = rng.random_range(MIN_COEFFICIENT..=2.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                PlantedTerm {
                    mask,
                    kind,
                    coefficient: sign * magnitude,
                }
            })
            .collect();
        let mut spec = PlantedSpec {
            n,
            planted,
            bias: 0.0,
            noise_std: 0.0,
            num_train: 2000,
            num_test: 1000,
            seed,
        };
        let mean = (0..=full_bits(n) as u32).map(|p| planted_score(&spec, p)).sum::<f64>() / (1u64 << n) as f64;
        spec.bias = -mean;
        Ok(spec)
    }
}

/// Bias plus the coefficients of every triggered planted term.
pub fn planted_score(spec: &PlantedSpec, present: u32) -> f64 {
    spec.bias
        + spec
            .planted
            .iter()
            .filter(|t| t.triggered(present))
            .map(|t| t.coefficient)
            .sum::<f64>()
}

/// The planted score over every presence pattern, as a masked output table.
pub fn planted_table(spec: &PlantedSpec, sample_id: impl Into<String>) -> Result<MaskedOutputTable> {
    spec.validate()?;
    let values = (0..=full_bits(spec.n) as u32).map(|p| planted_score(spec, p)).collect();
    MaskedOutputTable::from_values(values, 1, sample_id)
}

/// The Bayes-optimal scorer: reads presence off the feature magnitudes.
#[derive(Debug, Clone)]
pub struct PlantedScorer<'a>(pub &'a PlantedSpec);

pub fn presence_pattern(x: &[f64]) -> u32 {
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= 0.5 * PRESENCE_OFFSET)
        .fold(0, |acc, (i, _)| acc | (1 << i))
}

impl Scorer for PlantedScorer<'_> {
    fn input_dim(&self) -> usize {
        self.0.n
    }

    fn score(&self, x: &[f64], label: usize) -> Result<f64> {
        if x.len() != self.0.n {
            return Err(Error::DimensionMismatch {
                expected: self.0.n,
                got: x.len(),
            });
        }
        let s = planted_score(self.0, presence_pattern(x));
        match label {
            1 => Ok(s),
            0 => Ok(-s),
            _ => Err(Error::InvalidLabel { label, num_classes: 2 }),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn gen_split(spec: &PlantedSpec, count: usize, stream: u64, role: Role) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let label_for = |rng: &mut ChaCha8Rng, present: u32| -> usize {
        let z = planted_score(spec, present) + if spec.noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
        rng.random_bool(sigmoid(z)) as usize
    };
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        let mut present = 0u32;
        let x: Vec<f64> = (0..spec.n)
            .map(|i| {
                let on = rng.random_bool(PRESENCE_PROB);
                if on {
                    present |= 1 << i;
                }
                let magnitude = if on { PRESENCE_OFFSET } else { 0.0 } + rng.random_range(0.0..JITTER);
                if rng.random_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let label = label_for(&mut rng, present);
        let mirrored: Vec<f64> = x.iter().map(|v| -v).collect();
        samples.push(Sample { x, label });
        if samples.len() < count {
            let label = label_for(&mut rng, present);
            samples.push(Sample { x: mirrored, label });
        }
    }
    Dataset::new(samples, role)
}

/// Generates the train and test splits from independent random streams.
pub fn gen_dataset(spec: &PlantedSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    Ok((
        gen_split(spec, spec.num_train, 1, Role::Train)?,
        gen_split(spec, spec.num_test, 2, Role::Test)?,
    ))
}
