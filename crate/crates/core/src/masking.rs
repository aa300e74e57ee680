//! Baseline values, masked inputs and the full table of masked output scores.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::subset::{check_n, SubsetMask};

/// Anything that maps an input vector and a class to a scalar score.
pub trait Scorer: Sync {
    fn input_dim(&self) -> usize;
    fn score(&self, x: &[f64], label: usize) -> Result<f64>;
}

impl Scorer for Model {
    fn input_dim(&self) -> usize {
        Model::input_dim(self)
    }

    fn score(&self, x: &[f64], label: usize) -> Result<f64> {
        Model::score(self, x, label)
    }
}

/// Per-variable value substituted for masked variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineVector {
    pub values: Vec<f64>,
}

impl BaselineVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("baseline value".into()));
        }
        Ok(BaselineVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-coordinate mean over all samples.
pub fn compute_baseline(data: &Dataset) -> Result<BaselineVector> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sums = vec![0.0; data.input_dim()];
    for s in data.samples() {
        for (acc, v) in sums.iter_mut().zip(&s.x) {
            *acc += v;
        }
    }
    let count = data.len() as f64;
    BaselineVector::new(sums.into_iter().map(|s| s / count).collect())
}

/// Keeps `x[i]` for variables in `subset`, substitutes the baseline elsewhere.
pub fn mask_input(x: &[f64], subset: SubsetMask, baseline: &BaselineVector) -> Result<Vec<f64>> {
    if x.len() != baseline.len() || x.len() != subset.n() {
        return Err(Error::DimensionMismatch {
            expected: baseline.len(),
            got: x.len(),
        });
    }
    Ok(fill_masked(x, subset.bits(), baseline))
}

fn fill_masked(x: &[f64], bits: u32, baseline: &BaselineVector) -> Vec<f64> {
    x.iter()
        .zip(&baseline.values)
        .enumerate()
        .map(|(i, (&xi, &bi))| if bits & (1 << i) != 0 { xi } else { bi })
        .collect()
}

/// `values[S]` is the score of the input with variables outside `S` masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedOutputTable {
    pub sample_id: String,
    pub label: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl MaskedOutputTable {
    /// Wraps an explicit table, checking length and finiteness.
    pub fn from_values(values: Vec<f64>, label: usize, sample_id: impl Into<String>) -> Result<Self> {
        let n = crate::subset::log2_len(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("masked output".into()));
        }
        Ok(MaskedOutputTable {
            sample_id: sample_id.into(),
            label,
            n,
            values,
        })
    }

    /// Score with everything masked.
    pub fn empty_value(&self) -> f64 {
        self.values[0]
    }

    /// Score on the unmasked sample.
    pub fn full_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn scaled(&self, c: f64) -> Self {
        MaskedOutputTable {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

pub fn masked_output_table<S: Scorer + ?Sized>(
    scorer: &S,
    x: &[f64],
    label: usize,
    baseline: &BaselineVector,
    sample_id: impl Into<String>,
) -> Result<MaskedOutputTable> {
    let n = scorer.input_dim();
    check_n(n)?;
    if x.len() != n || baseline.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x.len() != n { x.len() } else { baseline.len() },
        });
    }
    let values = (0..1u32 << n)
        .map(|bits| scorer.score(&fill_masked(x, bits, baseline), label))
        .collect::<Result<Vec<_>>>()?;
    MaskedOutputTable::from_values(values, label, sample_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Role, Sample};
    use crate::model::{init_model, ModelSpec};

    struct Closure<F>(usize, F);

    impl<F: Fn(&[f64]) -> f64 + Sync> Scorer for Closure<F> {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn score(&self, x: &[f64], _label: usize) -> Result<f64> {
            Ok((self.1)(x))
        }
    }

    fn data(rows: &[&[f64]]) -> Dataset {
        Dataset::new(
            rows.iter().map(|r| Sample { x: r.to_vec(), label: 0 }).collect(),
            Role::Train,
        )
        .unwrap()
    }

    #[test]
    fn baseline_is_mean() {
        assert_eq!(compute_baseline(&data(&[&[0.0, 2.0], &[2.0, 4.0]])).unwrap().values, vec![1.0, 3.0]);
        assert_eq!(compute_baseline(&data(&[&[0.5, -2.0]])).unwrap().values, vec![0.5, -2.0]);
        assert_eq!(
            compute_baseline(&data(&[&[0.25, 7.0], &[0.25, 7.0], &[0.25, 7.0]])).unwrap().values,
            vec![0.25, 7.0]
        );
    }

    #[test]
    fn masking_substitutes_coordinates() {
        let x = [5.0, 6.0];
        let b = BaselineVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(mask_input(&x, SubsetMask::full(2).unwrap(), &b).unwrap(), x.to_vec());
        assert_eq!(mask_input(&x, SubsetMask::empty(2).unwrap(), &b).unwrap(), vec![0.0, 0.0]);
        let s1 = SubsetMask::from_variables(&[1], 2).unwrap();
        assert_eq!(mask_input(&x, s1, &b).unwrap(), vec![5.0, 0.0]);
        assert!(mask_input(&[1.0], s1, &b).is_err());
    }

    #[test]
    fn hand_built_table() {
        // linear-plus-product scorer evaluated at x = (1, 1) against a zero baseline
        let f = Closure(2, |x: &[f64]| x[0] + x[1] + x[0] * x[1]);
        let b = BaselineVector::new(vec![0.0, 0.0]).unwrap();
        let t = masked_output_table(&f, &[1.0, 1.0], 0, &b, "s").unwrap();
        assert_eq!(t.values, vec![0.0, 1.0, 1.0, 3.0]);
    }

    #[test]
    fn constant_scorer_gives_constant_table() {
        let f = Closure(5, |_: &[f64]| -1.25);
        let b = BaselineVector::new(vec![0.0; 5]).unwrap();
        let t = masked_output_table(&f, &[1.0; 5], 0, &b, "c").unwrap();
        assert!(t.values.iter().all(|&v| v == -1.25));
        assert_eq!(t.values.len(), 32);
    }

    #[test]
    fn model_table_endpoints() {
        let m = init_model(&ModelSpec::new(2, vec![4], 2, 1)).unwrap();
        let b = BaselineVector::new(vec![0.1, -0.3]).unwrap();
        let x = [1.0, 2.0];
        let t = masked_output_table(&m, &x, 1, &b, "m").unwrap();
        assert_eq!(t.values.len(), 4);
        assert_eq!(t.empty_value(), m.score(&b.values, 1).unwrap());
        assert_eq!(t.full_value(), m.score(&x, 1).unwrap());
        assert_eq!(t, masked_output_table(&m, &x, 1, &b, "m").unwrap());
    }

    #[test]
    fn permuting_variables_relabels_the_table() {
        let f = Closure(3, |x: &[f64]| x[0] * 2.0 + x[1] * x[2] - x[0] * x[2]);
        let g = Closure(3, |x: &[f64]| x[2] * 2.0 + x[0] * x[1] - x[2] * x[1]); // g(x) = f(x[2], x[0], x[1])
        let b = BaselineVector::new(vec![0.5, -0.5, 0.25]).unwrap();
        let bg = BaselineVector::new(vec![-0.5, 0.25, 0.5]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let xg = [2.0, 3.0, 1.0];
        let tf = masked_output_table(&f, &x, 0, &b, "f").unwrap();
        let tg = masked_output_table(&g, &xg, 0, &bg, "g").unwrap();
        // variable i of f sits at position perm[i] in g
        let perm = [2usize, 0, 1];
        for s in 0..8usize {
            let mut t = 0usize;
            for (i, &p) in perm.iter().enumerate() {
                if s & (1 << i) != 0 {
                    t |= 1 << p;
                }
            }
            assert!((tf.values[s] - tg.values[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_is_enforced() {
        let f = Closure(17, |_: &[f64]| 0.0);
        let b = BaselineVector::new(vec![0.0; 17]).unwrap();
        assert!(matches!(
            masked_output_table(&f, &[0.0; 17], 0, &b, "big"),
            Err(Error::TooManyVariables { n: 17, .. })
        ));
    }
}
