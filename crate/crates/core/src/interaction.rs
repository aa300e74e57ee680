//! Exact AND-OR decomposition of a masked output table.
//!
//! With `o_and[S] = ½·v(S) + γ[S]` and `o_or[S] = ½·v(S) − γ[S]`, the AND
//! effects are the subset Möbius transform of `o_and`, the OR effects the
//! negated Möbius transform of `o_or` read through complements, and the bias is
//! `v(∅)`. The empty set carries no effect of either kind. For every γ the
//! resulting surrogate reproduces the table exactly on all 2ⁿ masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskedOutputTable;
use crate::subset::SubsetMask;
use crate::transform::{mobius_and, mobius_or};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Kind {
    And,
    Or,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::And => "AND",
            Kind::Or => "OR",
        })
    }
}

/// Per-subset split parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GammaVector(pub Vec<f64>);

impl GammaVector {
    pub fn zeros(n: usize) -> Self {
        GammaVector(vec![0.0; 1 << n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDecomposition {
    #[serde(rename = "sample_id")]
    pub source_table_id: String,
    pub n: usize,
    pub b: f64,
    pub gamma: GammaVector,
    #[serde(rename = "I_and")]
    pub i_and: Vec<f64>,
    #[serde(rename = "I_or")]
    pub i_or: Vec<f64>,
}

fn check_gamma(table: &MaskedOutputTable, gamma: &GammaVector) -> Result<()> {
    if gamma.len() != table.values.len() {
        return Err(Error::DimensionMismatch {
            expected: table.values.len(),
            got: gamma.len(),
        });
    }
    if gamma.0.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gamma".into()));
    }
    Ok(())
}

/// Splits each output into its AND and OR channel parts.
pub fn split_outputs(table: &MaskedOutputTable, gamma: &GammaVector) -> Result<(Vec<f64>, Vec<f64>)> {
    check_gamma(table, gamma)?;
    Ok(table
        .values
        .iter()
        .zip(&gamma.0)
        .map(|(&v, &g)| (0.5 * v + g, 0.5 * v - g))
        .unzip())
}

pub fn decompose(table: &MaskedOutputTable, gamma: &GammaVector) -> Result<InteractionDecomposition> {
    let (o_and, o_or) = split_outputs(table, gamma)?;
    Ok(InteractionDecomposition {
        source_table_id: table.sample_id.clone(),
        n: table.n,
        b: table.empty_value(),
        gamma: gamma.clone(),
        i_and: mobius_and(&o_and),
        i_or: mobius_or(&o_or),
    })
}

impl InteractionDecomposition {
    pub fn effects(&self, kind: Kind) -> &[f64] {
        match kind {
            Kind::And => &self.i_and,
            Kind::Or => &self.i_or,
        }
    }

    pub fn effect(&self, kind: Kind, mask: SubsetMask) -> f64 {
        self.effects(kind)[mask.index()]
    }

    /// `Σ_{T≠∅} |I_and[T]| + Σ_{T≠∅} |I_or[T]|`.
    pub fn l1_norm(&self) -> f64 {
        self.i_and.iter().chain(&self.i_or).map(|v| v.abs()).sum()
    }

    pub fn max_abs_effect(&self) -> f64 {
        self.i_and.iter().chain(&self.i_or).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.i_and.iter().chain(&self.i_or).all(|v| v.is_finite())
    }

    /// Surrogate output on the input masked to `subset`.
    pub fn reconstruct(&self, subset: SubsetMask) -> f64 {
        reconstruct_bits(self.n, self.b, &self.i_and, &self.i_or, subset.bits() as usize)
    }

    /// Surrogate outputs for every mask at once, in O(n·2ⁿ).
    pub fn reconstruct_all(&self) -> Vec<f64> {
        reconstruct_all_from(self.b, &self.i_and, &self.i_or)
    }
}

fn reconstruct_bits(n: usize, b: f64, i_and: &[f64], i_or: &[f64], s: usize) -> f64 {
    let full = (1usize << n) - 1;
    let mut total = b;
    for t in 1..=full {
        if t & s == t {
            total += i_and[t];
        }
        if t & s != 0 {
            total += i_or[t];
        }
    }
    total
}

/// `b + Σ_{∅≠T⊆S} and[T] + Σ_{T∩S≠∅} or[T]` for every `S`.
pub(crate) fn reconstruct_all_from(b: f64, i_and: &[f64], i_or: &[f64]) -> Vec<f64> {
    let len = i_and.len();
    let mut and_part = i_and.to_vec();
    and_part[0] = 0.0;
    crate::transform::zeta_subset(&mut and_part);
    // Σ_{T∩S≠∅} or[T] = total − Σ_{T⊆N∖S} or[T]
    let mut or_part = i_or.to_vec();
    or_part[0] = 0.0;
    crate::transform::zeta_subset(&mut or_part);
    let or_total = or_part[len - 1];
    (0..len)
        .map(|s| b + and_part[s] + (or_total - or_part[(len - 1) ^ s]))
        .collect()
}

/// Max over all masks of `|reconstruct(S) − table[S]|`.
pub fn reconstruction_error(decomp: &InteractionDecomposition, table: &MaskedOutputTable) -> f64 {
    decomp
        .reconstruct_all()
        .iter()
        .zip(&table.values)
        .fold(0.0, |m, (r, v)| m.max((r - v).abs()))
}
