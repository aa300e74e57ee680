//! Salient interactions and their transfer to a baseline model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{reconstruct_all_from, InteractionDecomposition, Kind};
use crate::masking::MaskedOutputTable;
use crate::subset::SubsetMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    /// Relative mode: τ = alpha · max |effect| over both kinds.
    pub alpha: f64,
    pub absolute_tau: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Relative,
            alpha: 0.05,
            absolute_tau: 0.0,
        }
    }
}

impl ThresholdPolicy {
    pub fn relative(alpha: f64) -> Self {
        ThresholdPolicy {
            alpha,
            ..Default::default()
        }
    }

    pub fn absolute(tau: f64) -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Absolute,
            alpha: 0.0,
            absolute_tau: tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.mode {
            ThresholdMode::Relative => self.alpha.is_finite() && self.alpha > 0.0,
            ThresholdMode::Absolute => self.absolute_tau.is_finite() && self.absolute_tau > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid threshold policy {self:?}")))
        }
    }

    pub fn tau(&self, decomp: &InteractionDecomposition) -> f64 {
        match self.mode {
            ThresholdMode::Relative => self.alpha * decomp.max_abs_effect(),
            ThresholdMode::Absolute => self.absolute_tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientInteraction {
    pub mask: SubsetMask,
    pub kind: Kind,
    pub effect: f64,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientSet {
    pub n: usize,
    pub tau: f64,
    pub interactions: Vec<SalientInteraction>,
}

impl SalientSet {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }
}

/// All nonempty-subset effects with `|effect| > τ`, largest first.
///
/// Ties are broken by kind (AND first) and then by mask value.
pub fn extract_salient(decomp: &InteractionDecomposition, policy: &ThresholdPolicy) -> SalientSet {
    let tau = policy.tau(decomp);
    let mut interactions = Vec::new();
    for kind in [Kind::And, Kind::Or] {
        for (bits, &effect) in decomp.effects(kind).iter().enumerate().skip(1) {
            if effect.abs() > tau {
                let mask = SubsetMask::new(bits as u32, decomp.n).expect("index below 2^n");
                interactions.push(SalientInteraction {
                    mask,
                    kind,
                    effect,
                    order: mask.order(),
                });
            }
        }
    }
    interactions.sort_by(|a, b| {
        b.effect
            .abs()
            .total_cmp(&a.effect.abs())
            .then(a.kind.cmp(&b.kind))
            .then(a.mask.bits().cmp(&b.mask.bits()))
    });
    SalientSet {
        n: decomp.n,
        tau,
        interactions,
    }
}

fn salient_only(decomp: &InteractionDecomposition, salient: &SalientSet) -> (Vec<f64>, Vec<f64>) {
    let len = decomp.i_and.len();
    let (mut and, mut or) = (vec![0.0; len], vec![0.0; len]);
    for s in &salient.interactions {
        match s.kind {
            Kind::And => and[s.mask.index()] = s.effect,
            Kind::Or => or[s.mask.index()] = s.effect,
        }
    }
    (and, or)
}

/// Max over all masks of the error of the surrogate that keeps only the
/// salient effects (plus the bias).
pub fn salient_approximation_error(
    decomp: &InteractionDecomposition,
    salient: &SalientSet,
    table: &MaskedOutputTable,
) -> Result<f64> {
    if decomp.n != table.n || salient.n != table.n {
        return Err(Error::DimensionMismatch {
            expected: table.n,
            got: if decomp.n != table.n { decomp.n } else { salient.n },
        });
    }
    let (and, or) = salient_only(decomp, salient);
    Ok(reconstruct_all_from(decomp.b, &and, &or)
        .iter()
        .zip(&table.values)
        .fold(0.0, |m, (r, v)| m.max((r - v).abs())))
}

/// Total `|effect|` of the interactions left out of `salient`.
pub fn discarded_mass(decomp: &InteractionDecomposition, salient: &SalientSet) -> f64 {
    let (and, or) = salient_only(decomp, salient);
    let dropped = |all: &[f64], kept: &[f64]| -> f64 {
        all.iter().zip(kept).map(|(a, k)| if *k == 0.0 { a.abs() } else { 0.0 }).sum()
    };
    dropped(&decomp.i_and, &and) + dropped(&decomp.i_or, &or)
}

/// `1(|base| > τ_base) · 1(effect · base > 0)`.
pub fn generalization_bit(effect: f64, base_effect: f64, tau_base: f64) -> bool {
    base_effect.abs() > tau_base && effect * base_effect > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedInteraction {
    pub mask: u32,
    pub kind: Kind,
    pub order: usize,
    pub effect_v: f64,
    pub effect_base: f64,
    pub g: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderStat {
    pub count: usize,
    pub mean_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct GeneralizationReport {
    pub sample_id: String,
    pub n: usize,
    pub tau_v: f64,
    pub tau_base: f64,
    pub interactions: Vec<MatchedInteraction>,
    /// Mean generalization bit over the salient interactions; 0 if there are none.
    pub H_bar: f64,
    /// Salient interaction count for this sample.
    pub N_bar: f64,
    pub per_order: BTreeMap<usize, OrderStat>,
}

impl GeneralizationReport {
    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        self.interactions.iter().map(|m| m.g)
    }
}

fn order_stats<'a>(items: impl Iterator<Item = &'a MatchedInteraction>) -> BTreeMap<usize, OrderStat> {
    let mut acc: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for m in items {
        let e = acc.entry(m.order).or_default();
        e.0 += 1;
        e.1 += m.g as usize;
    }
    acc.into_iter()
        .map(|(order, (count, hits))| {
            (
                order,
                OrderStat {
                    count,
                    mean_g: hits as f64 / count as f64,
                },
            )
        })
        .collect()
}

/// Scores each salient interaction of the analyzed model by whether the
/// baseline model, on the same sample and baseline values, has the same
/// subset and kind salient with the same sign.
pub fn match_generalization(
    salient_v: &SalientSet,
    decomp_base: &InteractionDecomposition,
    tau_base: f64,
) -> Result<GeneralizationReport> {
    if salient_v.n != decomp_base.n {
        return Err(Error::DimensionMismatch {
            expected: salient_v.n,
            got: decomp_base.n,
        });
    }
    let interactions: Vec<MatchedInteraction> = salient_v
        .interactions
        .iter()
        .map(|s| {
            let base = decomp_base.effect(s.kind, s.mask);
            MatchedInteraction {
                mask: s.mask.bits(),
                kind: s.kind,
                order: s.order,
                effect_v: s.effect,
                effect_base: base,
                g: generalization_bit(s.effect, base, tau_base) as u8,
            }
        })
        .collect();
    let count = interactions.len();
    let hits: usize = interactions.iter().map(|m| m.g as usize).sum();
    Ok(GeneralizationReport {
        sample_id: decomp_base.source_table_id.clone(),
        n: salient_v.n,
        tau_v: salient_v.tau,
        tau_base,
        per_order: order_stats(interactions.iter()),
        H_bar: if count == 0 { 0.0 } else { hits as f64 / count as f64 },
        N_bar: count as f64,
        interactions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderAggregate {
    pub per_order: BTreeMap<usize, OrderStat>,
    /// Mean bit over every salient interaction of every sample; `None` if there are none.
    pub h_bar: Option<f64>,
    /// Mean salient count per sample.
    pub n_bar: f64,
    pub mean_order: Option<f64>,
    pub total_salient: usize,
    pub num_samples: usize,
}

pub fn aggregate_orders(reports: &[GeneralizationReport]) -> Result<OrderAggregate> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to aggregate".into()));
    }
    let all: Vec<&MatchedInteraction> = reports.iter().flat_map(|r| &r.interactions).collect();
    let total = all.len();
    let hits: usize = all.iter().map(|m| m.g as usize).sum();
    let order_sum: usize = all.iter().map(|m| m.order).sum();
    Ok(OrderAggregate {
        per_order: order_stats(all.into_iter()),
        h_bar: (total > 0).then(|| hits as f64 / total as f64),
        n_bar: total as f64 / reports.len() as f64,
        mean_order: (total > 0).then(|| order_sum as f64 / total as f64),
        total_salient: total,
        num_samples: reports.len(),
    })
}
