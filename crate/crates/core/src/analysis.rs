//! The per-sample pipeline shared by `extract`, `match` and `sweep`:
//! masked output table → sparse decomposition → salient set.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::interaction::InteractionDecomposition;
use crate::masking::{masked_output_table, BaselineVector, MaskedOutputTable, Scorer};
use crate::par::{map_collect, Execution};
use crate::saliency::{extract_salient, match_generalization, GeneralizationReport, SalientSet, ThresholdPolicy};
use crate::sparsify::{sparse_decomposition, SparsifyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSample {
    pub id: String,
    pub index: usize,
    pub x: Vec<f64>,
    pub label: usize,
}

/// Draws `k` distinct samples (all of them if `k` ≥ len) in a seed-determined order.
pub fn select_samples(data: &Dataset, k: usize, seed: u64) -> Result<Vec<AnalysisSample>> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one analysis sample".into()));
    }
    let k = k.min(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample_indices(&mut rng, data.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|index| {
            let s = &data.samples()[index];
            AnalysisSample {
                id: format!("sample_{index:05}"),
                index,
                x: s.x.clone(),
                label: s.label,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAnalysis {
    pub table: MaskedOutputTable,
    pub decomposition: InteractionDecomposition,
    pub salient: SalientSet,
    pub objective: f64,
    /// Certified lower bound on the best achievable objective.
    pub lower_bound: f64,
    pub converged: bool,
}

pub fn analyze_sample<S: Scorer + ?Sized>(
    scorer: &S,
    sample: &AnalysisSample,
    baseline: &BaselineVector,
    sparsify: &SparsifyConfig,
    policy: &ThresholdPolicy,
) -> Result<SampleAnalysis> {
    let table = masked_output_table(scorer, &sample.x, sample.label, baseline, sample.id.clone())?;
    let (decomposition, result) = sparse_decomposition(&table, sparsify)?;
    let salient = extract_salient(&decomposition, policy);
    Ok(SampleAnalysis {
        table,
        decomposition,
        salient,
        objective: result.final_objective,
        lower_bound: result.lower_bound,
        converged: result.converged,
    })
}

pub fn analyze_samples<S: Scorer + ?Sized>(
    scorer: &S,
    samples: &[AnalysisSample],
    baseline: &BaselineVector,
    sparsify: &SparsifyConfig,
    policy: &ThresholdPolicy,
    exec: Execution,
) -> Result<Vec<SampleAnalysis>> {
    policy.validate()?;
    map_collect(exec, samples, |s| analyze_sample(scorer, s, baseline, sparsify, policy))
        .into_iter()
        .collect()
}

/// Pairs analyses of the same samples under the analyzed and baseline models.
pub fn match_samples(v: &[SampleAnalysis], base: &[SampleAnalysis]) -> Result<Vec<GeneralizationReport>> {
    if v.len() != base.len() {
        return Err(Error::InvalidArgument(format!(
            "{} analyzed samples but {} baseline samples",
            v.len(),
            base.len()
        )));
    }
    v.iter()
        .zip(base)
        .map(|(a, b)| {
            if a.table.sample_id != b.table.sample_id {
                return Err(Error::InvalidArgument(format!(
                    "sample mismatch: {} vs {}",
                    a.table.sample_id, b.table.sample_id
                )));
            }
            match_generalization(&a.salient, &b.decomposition, b.salient.tau)
        })
        .collect()
}
