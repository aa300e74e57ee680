//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use andor_core::masking::MaskedOutputTable;

/// Effects at split `gamma` computed from the literal alternating sums.
pub fn literal_effects(values: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let len = values.len();
    let full = len - 1;
    let o_and: Vec<f64> = values.iter().zip(gamma).map(|(v, g)| 0.5 * v + g).collect();
    let o_or: Vec<f64> = values.iter().zip(gamma).map(|(v, g)| 0.5 * v - g).collect();
    let mut and = vec![0.0; len];
    let mut or = vec![0.0; len];
    for t in 1..len {
        for l in 0..len {
            if l & !t != 0 {
                continue;
            }
            let sign = if (t.count_ones() - l.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            and[t] += sign * o_and[l];
            or[t] -= sign * o_or[full ^ l];
        }
    }
    (and, or)
}

pub fn literal_objective(values: &[f64], gamma: &[f64]) -> f64 {
    let (a, o) = literal_effects(values, gamma);
    a.iter().chain(&o).map(|v| v.abs()).sum()
}

/// Minimum of the objective over a regular grid of γ with γ_∅ fixed to 0
/// (adding a constant to γ leaves every nonempty effect unchanged).
pub fn grid_minimum(values: &[f64], lo: f64, hi: f64, step: f64) -> (f64, Vec<f64>) {
    let len = values.len();
    let points = ((hi - lo) / step).round() as usize + 1;
    let free = len - 1;
    let total = points.pow(free as u32);
    let mut best = (f64::INFINITY, vec![0.0; len]);
    let mut gamma = vec![0.0; len];
    for code in 0..total {
        let mut c = code;
        for g in gamma.iter_mut().skip(1) {
            *g = lo + step * (c % points) as f64;
            c /= points;
        }
        let value = literal_objective(values, &gamma);
        if value < best.0 {
            best = (value, gamma.clone());
        }
    }
    best
}

pub fn table(values: &[f64]) -> MaskedOutputTable {
    MaskedOutputTable::from_values(values.to_vec(), 0, "fixture").unwrap()
}

/// Checks that the `k` largest effects of the planted kind sit exactly on the
/// planted masks with the planted signs, and that everything else is below
/// `rel` of the largest magnitude.
pub fn check_planted_recovery(
    spec: &andor_core::synth::PlantedSpec,
    decomp: &andor_core::InteractionDecomposition,
    rel: f64,
) -> Result<(), String> {
    use andor_core::Kind;
    let kind = spec.planted[0].kind;
    assert!(spec.planted.iter().all(|t| t.kind == kind));
    let effects = decomp.effects(kind);
    let mut order: Vec<usize> = (1..effects.len()).collect();
    order.sort_by(|&a, &b| effects[b].abs().total_cmp(&effects[a].abs()));
    let max = decomp.max_abs_effect();
    let k = spec.planted.len();
    for &mask in &order[..k] {
        let term = spec
            .planted
            .iter()
            .find(|t| t.mask as usize == mask)
            .ok_or_else(|| format!("mask {mask:#b} is among the {k} largest but was not planted"))?;
        if term.coefficient * effects[mask] <= 0.0 {
            return Err(format!("sign mismatch at {mask:#b}: {} vs {}", effects[mask], term.coefficient));
        }
    }
    let other = if kind == Kind::And { Kind::Or } else { Kind::And };
    let leak = order[k..]
        .iter()
        .map(|&m| effects[m].abs())
        .chain(decomp.effects(other)[1..].iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    if leak >= rel * max {
        return Err(format!("non-planted magnitude {leak:.3e} ≥ {rel}·{max:.3e}"));
    }
    Ok(())
}
