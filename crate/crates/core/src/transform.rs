//! Fast subset-lattice transforms over length-2ⁿ vectors.
//!
//! All transforms run in place in O(n·2ⁿ) with the usual butterfly over one
//! bit at a time. The `*_bruteforce` functions evaluate the literal alternating
//! sums in O(3ⁿ) and exist to cross-check the fast path.

use crate::error::{Error, Result};
use crate::subset::full_bits;

/// Largest `n` accepted by the brute-force oracles.
pub const BRUTEFORCE_MAX_VARIABLES: usize = 12;

fn butterfly(xs: &mut [f64], op: impl Fn(&mut f64, &mut f64)) {
    debug_assert!(xs.len().is_power_of_two());
    let mut half = 1;
    while half < xs.len() {
        for block in xs.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (z, o) in lo.iter_mut().zip(hi) {
                op(z, o);
            }
        }
        half <<= 1;
    }
}

/// `x[S] ← Σ_{L⊆S} x[L]`.
pub fn zeta_subset(xs: &mut [f64]) {
    butterfly(xs, |z, o| *o += *z);
}

/// Inverse of [`zeta_subset`]: `x[S] ← Σ_{L⊆S} (−1)^{|S|−|L|} x[L]`.
pub fn mobius_subset(xs: &mut [f64]) {
    butterfly(xs, |z, o| *o -= *z);
}

/// Transpose of [`mobius_subset`]: `x[L] ← Σ_{T⊇L} (−1)^{|T|−|L|} x[T]`.
pub fn mobius_superset(xs: &mut [f64]) {
    butterfly(xs, |z, o| *z -= *o);
}

/// `out[L] = x[N∖L]`.
pub fn complement_permute(xs: &[f64]) -> Vec<f64> {
    let full = xs.len() - 1;
    (0..xs.len()).map(|l| xs[full ^ l]).collect()
}

/// AND effects from AND-channel outputs. Entry 0 is stored as 0.
pub fn mobius_and(o_and: &[f64]) -> Vec<f64> {
    let mut out = o_and.to_vec();
    mobius_subset(&mut out);
    out[0] = 0.0;
    out
}

/// OR effects from OR-channel outputs: `I[T] = −Σ_{L⊆T} (−1)^{|T|−|L|} o[N∖L]`.
/// Entry 0 is stored as 0.
pub fn mobius_or(o_or: &[f64]) -> Vec<f64> {
    let mut out = complement_permute(o_or);
    mobius_subset(&mut out);
    for v in out.iter_mut() {
        *v = -*v;
    }
    out[0] = 0.0;
    out
}

fn check_bruteforce_len(len: usize) -> Result<usize> {
    let n = crate::subset::log2_len(len)?;
    if n > BRUTEFORCE_MAX_VARIABLES {
        return Err(Error::TooManyVariables {
            n,
            limit: BRUTEFORCE_MAX_VARIABLES,
        });
    }
    Ok(n)
}

/// Enumerates the subsets of `mask` (including `mask` itself and ∅).
fn subsets_of(mask: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

fn parity_sign(k: u32) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Literal `I[T] = Σ_{L⊆T} (−1)^{|T|−|L|} o[L]` for every nonempty `T`.
pub fn mobius_and_bruteforce(o_and: &[f64]) -> Result<Vec<f64>> {
    check_bruteforce_len(o_and.len())?;
    let mut out = vec![0.0; o_and.len()];
    for (t, slot) in out.iter_mut().enumerate().skip(1) {
        let t_size = t.count_ones();
        *slot = subsets_of(t)
            .map(|l| parity_sign(t_size - l.count_ones()) * o_and[l])
            .sum();
    }
    Ok(out)
}

/// Literal `I[T] = −Σ_{L⊆T} (−1)^{|T|−|L|} o[N∖L]` for every nonempty `T`.
pub fn mobius_or_bruteforce(o_or: &[f64]) -> Result<Vec<f64>> {
    let n = check_bruteforce_len(o_or.len())?;
    let full = full_bits(n);
    let mut out = vec![0.0; o_or.len()];
    for (t, slot) in out.iter_mut().enumerate().skip(1) {
        let t_size = t.count_ones();
        let s: f64 = subsets_of(t)
            .map(|l| parity_sign(t_size - l.count_ones()) * o_or[full ^ l])
            .sum();
        *slot = -s;
    }
    Ok(out)
}
