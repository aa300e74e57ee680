//! Choosing γ to make the AND-OR decomposition as sparse as possible.
//!
//! Both effect vectors are affine in γ:
//! `I_and(γ) = I_and(0) + M·γ` and `I_or(γ) = I_or(0) + M·C·γ`, where `M` is the
//! subset Möbius transform and `C` the complement permutation. The objective
//! `‖I_and‖₁ + ‖I_or‖₁` (nonempty subsets only) is therefore a convex
//! piecewise-linear function of γ, and every operator application is a fast
//! transform.
//!
//! The default solver is a diagonally preconditioned primal-dual hybrid
//! gradient method with periodic restarts from the averaged iterate and an
//! adaptive primal weight. At each restart the dual iterate is completed to a
//! feasible dual point, which certifies a lower bound on the optimum; the run
//! has converged once the gap to that bound is below `tol`.
//!
//! The primal iterates stall as n grows, well before the dual does. So each
//! restart also polishes: the entries where the dual sits at ±1 give a
//! candidate support, and γ is re-solved exactly on it by least squares.
//! The candidate is kept only if its objective is better.
//!
//! Plain subgradient descent with a diminishing step is available as
//! [`SparsifyMethod::Subgradient`] for reference. The operator is badly
//! conditioned (its norm grows like the golden ratio to the n-th power), so
//! it converges slowly and gives no accuracy guarantee.
//!
//! Both start from γ = 0 and return the best iterate seen, so the result is
//! never worse than the symmetric split.
//!
//! The problem is solved on the table scaled to unit maximum effect; the
//! optimum is positively homogeneous in the table, so γ is scaled back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{decompose, GammaVector, InteractionDecomposition};
use crate::masking::MaskedOutputTable;
use crate::subset::check_n;
use crate::transform::{complement_permute, mobius_subset, mobius_superset, zeta_subset};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsifyMethod {
    #[default]
    PrimalDual,
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyConfig {
    pub max_iters: usize,
    /// Initial step of the subgradient method, relative to the table scale.
    pub step_size: f64,
    /// Relative tolerance of the convergence test: the duality gap for the
    /// primal-dual method, the objective decrease over a window for the
    /// subgradient method.
    pub tol: f64,
    /// Recorded for reproducibility; both solvers are deterministic.
    pub seed: u64,
    pub method: SparsifyMethod,
    /// Primal-dual iterations between restarts; the gap is checked at each.
    pub restart_period: usize,
    /// Initial ratio of primal to dual step in the primal-dual method.
    pub primal_weight: f64,
    /// Rebalance the primal weight at each restart from the distances the
    /// primal and dual iterates travelled during the cycle.
    pub adapt_weight: bool,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            max_iters: 5000,
            step_size: 0.01,
            tol: 1e-6,
            seed: 0,
            method: SparsifyMethod::PrimalDual,
            restart_period: 500,
            primal_weight: 4.0,
            adapt_weight: true,
        }
    }
}

/// Largest AND support the polishing step will solve for.
const MAX_POLISH_SUPPORT: usize = 600;

/// Dual slack below which an entry counts as on the support when polishing.
const POLISH_SLACKS: [f64; 3] = [1e-6, 1e-3, 1e-2];

/// Window used by the subgradient method's convergence test.
const SUBGRADIENT_WINDOW: usize = 50;

impl SparsifyConfig {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.step_size) && positive(self.tol) && positive(self.primal_weight))
            || self.restart_period == 0
        {
            return Err(Error::InvalidArgument(
                "sparsify step size, tolerance, primal weight and restart period must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifyResult {
    pub gamma: GammaVector,
    /// Best objective seen after each iteration (index 0 is γ = 0).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub final_objective: f64,
    /// Certified lower bound on the optimal objective.
    pub lower_bound: f64,
    pub iterations: usize,
}

/// `‖I_and‖₁ + ‖I_or‖₁` over nonempty subsets for the decomposition at γ.
pub fn objective(table: &MaskedOutputTable, gamma: &GammaVector) -> Result<f64> {
    Ok(decompose(table, gamma)?.l1_norm())
}

/// The linear part `γ ↦ (M·γ, M·C·γ)` and its transpose.
struct EffectOperator {
    len: usize,
}

impl EffectOperator {
    fn apply(&self, gamma: &[f64], out_and: &mut [f64], out_or: &mut [f64]) {
        out_and.copy_from_slice(gamma);
        mobius_subset(out_and);
        out_and[0] = 0.0;
        let full = self.len - 1;
        for (l, slot) in out_or.iter_mut().enumerate() {
            *slot = gamma[full ^ l];
        }
        mobius_subset(out_or);
        out_or[0] = 0.0;
    }

    fn apply_transpose(&self, y_and: &[f64], y_or: &[f64], out: &mut [f64]) {
        let mut a = y_and.to_vec();
        a[0] = 0.0;
        mobius_superset(&mut a);
        let mut o = y_or.to_vec();
        o[0] = 0.0;
        mobius_superset(&mut o);
        let o = complement_permute(&o);
        for ((slot, x), y) in out.iter_mut().zip(a).zip(o) {
            *slot = x + y;
        }
    }
}

/// Superset sums, the inverse of [`mobius_superset`].
fn zeta_superset(xs: &mut [f64]) {
    let mut half = 1;
    while half < xs.len() {
        for block in xs.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (z, o) in lo.iter_mut().zip(hi) {
                *z += *o;
            }
        }
        half <<= 1;
    }
}

fn l1(a: &[f64], b: &[f64], c_and: &[f64], c_or: &[f64]) -> f64 {
    let and: f64 = a.iter().zip(c_and).map(|(x, c)| (x + c).abs()).sum();
    let or: f64 = b.iter().zip(c_or).map(|(x, c)| (x + c).abs()).sum();
    and + or
}

pub fn sparsify(table: &MaskedOutputTable, config: &SparsifyConfig) -> Result<SparsifyResult> {
    config.validate()?;
    check_n(table.n)?;
    let zero = GammaVector::zeros(table.n);
    let start = decompose(table, &zero)?;
    let start_objective = start.l1_norm();
    if !start_objective.is_finite() {
        return Err(Error::NonFinite(format!("objective for table `{}`", table.sample_id)));
    }
    let scale = start.max_abs_effect();
    if scale == 0.0 {
        return Ok(SparsifyResult {
            gamma: zero,
            objective_trace: vec![0.0],
            converged: true,
            final_objective: 0.0,
            lower_bound: 0.0,
            iterations: 0,
        });
    }

    let c_and: Vec<f64> = start.i_and.iter().map(|v| v / scale).collect();
    let c_or: Vec<f64> = start.i_or.iter().map(|v| v / scale).collect();
    let problem = Problem {
        n: table.n,
        op: EffectOperator { len: table.values.len() },
        c_and,
        c_or,
    };
    let run = match config.method {
        SparsifyMethod::PrimalDual => problem.primal_dual(config),
        SparsifyMethod::Subgradient => problem.subgradient(config),
    };
    if run.trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("objective for table `{}`", table.sample_id)));
    }

    let gamma = GammaVector(run.best.iter().map(|g| g * scale).collect());
    let mut final_objective = objective(table, &gamma)?;
    let mut gamma = gamma;
    // Rounding in the rescale can in principle lose to the start point.
    if final_objective > start_objective {
        gamma = GammaVector::zeros(table.n);
        final_objective = start_objective;
    }
    Ok(SparsifyResult {
        gamma,
        objective_trace: run.trace.into_iter().map(|v| v * scale).collect(),
        converged: run.converged,
        final_objective,
        lower_bound: (run.lower_bound * scale).min(final_objective),
        iterations: run.iterations,
    })
}

/// Sparsifies and decomposes in one step.
pub fn sparse_decomposition(
    table: &MaskedOutputTable,
    config: &SparsifyConfig,
) -> Result<(InteractionDecomposition, SparsifyResult)> {
    let result = sparsify(table, config)?;
    Ok((decompose(table, &result.gamma)?, result))
}

struct Problem {
    n: usize,
    op: EffectOperator,
    c_and: Vec<f64>,
    c_or: Vec<f64>,
}

struct Run {
    best: Vec<f64>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    lower_bound: f64,
}

impl Problem {
    fn len(&self) -> usize {
        self.op.len
    }

    fn objective(&self, gamma: &[f64]) -> f64 {
        let mut a = vec![0.0; self.len()];
        let mut o = vec![0.0; self.len()];
        self.op.apply(gamma, &mut a, &mut o);
        l1(&a, &o, &self.c_and, &self.c_or)
    }

    /// Diagonal preconditioners from the absolute row and column sums of the
    /// operator: row `T` of either block has 2^|T| unit entries; column `L`
    /// has 2^(n−|L|) − [L=∅] entries in the AND block and 2^|L| − [L=N] in the
    /// OR block.
    fn step_sizes(&self, weight: f64) -> (Vec<f64>, Vec<f64>) {
        let full = self.len() - 1;
        let n = self.n as i32;
        let primal = (0..self.len())
            .map(|l| {
                let k = (l as u32).count_ones() as i32;
                let and_col = 2f64.powi(n - k) - if l == 0 { 1.0 } else { 0.0 };
                let or_col = 2f64.powi(k) - if l == full { 1.0 } else { 0.0 };
                weight / (and_col + or_col)
            })
            .collect();
        let dual = (0..self.len())
            .map(|t| 1.0 / (weight * 2f64.powi((t as u32).count_ones() as i32)))
            .collect();
        (primal, dual)
    }

    /// A lower bound on the optimum from a dual point.
    ///
    /// The dual of `min_γ ‖Kγ + c‖₁` is `max cᵀy` over `‖y‖∞ ≤ 1, Kᵀy = 0`.
    /// Either block of `y` determines the other through `Kᵀy = 0`
    /// (`Mᵀy_and = −C·Mᵀy_or`, and symmetrically); the completed pair is then
    /// scaled into the unit box. The better of the two completions is returned.
    fn dual_bound(&self, y_and: &[f64], y_or: &[f64]) -> f64 {
        let full = self.len() - 1;
        let complete = |given: &[f64]| -> Vec<f64> {
            let mut t = given.to_vec();
            mobius_superset(&mut t);
            let mut other: Vec<f64> = (0..=full).map(|l| -t[full ^ l]).collect();
            zeta_superset(&mut other);
            // Exactly zero in exact arithmetic.
            other[0] = 0.0;
            other
        };
        let value = |ya: &[f64], yo: &[f64]| -> f64 {
            let peak = ya.iter().chain(yo).fold(1.0f64, |m, v| m.max(v.abs()));
            let and: f64 = ya.iter().zip(&self.c_and).map(|(y, c)| y * c).sum();
            let or: f64 = yo.iter().zip(&self.c_or).map(|(y, c)| y * c).sum();
            (and + or) / peak
        };
        let mut ya = y_and.to_vec();
        ya[0] = 0.0;
        let mut yo = y_or.to_vec();
        yo[0] = 0.0;
        value(&complete(&yo), &yo).max(value(&ya, &complete(&ya)))
    }

    /// Re-solves exactly on the support a dual point suggests.
    ///
    /// At an optimum, an effect can be nonzero only where its dual entry is
    /// at ±1. Taking the AND effects `p` on that support as unknowns fixes γ
    /// up to a constant (`γ = ζ(p − c_and)`), and the OR effects are then
    /// `o_T = (−1)^|T| Σ_{U ⊇ T} p_U + r_T` with `r` the OR effects at `p = 0`.
    /// Forcing `o_T = 0` off the OR support is a least-squares problem whose
    /// Gram matrix is `G[U, V] = #{nonempty T ⊆ U ∩ V off the OR support}`.
    /// Returns `None` when the support is too large to be worth solving.
    fn polish(&self, y_and: &[f64], y_or: &[f64], slack: f64) -> Option<Vec<f64>> {
        let len = self.len();
        let on = |y: f64| y.abs() >= 1.0 - slack;
        let support: Vec<usize> = (1..len).filter(|&u| on(y_and[u])).collect();
        if support.len() > MAX_POLISH_SUPPORT {
            return None;
        }
        let mut base: Vec<f64> = self.c_and.iter().map(|c| -c).collect();
        base[0] = 0.0;
        zeta_subset(&mut base);
        let mut r_and = vec![0.0; len];
        let mut r_or = vec![0.0; len];
        self.op.apply(&base, &mut r_and, &mut r_or);

        // subset counts and signed residual sums over OR entries forced to zero
        let mut count = vec![0.0; len];
        let mut rhs = vec![0.0; len];
        for t in 1..len {
            if !on(y_or[t]) {
                count[t] = 1.0;
                let r = r_or[t] + self.c_or[t];
                rhs[t] = if t.count_ones() % 2 == 0 { -r } else { r };
            }
        }
        zeta_subset(&mut count);
        zeta_subset(&mut rhs);

        let mut p = vec![0.0; len];
        if !support.is_empty() {
            let m = support.len();
            let gram = DMatrix::from_fn(m, m, |i, j| count[support[i] & support[j]]);
            let b = DVector::from_iterator(m, support.iter().map(|&u| rhs[u]));
            let x = match gram.clone().cholesky() {
                Some(ch) => ch.solve(&b),
                // rank deficient: any least-squares solution will do
                None => gram.svd(true, true).solve(&b, 1e-12).ok()?,
            };
            for (&u, v) in support.iter().zip(x.iter()) {
                p[u] = *v;
            }
        }
        for (slot, c) in p.iter_mut().zip(&self.c_and) {
            *slot -= c;
        }
        p[0] = 0.0;
        zeta_subset(&mut p);
        p.iter().all(|g| g.is_finite()).then_some(p)
    }

    fn primal_dual(&self, config: &SparsifyConfig) -> Run {
        let len = self.len();
        let mut weight = config.primal_weight;
        let (mut tau, mut sigma) = self.step_sizes(weight);
        let mut anchor_gamma = vec![0.0; len];
        let mut anchor_and = vec![0.0; len];
        let mut anchor_or = vec![0.0; len];

        let mut gamma = vec![0.0; len];
        let mut k_and = vec![0.0; len];
        let mut k_or = vec![0.0; len];
        let mut y_and = vec![0.0; len];
        let mut y_or = vec![0.0; len];
        // K applied to the extrapolated point, and to the next iterate
        let mut kbar_and = vec![0.0; len];
        let mut kbar_or = vec![0.0; len];
        let mut next_and = vec![0.0; len];
        let mut next_or = vec![0.0; len];
        let mut grad = vec![0.0; len];

        let mut sum_gamma = vec![0.0; len];
        let mut sum_y_and = vec![0.0; len];
        let mut sum_y_or = vec![0.0; len];
        let mut in_cycle = 0usize;

        let initial = l1(&k_and, &k_or, &self.c_and, &self.c_or);
        let mut best_value = initial;
        let mut best = gamma.clone();
        let mut trace = Vec::with_capacity(config.max_iters + 1);
        trace.push(initial);
        let mut lower = 0.0f64;
        let mut converged = false;
        let mut iterations = 0;

        for iter in 1..=config.max_iters {
            iterations = iter;
            for t in 1..len {
                y_and[t] = (y_and[t] + sigma[t] * (kbar_and[t] + self.c_and[t])).clamp(-1.0, 1.0);
                y_or[t] = (y_or[t] + sigma[t] * (kbar_or[t] + self.c_or[t])).clamp(-1.0, 1.0);
            }
            self.op.apply_transpose(&y_and, &y_or, &mut grad);
            for ((g, d), t) in gamma.iter_mut().zip(&grad).zip(&tau) {
                *g -= t * d;
            }
            self.op.apply(&gamma, &mut next_and, &mut next_or);
            for t in 0..len {
                kbar_and[t] = 2.0 * next_and[t] - k_and[t];
                kbar_or[t] = 2.0 * next_or[t] - k_or[t];
            }
            std::mem::swap(&mut k_and, &mut next_and);
            std::mem::swap(&mut k_or, &mut next_or);

            let value = l1(&k_and, &k_or, &self.c_and, &self.c_or);
            if value < best_value {
                best_value = value;
                best.copy_from_slice(&gamma);
            }

            for t in 0..len {
                sum_gamma[t] += gamma[t];
                sum_y_and[t] += y_and[t];
                sum_y_or[t] += y_or[t];
            }
            in_cycle += 1;
            if in_cycle == config.restart_period {
                lower = lower.max(self.dual_bound(&y_and, &y_or));
                let inv = 1.0 / in_cycle as f64;
                for t in 0..len {
                    gamma[t] = sum_gamma[t] * inv;
                    y_and[t] = sum_y_and[t] * inv;
                    y_or[t] = sum_y_or[t] * inv;
                }
                self.op.apply(&gamma, &mut k_and, &mut k_or);
                kbar_and.copy_from_slice(&k_and);
                kbar_or.copy_from_slice(&k_or);
                let value = l1(&k_and, &k_or, &self.c_and, &self.c_or);
                if value < best_value {
                    best_value = value;
                    best.copy_from_slice(&gamma);
                }
                sum_gamma.iter_mut().for_each(|v| *v = 0.0);
                sum_y_and.iter_mut().for_each(|v| *v = 0.0);
                sum_y_or.iter_mut().for_each(|v| *v = 0.0);
                in_cycle = 0;

                lower = lower.max(self.dual_bound(&y_and, &y_or));
                for slack in POLISH_SLACKS {
                    if let Some(candidate) = self.polish(&y_and, &y_or, slack) {
                        let value = self.objective(&candidate);
                        if value < best_value {
                            best_value = value;
                            best.copy_from_slice(&candidate);
                        }
                    }
                }
                if config.adapt_weight {
                    // distances in the preconditioned metric, independent of the current weight
                    let dx: f64 = (0..len)
                        .map(|l| (gamma[l] - anchor_gamma[l]).powi(2) * weight / tau[l])
                        .sum::<f64>()
                        .sqrt();
                    let dy: f64 = (1..len)
                        .map(|t| {
                            ((y_and[t] - anchor_and[t]).powi(2) + (y_or[t] - anchor_or[t]).powi(2))
                                / (sigma[t] * weight)
                        })
                        .sum::<f64>()
                        .sqrt();
                    if dx > 0.0 && dy > 0.0 && (dx / dy).is_finite() {
                        weight = (0.5 * (dx / dy).ln() + 0.5 * weight.ln()).exp();
                        (tau, sigma) = self.step_sizes(weight);
                    }
                    anchor_gamma.copy_from_slice(&gamma);
                    anchor_and.copy_from_slice(&y_and);
                    anchor_or.copy_from_slice(&y_or);
                }
                trace.push(best_value);
                if best_value - lower <= config.tol * best_value {
                    converged = true;
                    break;
                }
            } else {
                trace.push(best_value);
            }
        }
        Run {
            best,
            trace,
            converged,
            iterations,
            lower_bound: lower,
        }
    }

    fn subgradient(&self, config: &SparsifyConfig) -> Run {
        let len = self.len();
        let mut gamma = vec![0.0; len];
        let mut k_and = vec![0.0; len];
        let mut k_or = vec![0.0; len];
        let mut s_and = vec![0.0; len];
        let mut s_or = vec![0.0; len];
        let mut dir = vec![0.0; len];

        let initial = self.objective(&gamma);
        let mut best_value = initial;
        let mut best = gamma.clone();
        let mut trace = Vec::with_capacity(config.max_iters + 1);
        trace.push(initial);
        let mut converged = false;
        let mut iterations = 0;

        for iter in 1..=config.max_iters {
            iterations = iter;
            for t in 1..len {
                s_and[t] = sign(k_and[t] + self.c_and[t]);
                s_or[t] = sign(k_or[t] + self.c_or[t]);
            }
            self.op.apply_transpose(&s_and, &s_or, &mut dir);
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm == 0.0 {
                converged = true;
                break;
            }
            let step = config.step_size / ((iter as f64).sqrt() * norm);
            for (g, d) in gamma.iter_mut().zip(&dir) {
                *g -= step * d;
            }
            self.op.apply(&gamma, &mut k_and, &mut k_or);
            let value = l1(&k_and, &k_or, &self.c_and, &self.c_or);
            if value < best_value {
                best_value = value;
                best.copy_from_slice(&gamma);
            }
            trace.push(best_value);
            if iter >= SUBGRADIENT_WINDOW {
                let before = trace[iter - SUBGRADIENT_WINDOW];
                if before - best_value <= config.tol * best_value {
                    converged = true;
                    break;
                }
            }
        }
        self.op.apply(&best, &mut k_and, &mut k_or);
        for t in 1..len {
            s_and[t] = sign(k_and[t] + self.c_and[t]);
            s_or[t] = sign(k_or[t] + self.c_or[t]);
        }
        let lower_bound = self.dual_bound(&s_and, &s_or).max(0.0);
        Run {
            best,
            trace,
            converged,
            iterations,
            lower_bound,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
