//! Randomized self-check of the decomposition and sparsifier invariants.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{decompose, reconstruction_error, split_outputs, GammaVector, Kind};
use crate::masking::{masked_output_table, BaselineVector, MaskedOutputTable};
use crate::model::{init_model, ModelSpec};
use crate::par::{map_range, Execution};
use crate::saliency::{extract_salient, ThresholdPolicy};
use crate::sparsify::{objective, sparse_decomposition, sparsify, SparsifyConfig};
use crate::subset::check_n;
use crate::synth::{planted_table, PlantedSpec};
use crate::transform::{mobius_and, mobius_and_bruteforce, mobius_or, mobius_or_bruteforce, zeta_subset, BRUTEFORCE_MAX_VARIABLES};

pub const MATCHING_TOL: f64 = 1e-8;
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub sparsify: SparsifyConfig,
    pub execution: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n: 8,
            trials: 100,
            seed: 0,
            sparsify: SparsifyConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<34} {}", self.name, self.detail)
    }
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        detail,
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn random_values(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Trial `t` alternates between a uniformly random table and the table of a
/// random tiny MLP on a random input.
pub fn random_table(n: usize, seed: u64, trial: usize) -> Result<MaskedOutputTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    if trial % 2 == 0 {
        MaskedOutputTable::from_values(random_values(&mut rng, 1 << n, 5.0), 0, format!("random_{trial}"))
    } else {
        let spec = ModelSpec::new(n.max(1), vec![8, 8], 2, rng.random());
        let model = init_model(&spec)?;
        let x = random_values(&mut rng, n, 2.0);
        let baseline = BaselineVector::new(random_values(&mut rng, n, 0.5))?;
        masked_output_table(&model, &x, rng.random_range(0..2), &baseline, format!("mlp_{trial}"))
    }
}

fn worst<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    it.into_iter().try_fold(0.0f64, |m, v| Ok(m.max(v?)))
}

/// Runs every check; the suite passes iff every outcome passed.
pub fn run_verify(cfg: &VerifyConfig) -> Result<Vec<CheckOutcome>> {
    check_n(cfg.n)?;
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("verify needs at least one variable".into()));
    }
    let n = cfg.n;
    let trials = cfg.trials.max(1);
    let exec = cfg.execution;
    let mut out = Vec::new();

    let tables = map_range(exec, trials, |t| random_table(n, cfg.seed, t))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    // Reconstruction from γ = 0 and three random γ per table.
    let err = worst(map_range(exec, trials, |t| {
        let table = &tables[t];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
        rng.set_stream(t as u64);
        let mut gammas = vec![GammaVector::zeros(n)];
        for _ in 0..3 {
            gammas.push(GammaVector(random_values(&mut rng, 1 << n, 5.0)));
        }
        worst(gammas.iter().map(|g| Ok(reconstruction_error(&decompose(table, g)?, table))))
    }))?;
    out.push(outcome(
        "universal matching",
        err < MATCHING_TOL,
        format!("max |d(x_S) - v(x_S)| = {err:.3e} over {} tables x 4 gammas", trials),
    ));

    let oracle_n = n.min(BRUTEFORCE_MAX_VARIABLES.min(10));
    let err = worst(map_range(exec, trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51ed_270b);
        rng.set_stream(t as u64);
        let size = 1 + t % oracle_n.max(1);
        let size = if oracle_n == 0 { 0 } else { size };
        let o = random_values(&mut rng, 1 << size, 5.0);
        let a = max_diff(&mobius_and(&o), &mobius_and_bruteforce(&o)?);
        let b = max_diff(&mobius_or(&o), &mobius_or_bruteforce(&o)?);
        Ok(a.max(b))
    }))?;
    out.push(outcome(
        "fast transform == literal sums",
        err < ORACLE_TOL,
        format!("max diff = {err:.3e}, n in 1..={oracle_n}"),
    ));

    let err = worst(map_range(exec, trials, |t| {
        let table = &tables[t];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x2545_f491);
        rng.set_stream(t as u64);
        let g = GammaVector(random_values(&mut rng, 1 << n, 5.0));
        let (o_and, o_or) = split_outputs(table, &g)?;
        let d = decompose(table, &g)?;
        // Σ_{∅≠T⊆S} I_and[T] via subset sums; Σ_{T∩S≠∅} I_or[T] via complements.
        let mut and_sums = d.i_and.clone();
        zeta_subset(&mut and_sums);
        let mut or_sums = d.i_or.clone();
        zeta_subset(&mut or_sums);
        let full = (1usize << n) - 1;
        let mut e: f64 = 0.0;
        for s in 0..=full {
            e = e.max((and_sums[s] - (o_and[s] - o_and[0])).abs());
            e = e.max(((or_sums[full] - or_sums[full ^ s]) - (o_or[s] - o_or[0])).abs());
        }
        Ok(e)
    }))?;
    out.push(outcome(
        "partial-sum identities",
        err < MATCHING_TOL,
        format!("max residual = {err:.3e}"),
    ));

    let err = worst(map_range(exec, trials, |t| {
        let table = &tables[t];
        let (o_and, _) = split_outputs(table, &GammaVector::zeros(n))?;
        let mut back = mobius_and(&o_and);
        zeta_subset(&mut back);
        let expected: Vec<f64> = o_and.iter().map(|v| v - o_and[0]).collect();
        Ok(max_diff(&back, &expected))
    }))?;
    out.push(outcome("zeta inverts mobius", err < ORACLE_TOL, format!("max diff = {err:.3e}")));

    let results = map_range(exec, trials, |t| -> Result<(f64, f64, f64)> {
        let table = &tables[t];
        let (d, r) = sparse_decomposition(table, &cfg.sparsify)?;
        let start = objective(table, &GammaVector::zeros(n))?;
        Ok((reconstruction_error(&d, table), r.final_objective, start))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let err = results.iter().fold(0.0f64, |m, r| m.max(r.0));
    let worse = results.iter().filter(|r| r.1 > r.2 + 1e-12).count();
    let saved: f64 = results.iter().map(|r| 1.0 - r.1 / r.2.max(f64::MIN_POSITIVE)).sum::<f64>() / trials as f64;
    out.push(outcome(
        "sparsify preserves matching",
        err < MATCHING_TOL,
        format!("max reconstruction error = {err:.3e}"),
    ));
    out.push(outcome(
        "sparsify never worse than gamma=0",
        worse == 0,
        format!("{worse} regressions, mean L1 reduction {:.1}%", 100.0 * saved),
    ));

    let again = sparsify(&tables[0], &cfg.sparsify)?;
    let first = sparsify(&tables[0], &cfg.sparsify)?;
    out.push(outcome("sparsify deterministic", again == first, String::new()));

    if n >= 2 {
        // planted terms have order 2..=4
        let plantable = (1u32..1 << n).filter(|m| (2..=4).contains(&m.count_ones())).count();
        let k = 5.min(plantable);
        let spec = PlantedSpec::random(n, k, &[Kind::And], cfg.seed)?;
        let table = planted_table(&spec, "planted")?;
        let (d, _) = sparse_decomposition(&table, &cfg.sparsify)?;
        let salient = extract_salient(&d, &ThresholdPolicy::relative(0.05));
        let mut found: Vec<(u32, bool)> = salient.interactions.iter().map(|s| (s.mask.bits(), s.effect > 0.0)).collect();
        let mut truth: Vec<(u32, bool)> = spec.planted.iter().map(|t| (t.mask, t.coefficient > 0.0)).collect();
        found.sort_unstable();
        truth.sort_unstable();
        let all_and = salient.interactions.iter().all(|s| s.kind == Kind::And);
        out.push(outcome(
            "planted AND recovery",
            found == truth && all_and,
            format!("{} salient, {} planted", salient.len(), k),
        ));
    }
    Ok(out)
}
