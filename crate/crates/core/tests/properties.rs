mod common;

use andor_core::analysis::{analyze_sample, match_samples, AnalysisSample};
use andor_core::interaction::reconstruction_error;
use andor_core::masking::BaselineVector;
use andor_core::sparsify::sparse_decomposition;
use andor_core::synth::{planted_table, PlantedSpec};
use andor_core::verify::random_table;
use andor_core::{decompose, init_model, GammaVector, Kind, ModelSpec, SparsifyConfig, ThresholdPolicy};
use common::check_planted_recovery;
use proptest::prelude::*;

fn cheap() -> SparsifyConfig {
    SparsifyConfig { max_iters: 1500, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planted_and_terms_are_recovered(seed in 0u64..10_000, n in 5usize..=7, k in 1usize..=5) {
        let spec = PlantedSpec::random(n, k, &[Kind::And], seed).unwrap();
        let table = planted_table(&spec, "p").unwrap();
        let (d, _) = sparse_decomposition(&table, &SparsifyConfig::default()).unwrap();
        prop_assert!(reconstruction_error(&d, &table) < 1e-9);
        if let Err(e) = check_planted_recovery(&spec, &d, 0.05) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn planted_or_terms_are_recovered(seed in 0u64..10_000, n in 5usize..=7, k in 1usize..=5) {
        let spec = PlantedSpec::random(n, k, &[Kind::Or], seed).unwrap();
        let table = planted_table(&spec, "p").unwrap();
        let (d, _) = sparse_decomposition(&table, &SparsifyConfig::default()).unwrap();
        if let Err(e) = check_planted_recovery(&spec, &d, 0.05) {
            prop_assert!(false, "{}", e);
        }
    }

    /// The planted terms are themselves a valid split, so the optimum can be
    /// no worse than their total weight, even once the fast transforms are
    /// badly conditioned.
    #[test]
    fn mixed_planted_tables_reach_the_planted_weight(seed in 0u64..10_000, n in 8usize..=10) {
        let spec = PlantedSpec::random(n, 5, &[Kind::And, Kind::Or], seed).unwrap();
        let table = planted_table(&spec, "p").unwrap();
        let (d, r) = sparse_decomposition(&table, &SparsifyConfig::default()).unwrap();
        let planted: f64 = spec.planted.iter().map(|t| t.coefficient.abs()).sum();
        prop_assert!(r.final_objective <= planted * (1.0 + 1e-9), "{} > {}", r.final_objective, planted);
        prop_assert!(r.lower_bound <= r.final_objective);
        prop_assert!(reconstruction_error(&d, &table) < 1e-9);
    }

    #[test]
    fn matching_holds_for_any_gamma(
        n in 1usize..=7,
        trial in 0usize..1000,
        scale in 0.1f64..100.0,
    ) {
        let table = random_table(n, 11, trial).unwrap();
        let gamma: Vec<f64> = table.values.iter().enumerate().map(|(i, v)| scale * ((i as f64).sin() + v)).collect();
        let d = decompose(&table, &GammaVector(gamma)).unwrap();
        prop_assert!(reconstruction_error(&d, &table) < 1e-8 * (1.0 + scale));
    }

    /// Power-of-two rescaling is exact in floating point, so the sparse split,
    /// the salient sets and the transfer bits must be unchanged.
    #[test]
    fn power_of_two_rescaling_is_exact(trial in 0usize..500, shift in -6i32..=6) {
        let c = 2f64.powi(shift);
        let n = 5;
        let cfg = cheap();
        let policy = ThresholdPolicy::default();
        let table = random_table(n, 3, 2 * trial + 1).unwrap();
        let base_table = random_table(n, 4, 2 * trial + 1).unwrap();
        let scaled = table.scaled(c);
        let base_scaled = base_table.scaled(c);

        let (d, r) = sparse_decomposition(&table, &cfg).unwrap();
        let (ds, rs) = sparse_decomposition(&scaled, &cfg).unwrap();
        for (g, gs) in r.gamma.0.iter().zip(&rs.gamma.0) {
            prop_assert_eq!(g * c, *gs);
        }
        let s = andor_core::extract_salient(&d, &policy);
        let ss = andor_core::extract_salient(&ds, &policy);
        prop_assert_eq!(s.interactions.iter().map(|i| (i.mask, i.kind)).collect::<Vec<_>>(),
                        ss.interactions.iter().map(|i| (i.mask, i.kind)).collect::<Vec<_>>());

        let (db, _) = sparse_decomposition(&base_table, &cfg).unwrap();
        let (dbs, _) = sparse_decomposition(&base_scaled, &cfg).unwrap();
        let tau = policy.tau(&db);
        let tau_s = policy.tau(&dbs);
        let rep = andor_core::match_generalization(&s, &db, tau).unwrap();
        let rep_s = andor_core::match_generalization(&ss, &dbs, tau_s).unwrap();
        prop_assert_eq!(rep.bits().collect::<Vec<_>>(), rep_s.bits().collect::<Vec<_>>());
        prop_assert_eq!(rep.H_bar, rep_s.H_bar);
    }

    #[test]
    fn relabeling_variables_permutes_effects(trial in 0usize..200, rot in 1usize..5) {
        let n = 5;
        let table = random_table(n, 9, trial).unwrap();
        let perm = |s: usize| ((s << rot) | (s >> (n - rot))) & ((1 << n) - 1);
        let mut values = vec![0.0; 1 << n];
        for (s, v) in table.values.iter().enumerate() {
            values[perm(s)] = *v;
        }
        let permuted = andor_core::MaskedOutputTable::from_values(values, 0, "p").unwrap();
        let d = decompose(&table, &GammaVector::zeros(n)).unwrap();
        let dp = decompose(&permuted, &GammaVector::zeros(n)).unwrap();
        for s in 0..1 << n {
            prop_assert!((d.i_and[s] - dp.i_and[perm(s)]).abs() < 1e-9);
            prop_assert!((d.i_or[s] - dp.i_or[perm(s)]).abs() < 1e-9);
        }
    }
}

#[test]
fn self_transfer_scores_every_salient_interaction() {
    let spec = ModelSpec::new(6, vec![16, 16], 2, 5);
    let model = init_model(&spec).unwrap();
    let baseline = BaselineVector::new(vec![0.0; 6]).unwrap();
    let cfg = cheap();
    let policy = ThresholdPolicy::default();
    let analyses: Vec<_> = (0..4)
        .map(|i| {
            let sample = AnalysisSample {
                id: format!("s{i}"),
                index: i,
                x: (0..6).map(|j| ((i * 7 + j) as f64).cos()).collect(),
                label: i % 2,
            };
            analyze_sample(&model, &sample, &baseline, &cfg, &policy).unwrap()
        })
        .collect();
    for r in match_samples(&analyses, &analyses).unwrap() {
        assert!(r.interactions.iter().all(|m| m.g == 1));
        assert_eq!(r.H_bar, 1.0);
    }
}
