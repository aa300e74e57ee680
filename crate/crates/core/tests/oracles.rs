mod common;

use andor_core::interaction::reconstruction_error;
use andor_core::sparsify::{objective, sparse_decomposition, sparsify, SparsifyMethod};
use andor_core::{decompose, GammaVector, SparsifyConfig};
use common::{grid_minimum, literal_effects, literal_objective, table};

const GRID_TOL: f64 = 1e-3;

fn check_against_grid(values: &[f64], lo: f64, hi: f64, step: f64) -> f64 {
    let (grid_best, _) = grid_minimum(values, lo, hi, step);
    let t = table(values);
    let (d, r) = sparse_decomposition(&t, &SparsifyConfig::default()).unwrap();
    assert!(r.final_objective <= grid_best + GRID_TOL, "{} vs grid {grid_best}", r.final_objective);
    // the bound is a certificate, so it can never beat a feasible point
    assert!(r.lower_bound <= grid_best + 1e-9);
    assert!(reconstruction_error(&d, &t) < 1e-10);
    assert!((literal_objective(values, &r.gamma.0) - r.final_objective).abs() < 1e-9);

    // The subgradient method carries no accuracy guarantee, only monotonicity.
    let cfg = SparsifyConfig { method: SparsifyMethod::Subgradient, ..Default::default() };
    let r = sparsify(&t, &cfg).unwrap();
    assert!(r.final_objective <= literal_objective(values, &vec![0.0; values.len()]) + 1e-12);
    assert!(r.lower_bound <= grid_best + 1e-9);
    grid_best
}

#[test]
fn pure_and_two_variables() {
    let best = check_against_grid(&[0.0, 0.0, 0.0, 1.0], -1.5, 1.5, 0.01);
    assert!((best - 1.0).abs() < 1e-12);
}

#[test]
fn pure_or_two_variables() {
    let best = check_against_grid(&[0.0, 1.0, 1.0, 1.0], -1.5, 1.5, 0.01);
    assert!((best - 1.0).abs() < 1e-12);
}

#[test]
fn mixed_two_variables() {
    check_against_grid(&[0.0, 1.0, 1.0, 3.0], -1.5, 1.5, 0.01);
    check_against_grid(&[0.3, -0.7, 1.1, 0.2], -1.5, 1.5, 0.01);
}

#[test]
fn three_variable_fixture() {
    // AND{1,2} + OR{2,3} + 0.5 AND{1,2,3}
    let values: Vec<f64> = (0..8u32)
        .map(|s| {
            let and12 = (s & 0b011 == 0b011) as u8 as f64;
            let or23 = (s & 0b110 != 0) as u8 as f64;
            let and123 = (s == 0b111) as u8 as f64;
            and12 + or23 + 0.5 * and123
        })
        .collect();
    let best = check_against_grid(&values, -1.0, 1.0, 0.25);
    assert!(best <= 2.5 + 1e-12);
}

#[test]
fn fast_decomposition_matches_literal_sums() {
    let values = [0.3, -1.0, 2.0, 0.7, 1.1, 0.0, -0.4, 2.2];
    let gamma = [0.2, -0.1, 0.5, 0.0, 1.0, -2.0, 0.3, 0.9];
    let d = decompose(&table(&values), &GammaVector(gamma.to_vec())).unwrap();
    let (a, o) = literal_effects(&values, &gamma);
    for t in 0..8 {
        assert!((d.i_and[t] - a[t]).abs() < 1e-12);
        assert!((d.i_or[t] - o[t]).abs() < 1e-12);
    }
    assert!((objective(&table(&values), &GammaVector(gamma.to_vec())).unwrap() - literal_objective(&values, &gamma)).abs() < 1e-12);
}

#[test]
fn shifting_gamma_by_a_constant_changes_nothing() {
    let values = [0.3, -1.0, 2.0, 0.7, 1.1, 0.0, -0.4, 2.2];
    let gamma = [0.2, -0.1, 0.5, 0.0, 1.0, -2.0, 0.3, 0.9];
    let shifted: Vec<f64> = gamma.iter().map(|g| g + 0.75).collect();
    let (a, o) = literal_effects(&values, &gamma);
    let (a2, o2) = literal_effects(&values, &shifted);
    for t in 1..8 {
        assert!((a[t] - a2[t]).abs() < 1e-12 && (o[t] - o2[t]).abs() < 1e-12);
    }
}

#[test]
fn sparsified_objective_never_exceeds_symmetric_split() {
    for values in [[1.0, -2.0, 0.5, 4.0], [0.0, 0.0, 0.0, 0.0], [5.0, 5.0, 5.0, 5.0]] {
        let t = table(&values);
        let r = sparsify(&t, &SparsifyConfig::default()).unwrap();
        assert!(r.final_objective <= literal_objective(&values, &[0.0; 4]) + 1e-12);
    }
}
