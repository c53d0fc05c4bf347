mod common;

use common::{c, on_first, on_second, overlap, state_with_schmidt};
use proptest::prelude::*;
use qbc::attack::{
    concealment, identity_report, optimal_cheat_unitary, synthesize_cheat_unitary, verify_binding_failure,
};
use qbc::linalg::{schmidt_decompose, ComplexMatrix, StateVector, C64};
use qbc::sampling::{haar_unitary, random_state};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `exp(-i ε H)` for a random Hermitian `H` with unit operator norm scale,
/// built from its eigendecomposition.
fn small_rotation(n: usize, eps: f64, r: &mut ChaCha8Rng) -> ComplexMatrix {
    let v = haar_unitary(n, r);
    let phases: Vec<C64> = (0..n).map(|_| C64::from_polar(1.0, -eps * r.random_range(-1.0..1.0))).collect();
    &(&v * &ComplexMatrix::diagonal(&phases)) * &v.adjoint()
}

/// Unitaries `[[e^{iα} cos θ, e^{iβ} sin θ], [-e^{-iβ} sin θ, e^{-iα} cos θ]]`
/// on a regular grid; a global phase does not change `|⟨1|(U⊗I)|0⟩|`.
fn su2_grid(steps: usize) -> impl Iterator<Item = ComplexMatrix> {
    use std::f64::consts::{FRAC_PI_2, PI};
    (0..steps).flat_map(move |a| {
        (0..steps).flat_map(move |b| {
            (0..steps).map(move |t| {
                let theta = FRAC_PI_2 * t as f64 / (steps - 1) as f64;
                let alpha = 2.0 * PI * a as f64 / steps as f64;
                let beta = 2.0 * PI * b as f64 / steps as f64;
                let (cs, sn) = (theta.cos(), theta.sin());
                ComplexMatrix::from_rows(&[
                    vec![C64::from_polar(cs, alpha), C64::from_polar(sn, beta)],
                    vec![-C64::from_polar(sn, -beta), C64::from_polar(cs, -alpha)],
                ])
                .unwrap()
            })
        })
    })
}

#[test]
fn bell_to_flipped_bell_is_x_on_alice() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let psi0 = StateVector::new(vec![2, 2], vec![c(h, 0.0), z, z, c(h, 0.0)]).unwrap();
    let psi1 = StateVector::new(vec![2, 2], vec![z, c(h, 0.0), c(h, 0.0), z]).unwrap();
    let report = synthesize_cheat_unitary(&psi0, &psi1, 2, 2).unwrap();
    let moved = on_first(&report.cheat_unitary, &psi0, 2);
    assert!(moved.equals_up_to_phase(&psi1, 1e-10));
    let x = ComplexMatrix::from_rows(&[vec![z, c(1.0, 0.0)], vec![c(1.0, 0.0), z]]).unwrap();
    // U = X up to phase
    let t = (&x.adjoint() * &report.cheat_unitary).trace().norm();
    assert!((t - 2.0).abs() < 1e-10);
}

#[test]
fn bell_pair_fully_degenerate() {
    let mut r = rng(21);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let z = c(0.0, 0.0);
    let psi0 = StateVector::new(vec![2, 2], vec![c(h, 0.0), z, z, c(h, 0.0)]).unwrap();
    for _ in 0..20 {
        let psi1 = on_first(&haar_unitary(2, &mut r), &psi0, 2);
        let report = synthesize_cheat_unitary(&psi0, &psi1, 2, 2).unwrap();
        assert!(report.cheat_fidelity >= 1.0 - 1e-10);
        assert!(overlap(&psi1, &on_first(&report.cheat_unitary, &psi0, 2)) >= 1.0 - 1e-10);
    }
}

#[test]
fn orthogonal_bob_factors_give_zero_fidelity() {
    let mut r = rng(22);
    let a0 = random_state(&[3], &mut r);
    let a1 = random_state(&[3], &mut r);
    let psi0 = a0.tensor(&StateVector::ket(2, 0).unwrap()).unwrap();
    let psi1 = a1.tensor(&StateVector::ket(2, 1).unwrap()).unwrap();
    assert!((concealment(&psi0, &psi1, 3, 2).unwrap() - 1.0).abs() < 1e-12);
    let report = optimal_cheat_unitary(&psi0, &psi1, 3, 2).unwrap();
    assert!(report.cheat_fidelity < 1e-12);
    assert!(synthesize_cheat_unitary(&psi0, &psi1, 3, 2).is_err());
}

#[test]
fn identity_report_measures_the_gap() {
    let mut r = rng(23);
    let psi0 = random_state(&[2, 2], &mut r);
    let psi1 = on_first(&haar_unitary(2, &mut r), &psi0, 2);
    let (ok, residual) = verify_binding_failure(&identity_report(2), &psi0, &psi1).unwrap();
    assert!(!ok);
    assert!(residual > 1e-6);
    let (same, res) = verify_binding_failure(&identity_report(2), &psi0, &psi0).unwrap();
    assert!(same && res < 1e-12);
}

#[test]
fn near_concealing_pairs_against_grid_oracle() {
    // 22^3 = 10648 grid points over SU(2)
    let grid: Vec<ComplexMatrix> = su2_grid(22).collect();
    assert!(grid.len() >= 10_000);
    let mut r = rng(24);
    let eps = 0.01;
    for _ in 0..5 {
        let psi0 = random_state(&[2, 3], &mut r);
        let concealing = on_first(&haar_unitary(2, &mut r), &psi0, 3);
        let psi1 = on_second(&small_rotation(3, eps, &mut r), &concealing, 2);
        let report = optimal_cheat_unitary(&psi0, &psi1, 2, 3).unwrap();
        let best_grid = grid
            .iter()
            .map(|u| overlap(&psi1, &on_first(u, &psi0, 3)))
            .fold(0.0, f64::max);
        assert!(report.cheat_fidelity >= best_grid - 1e-12, "{} < {best_grid}", report.cheat_fidelity);
        // half a grid step is at most 0.15 rad on each phase axis and 0.04 on θ,
        // which costs at most about 0.025 at second order
        assert!(report.cheat_fidelity - best_grid < 0.025);
        assert!(report.cheat_fidelity >= 1.0 - eps);
        let achieved = overlap(&psi1, &on_first(&report.cheat_unitary, &psi0, 3));
        assert!((achieved - report.cheat_fidelity).abs() < 1e-10);
    }
}

#[test]
fn optimum_beats_random_unitaries() {
    let mut r = rng(25);
    for (da, db) in [(2, 2), (3, 2), (3, 4)] {
        let psi0 = random_state(&[da, db], &mut r);
        let psi1 = random_state(&[da, db], &mut r);
        let best = optimal_cheat_unitary(&psi0, &psi1, da, db).unwrap().cheat_fidelity;
        for _ in 0..1000 {
            let f = overlap(&psi1, &on_first(&haar_unitary(da, &mut r), &psi0, db));
            assert!(f <= best + 1e-12);
        }
    }
}

#[test]
fn threefold_degenerate_block() {
    let mut r = rng(13861839393725909053);
    let psi0 = state_with_schmidt(&[1.0, 1.0, 1.0, 0.5], 4, 4, &mut r);
    let psi1 = on_first(&haar_unitary(4, &mut r), &psi0, 4);
    let report = synthesize_cheat_unitary(&psi0, &psi1, 4, 4).unwrap();
    assert_eq!(report.degenerate_blocks, 1);
    assert!(report.cheat_fidelity >= 1.0 - 1e-10, "{}", report.cheat_fidelity);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn concealing_pairs_are_not_binding(seed in any::<u64>(), shape in 0usize..4, degenerate in any::<bool>()) {
        let (da, db) = [(2, 2), (2, 4), (3, 3), (4, 4)][shape];
        let mut r = rng(seed);
        let psi0 = if degenerate {
            let n = da.min(db);
            let mut coeffs = vec![1.0; n];
            coeffs[n - 1] = 0.5;
            state_with_schmidt(&coeffs, da, db, &mut r)
        } else {
            random_state(&[da, db], &mut r)
        };
        let psi1 = on_first(&haar_unitary(da, &mut r), &psi0, db);
        prop_assert!(concealment(&psi0, &psi1, da, db).unwrap() < 1e-10);
        let report = synthesize_cheat_unitary(&psi0, &psi1, da, db).unwrap();
        prop_assert!(report.cheat_unitary.is_unitary(1e-10));
        prop_assert!(report.cheat_fidelity >= 1.0 - 1e-8);
        let (ok, residual) = verify_binding_failure(&report, &psi0, &psi1).unwrap();
        prop_assert!(ok, "residual {}", residual);
        let s0 = schmidt_decompose(&psi0, da, db).unwrap();
        let s1 = schmidt_decompose(&psi1, da, db).unwrap();
        for (a, b) in s0.coefficients.iter().zip(&s1.coefficients) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn optimal_fidelity_is_achieved(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let mut r = rng(seed);
        let psi0 = random_state(&[da, db], &mut r);
        let psi1 = random_state(&[da, db], &mut r);
        let report = optimal_cheat_unitary(&psi0, &psi1, da, db).unwrap();
        prop_assert!(report.cheat_unitary.is_unitary(1e-10));
        let achieved = overlap(&psi1, &on_first(&report.cheat_unitary, &psi0, db));
        prop_assert!((achieved - report.cheat_fidelity).abs() < 1e-10);
        prop_assert!(report.cheat_fidelity <= 1.0 + 1e-12);
    }
}
