mod common;

use std::collections::BTreeMap;

use common::c;
use proptest::prelude::*;
use qbc::engine::{
    apply_unitary, embed_operator, measure_projective, measurement_unitary, outcome_distribution, purify_choice, purify_conditional,
    purify_measurement, reduced_on, reduced_state, ObservableSpec, Party, Register,
};
use qbc::linalg::{
    partial_trace, schmidt_decompose, tensor_product, trace_distance, ComplexMatrix, DensityOperator, StateVector, C64,
};
use qbc::sampling::{haar_unitary, random_state, random_weights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_observable(dim: usize, rng: &mut ChaCha8Rng) -> ObservableSpec {
    let labels = (0..dim).map(|k| format!("o{k}")).collect();
    ObservableSpec::new("O", haar_unitary(dim, rng), labels).unwrap()
}

fn dephase(rho: &ComplexMatrix, obs: &ObservableSpec) -> ComplexMatrix {
    let n = rho.rows();
    obs.projectors()
        .iter()
        .fold(ComplexMatrix::zeros(n, n), |acc, (_, p)| &acc + &(&(p * rho) * p))
}

#[test]
fn kronecker_hand_expansion() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = StateVector::new(vec![2], vec![c(h, 0.0), c(h, 0.0)]).unwrap();
    let up = StateVector::ket(2, 0).unwrap();
    let t = tensor_product(&plus, &up).unwrap();
    let want = [h, 0.0, h, 0.0];
    for (a, w) in t.amplitudes().iter().zip(want) {
        assert!((a - c(w, 0.0)).norm() < 1e-15);
    }
    assert_eq!(t.dims(), &[2, 2]);
}

#[test]
fn bell_marginal_after_choice_matches_mixture() {
    // honest choose-then-measure on the channel of a random state vs the die
    // construction, compared on the channel alone
    let mut r = rng(11);
    for _ in 0..20 {
        let psi = random_state(&[2], &mut r);
        let (x, y) = (ObservableSpec::pauli_x(), ObservableSpec::pauli_y());
        let rho = psi.projector();
        let honest = (&dephase(rho.matrix(), &x) + &dephase(rho.matrix(), &y)).scale(c(0.5, 0.0));
        let reg = Register::new()
            .prepare(&["c"], Party::Bob, &psi)
            .unwrap()
            .append_die("d", &[0.5, 0.5], Party::Bob)
            .unwrap()
            .append_pointer("p", 2, Party::Bob, "X|Y", &["c"])
            .unwrap();
        let mut cases = BTreeMap::new();
        cases.insert(vec![0], measurement_unitary(&x, 2).unwrap());
        cases.insert(vec![1], measurement_unitary(&y, 2).unwrap());
        let out = purify_conditional(&reg, &["d"], &cases, &["c", "p"]).unwrap();
        let got = reduced_on(&out, &["c"]).unwrap();
        assert!(got.matrix().max_abs_diff(&honest) < 1e-12);
    }
}

#[test]
fn eq8_four_case_table() {
    // |d_X>|p_1>|phi>|q_0> picks the (X, p_1) case only
    let mut r = rng(12);
    let phi = random_state(&[2], &mut r);
    let cases: Vec<ComplexMatrix> = (0..4).map(|_| haar_unitary(4, &mut r)).collect();
    let mut table = BTreeMap::new();
    for (k, u) in cases.iter().enumerate() {
        table.insert(vec![k / 2, k % 2], u.clone());
    }
    let reg = Register::new()
        .prepare(&["d"], Party::Bob, &StateVector::ket(2, 0).unwrap())
        .unwrap()
        .prepare(&["p"], Party::Bob, &StateVector::ket(2, 1).unwrap())
        .unwrap()
        .prepare(&["phi"], Party::Channel, &phi)
        .unwrap()
        .prepare(&["q"], Party::Bob, &StateVector::ket(2, 0).unwrap())
        .unwrap();
    let out = purify_conditional(&reg, &["d", "p"], &table, &["phi", "q"]).unwrap();
    let tail = StateVector::new(vec![2, 2], cases[1].mul_vec(phi.tensor(&StateVector::ket(2, 0).unwrap()).unwrap().amplitudes())).unwrap();
    let want = StateVector::ket(2, 0)
        .unwrap()
        .tensor(&StateVector::ket(2, 1).unwrap())
        .unwrap()
        .tensor(&tail)
        .unwrap();
    assert!(out.state().equals_up_to_phase(&want, 1e-12));
}

#[test]
fn conditional_is_linear_in_the_control() {
    let mut r = rng(13);
    let ux = haar_unitary(2, &mut r);
    let uy = haar_unitary(2, &mut r);
    let phi = random_state(&[2], &mut r);
    let mut table = BTreeMap::new();
    table.insert(vec![0], ux.clone());
    table.insert(vec![1], uy.clone());
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let control = StateVector::new(vec![2], vec![c(h, 0.0), c(h, 0.0)]).unwrap();
    let reg = Register::new()
        .prepare(&["d"], Party::Bob, &control)
        .unwrap()
        .prepare(&["phi"], Party::Channel, &phi)
        .unwrap();
    let out = purify_conditional(&reg, &["d"], &table, &["phi"]).unwrap();
    let ax = ux.mul_vec(phi.amplitudes());
    let ay = uy.mul_vec(phi.amplitudes());
    let want: Vec<C64> = ax.iter().chain(&ay).map(|z| z * h).collect();
    for (a, w) in out.state().amplitudes().iter().zip(&want) {
        assert!((a - w).norm() < 1e-12);
    }
}

#[test]
fn missing_case_is_an_error() {
    let reg = Register::new()
        .prepare(&["d", "t"], Party::Bob, &StateVector::basis(&[2, 2], &[0, 0]).unwrap())
        .unwrap();
    let mut table = BTreeMap::new();
    table.insert(vec![0], ComplexMatrix::identity(2));
    assert!(purify_conditional(&reg, &["d"], &table, &["t"]).is_err());
}

#[test]
fn three_spin_choice_on_bell_pair() {
    // the die-pointer-Bell state is a sum of three orthogonal branches
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = StateVector::new(vec![2, 2], vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap();
    let spins = [ObservableSpec::pauli_x(), ObservableSpec::pauli_y(), ObservableSpec::pauli_z()];
    let reg = Register::new()
        .prepare(&["a", "c"], Party::Alice, &bell)
        .unwrap()
        .append_die("d", &[1.0 / 3.0; 3], Party::Bob)
        .unwrap()
        .append_pointer("p", 2, Party::Bob, "spin", &["c"])
        .unwrap();
    let mut table = BTreeMap::new();
    for (k, s) in spins.iter().enumerate() {
        table.insert(vec![k], measurement_unitary(s, 2).unwrap());
    }
    let out = purify_conditional(&reg, &["d"], &table, &["c", "p"]).unwrap();
    let out = out.reordered(&["d", "a", "c", "p"]).unwrap();
    // hand expansion: (1/√3) Σ_k |d_k> (1/√2) Σ_j |e_j^k*>_a |e_j^k>_c |p_j>
    let mut want = vec![c(0.0, 0.0); 24];
    for (k, s) in spins.iter().enumerate() {
        for j in 0..2 {
            let e = s.eigenvector(j);
            for ia in 0..2 {
                for ic in 0..2 {
                    want[k * 8 + ia * 4 + ic * 2 + j] += e[ia].conj() * e[ic] * (h / 3f64.sqrt());
                }
            }
        }
    }
    for (a, w) in out.state().amplitudes().iter().zip(&want) {
        assert!((a - w).norm() < 1e-12, "{a} vs {w}");
    }
}

#[test]
fn honest_and_purified_bob_share_reduced_state() {
    let mut r = rng(14);
    let psi = random_state(&[2, 2], &mut r);
    let obs = ObservableSpec::pauli_x();
    let base = Register::new().prepare(&["a", "c"], Party::Alice, &psi).unwrap().transfer("c", Party::Bob).unwrap();
    let purified = purify_measurement(&base, &obs, &["c"], "p", Party::Bob).unwrap();
    let honest_c = dephase(reduced_on(&base, &["c"]).unwrap().matrix(), &obs);
    let bob = reduced_state(&purified, Party::Bob).unwrap();
    let bob_c = partial_trace(&bob, &[2, 2], &[0]).unwrap();
    assert!(bob_c.matrix().max_abs_diff(&honest_c) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schmidt_reconstructs(seed in any::<u64>(), da in 1usize..5, db in 1usize..5) {
        let mut r = rng(seed);
        let psi = random_state(&[da, db], &mut r);
        let s = schmidt_decompose(&psi, da, db).unwrap();
        let back = s.reconstruct();
        let err: f64 = back.iter().zip(psi.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10);
        prop_assert!(s.coefficients.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn partial_trace_order_independent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = [2, 3, 2];
        let rho = random_state(&dims, &mut r).projector();
        let ab = partial_trace(&rho, &dims, &[0, 1]).unwrap();
        let bc = partial_trace(&rho, &dims, &[1, 2]).unwrap();
        let via_ab = partial_trace(&ab, &[2, 3], &[1]).unwrap();
        let via_bc = partial_trace(&bc, &[3, 2], &[0]).unwrap();
        prop_assert!(via_ab.matrix().max_abs_diff(via_bc.matrix()) < 1e-12);
        prop_assert!((via_ab.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_distance_is_a_metric(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let mix = |r: &mut ChaCha8Rng| {
            let a = random_state(&[n], r).projector();
            let b = random_state(&[n], r).projector();
            let w = random_weights(2, 0.0, r);
            DensityOperator::mixture(&[(w[0], &a), (w[1], &b)]).unwrap()
        };
        let (x, y, z) = (mix(&mut r), mix(&mut r), mix(&mut r));
        let dxy = trace_distance(&x, &y).unwrap();
        prop_assert_eq!(dxy, trace_distance(&y, &x).unwrap());
        prop_assert!(dxy <= trace_distance(&x, &z).unwrap() + trace_distance(&z, &y).unwrap() + 1e-10);
        let u = haar_unitary(n, &mut r);
        let rotated = trace_distance(&x.conjugate_by(&u).unwrap(), &y.conjugate_by(&u).unwrap()).unwrap();
        prop_assert!((rotated - dxy).abs() < 1e-10);
    }

    #[test]
    fn pointer_readout_matches_projective_measurement(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let psi = random_state(&[n, 2], &mut r);
        let obs = random_observable(n, &mut r);
        let reg = Register::new().prepare(&["s", "e"], Party::Alice, &psi).unwrap();
        let direct = outcome_distribution(&reg, &obs, &["s"]).unwrap();
        let purified = purify_measurement(&reg, &obs, &["s"], "p", Party::Alice).unwrap();
        let pointer = reduced_on(&purified, &["p"]).unwrap();
        for (k, (_, p)) in direct.iter().enumerate() {
            prop_assert!((pointer.matrix().get(k, k).re - p).abs() < 1e-12);
        }
        // tracing the pointer equals the unrecorded measurement
        let avg = dephase(reg.state().projector().matrix(), &{
            let id = ComplexMatrix::identity(2);
            let b = obs.eigenbasis().kron(&id).unwrap();
            let labels = (0..2 * n).map(|k| format!("{}", k / 2)).collect();
            ObservableSpec::new("O", b, labels).unwrap()
        });
        let traced = reduced_on(&purified, &["s", "e"]).unwrap();
        prop_assert!(traced.matrix().max_abs_diff(&avg) < 1e-12);
        prop_assert!((purified.state().norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deferred_choice_equals_mixture(seed in any::<u64>(), k in 1usize..4) {
        let mut r = rng(seed);
        let psi = random_state(&[2, 2], &mut r);
        let branches: Vec<ComplexMatrix> = (0..k).map(|_| haar_unitary(2, &mut r)).collect();
        let w = random_weights(k, 0.0, &mut r);
        let reg = Register::new().prepare(&["a", "c"], Party::Alice, &psi).unwrap();
        let out = purify_choice(&reg, &["c"], &branches, &w, "d", Party::Bob).unwrap();
        let traced = reduced_on(&out, &["a", "c"]).unwrap();
        let mut mix = ComplexMatrix::zeros(4, 4);
        for (u, wk) in branches.iter().zip(&w) {
            let branch = apply_unitary(&reg, u, &["c"]).unwrap();
            mix = &mix + &branch.state().projector().matrix().scale(c(*wk, 0.0));
        }
        prop_assert!(traced.matrix().max_abs_diff(&mix) < 1e-12);
        // measuring the die instead gives the same operator, branch by branch
        let die = reduced_on(&out, &["d"]).unwrap();
        for (j, wk) in w.iter().enumerate() {
            prop_assert!((die.matrix().get(j, j).re - wk).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_measurements_commute(seed in any::<u64>()) {
        let mut r = rng(seed);
        let psi = random_state(&[2, 3], &mut r);
        let oa = random_observable(2, &mut r);
        let ob = random_observable(3, &mut r);
        let dims = [2, 3];
        let project = |v: &[C64], p: &ComplexMatrix, pos: usize| {
            embed_operator(p, &dims, &[pos]).unwrap().mul_vec(v)
        };
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        for (la, pa) in oa.projectors() {
            for (lb, pb) in ob.projectors() {
                let a_first = project(&project(psi.amplitudes(), &pa, 0), &pb, 1);
                let b_first = project(&project(psi.amplitudes(), &pb, 1), &pa, 0);
                prop_assert!((norm(&a_first) - norm(&b_first)).abs() < 1e-12, "{la} {lb}");
            }
        }
    }
}

#[test]
fn measure_projective_collapses() {
    let mut r = rng(15);
    let reg = Register::new().prepare(&["q"], Party::Bob, &StateVector::ket(2, 0).unwrap()).unwrap();
    let (after, rec) = measure_projective(&reg, &ObservableSpec::pauli_x(), &["q"], &mut r).unwrap();
    assert!((rec.probability - 0.5).abs() < 1e-15);
    assert!((after.state().norm_sqr() - 1.0).abs() < 1e-15);
}
