#![allow(dead_code)]

use qbc::linalg::{ComplexMatrix, StateVector, C64};
use qbc::sampling::{haar_unitary, random_state, random_weights};
use rand::Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn literal(z: C64) -> String {
    format!("({:e} + {:e}*i)", z.re, z.im)
}

pub fn matrix_literal(m: &ComplexMatrix) -> String {
    let rows: Vec<String> = (0..m.rows())
        .map(|i| {
            let cells: Vec<String> = (0..m.cols()).map(|j| literal(m.get(i, j))).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

pub fn vector_literal(s: &StateVector) -> String {
    let cells: Vec<String> = s.amplitudes().iter().map(|z| literal(*z)).collect();
    format!("[{}]", cells.join(", "))
}

/// A one-round two-party script with random states, unitaries, bases and
/// choice weights. Bob holds the channel qubit between the two sends, chooses
/// among two or three actions, and may condition a second step on the first.
/// With both parties purified the register stays at or below dimension 64.
pub fn random_script<R: Rng>(rng: &mut R) -> String {
    let mut s = String::from("rounds 1\n");
    let pre = random_state(&[2, 2], rng);
    s.push_str(&format!("state pre = {} dims 2,2\n", vector_literal(&pre)));
    for name in ["U", "V", "W"] {
        s.push_str(&format!("unitary {name} = {}\n", matrix_literal(&haar_unitary(2, rng))));
    }
    for name in ["P", "Q"] {
        s.push_str(&format!(
            "observable {name} = basis {} labels p q\n",
            matrix_literal(&haar_unitary(2, rng))
        ));
    }
    s.push_str("prepare A a,c pre\n");
    if rng.random_bool(0.5) {
        s.push_str("apply A U a\n");
    }
    s.push_str("send c A B\n");
    let arms = if rng.random_bool(0.5) { 2 } else { 3 };
    let w = random_weights(arms, 0.1, rng);
    let weights: Vec<String> = w.iter().map(|x| format!("{x:e}")).collect();
    let ops = ["u: measure P c -> m", "v: apply V c", "w: measure Q c -> m"];
    let chosen: Vec<&str> = if arms == 2 { vec![ops[0], ops[2]] } else { ops.to_vec() };
    s.push_str(&format!("choose B k weights [{}] {{ {} }}\n", weights.join(", "), chosen.join(" | ")));
    let with_case = rng.random_bool(0.5);
    if with_case {
        let keys = if arms == 2 { ["u", "w"] } else { ["u", "v"] };
        s.push_str(&format!(
            "case B k {{ {}: apply W c | {}: measure P c -> n }}\n",
            keys[0], keys[1]
        ));
    }
    s.push_str("send c B A\n");
    // a three-level die leaves room for only one more pointer under 64
    if !(arms == 3 && with_case) && rng.random_bool(0.5) {
        s.push_str("measure A Q a -> r\n");
    }
    s
}

/// `Σ_i s_i |a_i⟩|b_i⟩` with Haar-random local bases. `coeffs` need not be
/// normalized or sorted; repeats give degenerate Schmidt blocks.
pub fn state_with_schmidt<R: Rng>(coeffs: &[f64], da: usize, db: usize, rng: &mut R) -> StateVector {
    let ua = haar_unitary(da, rng);
    let ub = haar_unitary(db, rng);
    let mut amps = vec![C64::new(0.0, 0.0); da * db];
    for (k, s) in coeffs.iter().enumerate() {
        for i in 0..da {
            for j in 0..db {
                amps[i * db + j] += ua.get(i, k) * ub.get(j, k) * *s;
            }
        }
    }
    StateVector::from_unnormalized(vec![da, db], amps).unwrap()
}

/// `(U ⊗ I)|ψ⟩` computed by hand from the amplitude layout.
pub fn on_first(u: &ComplexMatrix, psi: &StateVector, db: usize) -> StateVector {
    let da = u.rows();
    let mut amps = vec![C64::new(0.0, 0.0); da * db];
    for i in 0..da {
        for k in 0..da {
            for j in 0..db {
                amps[i * db + j] += u.get(i, k) * psi.amplitudes()[k * db + j];
            }
        }
    }
    StateVector::new(psi.dims().to_vec(), amps).unwrap()
}

/// `(I ⊗ U)|ψ⟩`.
pub fn on_second(u: &ComplexMatrix, psi: &StateVector, da: usize) -> StateVector {
    let db = u.rows();
    let mut amps = vec![C64::new(0.0, 0.0); da * db];
    for i in 0..da {
        for j in 0..db {
            for k in 0..db {
                amps[i * db + j] += u.get(j, k) * psi.amplitudes()[i * db + k];
            }
        }
    }
    StateVector::new(psi.dims().to_vec(), amps).unwrap()
}

/// `|⟨φ|ψ⟩|`
pub fn overlap(phi: &StateVector, psi: &StateVector) -> f64 {
    phi.amplitudes().iter().zip(psi.amplitudes()).map(|(a, b)| a.conj() * b).sum::<C64>().norm()
}
