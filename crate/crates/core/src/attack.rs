//! Concealment and the cheating unitary.
//!
//! If Bob's reduced operators for the two commitment states agree, the two
//! global states share Schmidt coefficients and Bob-side Schmidt subspaces,
//! so a unitary on Alice's side alone maps one onto the other.

use crate::error::{Error, Result};
use crate::linalg::{
    coefficient_matrix, complete_orthonormal, partial_trace, polar_unitary, schmidt_decompose, svd,
    trace_distance, ComplexMatrix, StateVector, C64,
};

/// Default trace-distance threshold separating the exact construction from
/// the nonideal one.
pub const CONCEALMENT_THRESHOLD: f64 = 1e-8;

/// Residual below which a cheat counts as successful.
pub const BINDING_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct CheatReport {
    /// Trace distance between Bob's reduced operators.
    pub concealment: f64,
    /// Unitary on Alice's space.
    pub cheat_unitary: ComplexMatrix,
    /// `|⟨1|(U ⊗ I)|0⟩|`.
    pub cheat_fidelity: f64,
    /// Number of Schmidt blocks of size > 1 with nonzero coefficient.
    pub degenerate_blocks: usize,
}

fn check_pair(psi0: &StateVector, psi1: &StateVector, dim_a: usize, dim_b: usize) -> Result<()> {
    for (name, psi) in [("psi0", psi0), ("psi1", psi1)] {
        if psi.len() != dim_a * dim_b {
            return Err(Error::shape(format!(
                "{name} has {} amplitudes, expected {dim_a}x{dim_b}",
                psi.len()
            )));
        }
    }
    Ok(())
}

fn bob_marginal(psi: &StateVector, dim_a: usize, dim_b: usize) -> Result<crate::linalg::DensityOperator> {
    partial_trace(&psi.projector(), &[dim_a, dim_b], &[1])
}

/// Trace distance between `Tr_A |0⟩⟨0|` and `Tr_A |1⟩⟨1|`.
pub fn concealment(psi0: &StateVector, psi1: &StateVector, dim_a: usize, dim_b: usize) -> Result<f64> {
    check_pair(psi0, psi1, dim_a, dim_b)?;
    trace_distance(&bob_marginal(psi0, dim_a, dim_b)?, &bob_marginal(psi1, dim_a, dim_b)?)
}

/// `(U ⊗ I)|ψ⟩` for `U` on the first factor of a `dim_a × dim_b` split.
pub fn apply_on_a(u: &ComplexMatrix, psi: &StateVector, dim_a: usize, dim_b: usize) -> Result<StateVector> {
    if u.rows() != dim_a || !u.is_square() {
        return Err(Error::shape(format!("{}x{} operator on a {dim_a}-dimensional factor", u.rows(), u.cols())));
    }
    let m = coefficient_matrix(psi, dim_a, dim_b)?;
    let out = u * &m;
    Ok(StateVector::new_unchecked(vec![dim_a, dim_b], out.data().to_vec()))
}

/// Rotates `u` so that `⟨1|(U ⊗ I)|0⟩` is real and nonnegative; returns the
/// rotated unitary and the fidelity.
fn fix_phase(u: ComplexMatrix, psi0: &StateVector, psi1: &StateVector, dim_a: usize, dim_b: usize) -> Result<(ComplexMatrix, f64)> {
    let moved = apply_on_a(&u, psi0, dim_a, dim_b)?;
    let overlap = psi1.inner(&moved)?;
    let norm = overlap.norm();
    if norm == 0.0 {
        return Ok((u, 0.0));
    }
    let phase = overlap.conj() / norm;
    Ok((u.scale(phase), norm.min(1.0)))
}

pub fn synthesize_cheat_unitary(psi0: &StateVector, psi1: &StateVector, dim_a: usize, dim_b: usize) -> Result<CheatReport> {
    synthesize_cheat_unitary_with_threshold(psi0, psi1, dim_a, dim_b, CONCEALMENT_THRESHOLD)
}

/// Exact construction: maps Alice's Schmidt vectors of `psi0` onto those of
/// `psi1`, aligning degenerate blocks through the unitary factor of the
/// Bob-side overlap matrix, then completes the map on the orthogonal
/// complement by Gram-Schmidt over the standard basis.
pub fn synthesize_cheat_unitary_with_threshold(
    psi0: &StateVector,
    psi1: &StateVector,
    dim_a: usize,
    dim_b: usize,
    threshold: f64,
) -> Result<CheatReport> {
    let distance = concealment(psi0, psi1, dim_a, dim_b)?;
    if distance > threshold {
        return Err(Error::NotConcealing { distance, threshold });
    }
    let s0 = schmidt_decompose(psi0, dim_a, dim_b)?;
    let s1 = schmidt_decompose(psi1, dim_a, dim_b)?;
    let blocks = s0.blocks();
    let rank = s0.coefficients.len();

    // |b'_j⟩ = Σ_k O_kj |b_k⟩ inside a block, hence |a''_k⟩ = Σ_j O_kj |a'_j⟩.
    let mut targets = ComplexMatrix::zeros(dim_a, rank);
    for block in &blocks {
        let n = block.len();
        let overlap = ComplexMatrix::from_fn(n, n, |k, j| {
            let (bk, bj) = (block.start + k, block.start + j);
            (0..dim_b)
                .map(|x| s0.basis_b.get(x, bk).conj() * s1.basis_b.get(x, bj))
                .sum()
        });
        let w = polar_unitary(&overlap);
        for k in 0..n {
            for row in 0..dim_a {
                let v: C64 = (0..n)
                    .map(|j| w.get(k, j) * s1.basis_a.get(row, block.start + j))
                    .sum();
                targets.set(row, block.start + k, v);
            }
        }
    }

    let source = &s0.basis_a;
    let full_source = hstack(source, &complete_orthonormal(source, 1e-8));
    let full_target = hstack(&targets, &complete_orthonormal(&targets, 1e-8));
    if full_source.cols() != dim_a || full_target.cols() != dim_a {
        return Err(Error::domain("could not complete the Schmidt bases to full bases"));
    }
    let raw = &full_target * &full_source.adjoint();
    let u = polar_unitary(&raw);
    let (u, fidelity) = fix_phase(u, psi0, psi1, dim_a, dim_b)?;
    let degenerate_blocks = blocks
        .iter()
        .filter(|b| b.len() > 1 && s0.coefficients[b.start] > 1e-10)
        .count();
    Ok(CheatReport {
        concealment: distance,
        cheat_unitary: u,
        cheat_fidelity: fidelity,
        degenerate_blocks,
    })
}

fn hstack(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows(), a.cols() + b.cols(), |i, j| {
        if j < a.cols() {
            a.get(i, j)
        } else {
            b.get(i, j - a.cols())
        }
    })
}

/// Unitary on Alice's side maximizing `|⟨1|(U ⊗ I)|0⟩|` for an arbitrary
/// pair. With `M0`, `M1` the coefficient matrices, the overlap is
/// `Tr(U X)` for `X = M0 M1†`; writing `X = W Σ V†`, the optimum is
/// `U = V W†` with value `Σ σ_i`.
pub fn optimal_cheat_unitary(psi0: &StateVector, psi1: &StateVector, dim_a: usize, dim_b: usize) -> Result<CheatReport> {
    let distance = concealment(psi0, psi1, dim_a, dim_b)?;
    let m0 = coefficient_matrix(psi0, dim_a, dim_b)?;
    let m1 = coefficient_matrix(psi1, dim_a, dim_b)?;
    let x = &m0 * &m1.adjoint();
    let (w, sigma, v) = svd(&x);
    let u = &v * &w.adjoint();
    let (u, fidelity) = fix_phase(u, psi0, psi1, dim_a, dim_b)?;
    debug_assert!((fidelity - sigma.iter().sum::<f64>().min(1.0)).abs() < 1e-8);
    let s0 = schmidt_decompose(psi0, dim_a, dim_b)?;
    let degenerate_blocks = s0
        .blocks()
        .iter()
        .filter(|b| b.len() > 1 && s0.coefficients[b.start] > 1e-10)
        .count();
    Ok(CheatReport {
        concealment: distance,
        cheat_unitary: u,
        cheat_fidelity: fidelity,
        degenerate_blocks,
    })
}

/// Recomputes `(U ⊗ I)|0⟩` and its phase-invariant distance to `|1⟩`.
/// Returns `(residual ≤ 1e-8, residual)`.
pub fn verify_binding_failure(report: &CheatReport, psi0: &StateVector, psi1: &StateVector) -> Result<(bool, f64)> {
    let dim_a = report.cheat_unitary.rows();
    if dim_a == 0 || !psi0.len().is_multiple_of(dim_a) {
        return Err(Error::shape("cheat unitary does not divide the state dimension"));
    }
    let dim_b = psi0.len() / dim_a;
    check_pair(psi0, psi1, dim_a, dim_b)?;
    let moved = apply_on_a(&report.cheat_unitary, psi0, dim_a, dim_b)?;
    let flat0 = StateVector::new_unchecked(vec![psi1.len()], moved.amplitudes().to_vec());
    let flat1 = StateVector::new_unchecked(vec![psi1.len()], psi1.amplitudes().to_vec());
    let residual = flat0.phase_distance(&flat1)?;
    Ok((residual <= BINDING_TOL, residual))
}

/// Identity report, useful as a baseline for [`verify_binding_failure`].
pub fn identity_report(dim_a: usize) -> CheatReport {
    CheatReport {
        concealment: 0.0,
        cheat_unitary: ComplexMatrix::identity(dim_a),
        cheat_fidelity: if dim_a > 0 { 1.0 } else { 0.0 },
        degenerate_blocks: 0,
    }
}
