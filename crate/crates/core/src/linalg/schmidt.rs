use std::ops::Range;

use super::matrix::{group_blocks, svd, ComplexMatrix, C64, ZERO};
use super::state::StateVector;
use super::DEGENERACY_TOL;
use crate::error::{Error, Result};

/// `|ψ⟩ = Σ_i s_i |a_i⟩|b_i⟩` with `s_i = √c_i` nonincreasing.
#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    /// Schmidt coefficients `√c_i`, `min(dim_a, dim_b)` of them.
    pub coefficients: Vec<f64>,
    /// `dim_a × r` matrix whose columns are `|a_i⟩`.
    pub basis_a: ComplexMatrix,
    /// `dim_b × r` matrix whose columns are `|b_i⟩`.
    pub basis_b: ComplexMatrix,
}

impl SchmidtDecomposition {
    pub fn dim_a(&self) -> usize {
        self.basis_a.rows()
    }

    pub fn dim_b(&self) -> usize {
        self.basis_b.rows()
    }

    /// Weights `c_i = s_i²`.
    pub fn weights(&self) -> Vec<f64> {
        self.coefficients.iter().map(|s| s * s).collect()
    }

    /// Number of coefficients above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.coefficients.iter().take_while(|&&s| s > tol).count()
    }

    /// Degenerate blocks of equal coefficients (within the degeneracy tolerance).
    pub fn blocks(&self) -> Vec<Range<usize>> {
        group_blocks(&self.coefficients, DEGENERACY_TOL)
    }

    /// `Σ_i s_i |a_i⟩ ⊗ |b_i⟩` as a flat amplitude vector.
    pub fn reconstruct(&self) -> Vec<C64> {
        let (da, db) = (self.dim_a(), self.dim_b());
        let mut out = vec![ZERO; da * db];
        for (k, s) in self.coefficients.iter().enumerate() {
            for i in 0..da {
                let a = self.basis_a.get(i, k) * s;
                for j in 0..db {
                    out[i * db + j] += a * self.basis_b.get(j, k);
                }
            }
        }
        out
    }
}

/// Reshapes a bipartite state into its `dim_a × dim_b` coefficient matrix.
pub(crate) fn coefficient_matrix(psi: &StateVector, dim_a: usize, dim_b: usize) -> Result<ComplexMatrix> {
    if dim_a * dim_b != psi.len() {
        return Err(Error::shape(format!(
            "{dim_a}x{dim_b} split does not match a state of length {}",
            psi.len()
        )));
    }
    ComplexMatrix::new(dim_a, dim_b, psi.amplitudes().to_vec())
}

pub fn schmidt_decompose(psi: &StateVector, dim_a: usize, dim_b: usize) -> Result<SchmidtDecomposition> {
    let norm_sqr = psi.norm_sqr();
    if (norm_sqr - 1.0).abs() > 1e-10 {
        return Err(Error::domain(format!(
            "Schmidt decomposition needs a normalized state (squared norm {norm_sqr})"
        )));
    }
    let m = coefficient_matrix(psi, dim_a, dim_b)?;
    let (u, s, v) = svd(&m);
    // M = U Σ V†, so |b_i⟩ has components conj(V[j, i]).
    let basis_b = ComplexMatrix::from_fn(dim_b, s.len(), |j, i| v.get(j, i).conj());
    Ok(SchmidtDecomposition {
        coefficients: s,
        basis_a: u,
        basis_b,
    })
}
