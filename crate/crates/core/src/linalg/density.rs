use std::ops::Range;

use super::matrix::{group_blocks, hermitian_eigen, ComplexMatrix, C64};
use super::state::{complement, normalize_positions, offsets};
use super::DEGENERACY_TOL;
use crate::error::{Error, Result};

/// Tolerance used when validating density operators.
pub const DENSITY_TOL: f64 = 1e-12;

/// Tolerance for accepting a matrix as Hermitian in spectral routines.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Positive semidefinite, unit-trace, Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::shape("density operator must be square"));
        }
        if !matrix.is_hermitian(DENSITY_TOL) {
            return Err(Error::domain("density operator must be Hermitian"));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
            return Err(Error::domain(format!("density operator trace is {tr}, not 1")));
        }
        let (values, _) = hermitian_eigen(&matrix);
        if let Some(&min) = values.last() {
            if min < -DENSITY_TOL {
                return Err(Error::domain(format!(
                    "density operator has negative eigenvalue {min:e}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    /// Maximally mixed state `I/d`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new_unchecked(ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)))
    }

    /// Convex combination `Σ p_k ρ_k`; weights must sum to one.
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::domain("empty mixture"))?;
        let dim = first.1.dim();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        let mut total = 0.0;
        for (p, rho) in parts {
            if rho.dim() != dim {
                return Err(Error::shape("mixture components have different dimensions"));
            }
            if *p < 0.0 {
                return Err(Error::domain("mixture weights must be nonnegative"));
            }
            total += p;
            acc = &acc + &rho.matrix.scale(C64::new(*p, 0.0));
        }
        if (total - 1.0).abs() > DENSITY_TOL {
            return Err(Error::domain(format!("mixture weights sum to {total}")));
        }
        Ok(Self::new_unchecked(acc))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// `U ρ U†`
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.rows() != self.dim() || !u.is_square() {
            return Err(Error::shape("conjugating unitary has the wrong dimension"));
        }
        Ok(Self::new_unchecked(&(u * &self.matrix) * &u.adjoint()))
    }

    /// Sets all off-diagonal entries to zero (complete dephasing in the
    /// computational basis of the listed subsystems of `dims`).
    pub fn dephase(&self, dims: &[usize], positions: &[usize]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.dim() {
            return Err(Error::shape("dims do not match the operator dimension"));
        }
        let st = super::state::strides(dims);
        let digit = |idx: usize, p: usize| (idx / st[p]) % dims[p];
        let m = ComplexMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            if positions.iter().all(|&p| digit(i, p) == digit(j, p)) {
                self.matrix.get(i, j)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(Self::new_unchecked(m))
    }
}

/// Reduced operator on the factors listed in `keep` (sorted ascending).
pub fn partial_trace(rho: &DensityOperator, dims: &[usize], keep: &[usize]) -> Result<DensityOperator> {
    if dims.iter().product::<usize>() != rho.dim() {
        return Err(Error::shape(format!(
            "dims {dims:?} do not factor a {}-dimensional operator",
            rho.dim()
        )));
    }
    let keep = normalize_positions(keep, dims.len())?;
    let traced = complement(dims.len(), &keep);
    let keep_off = offsets(dims, &keep);
    let trace_off = offsets(dims, &traced);
    let n = keep_off.len();
    let m = ComplexMatrix::from_fn(n, n, |i, j| {
        trace_off
            .iter()
            .map(|t| rho.matrix.get(keep_off[i] + t, keep_off[j] + t))
            .sum()
    });
    Ok(DensityOperator::new_unchecked(m))
}

/// `½ Σ |λ_k(ρ − σ)|`, clamped to `[0, 1]`.
pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::shape(format!(
            "trace distance between {}- and {}-dimensional operators",
            rho.dim(),
            sigma.dim()
        )));
    }
    // fixed operand order so that swapping the arguments is bit-for-bit symmetric
    let key = |m: &ComplexMatrix| m.data().iter().map(|z| (z.re, z.im)).collect::<Vec<_>>();
    let (a, b) = match key(rho.matrix()).partial_cmp(&key(sigma.matrix())) {
        Some(std::cmp::Ordering::Greater) => (sigma, rho),
        _ => (rho, sigma),
    };
    Ok((0.5 * trace_norm(&(a.matrix() - b.matrix()))?).clamp(0.0, 1.0))
}

/// `Σ |λ_k|` of a Hermitian matrix.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    if !m.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::domain("trace norm requires a Hermitian matrix"));
    }
    let (values, _) = hermitian_eigen(m);
    Ok(values.iter().map(|v| v.abs()).sum())
}

/// Eigenvalues (nonincreasing), eigenvectors, and degenerate eigenspaces.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, matching `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
    /// Index ranges of eigenvalues equal within the degeneracy tolerance.
    pub blocks: Vec<Range<usize>>,
}

pub fn spectral_decompose(rho: &DensityOperator) -> SpectralDecomposition {
    spectral_unchecked(rho.matrix())
}

/// Spectral decomposition of an arbitrary Hermitian matrix.
pub fn spectral_decompose_hermitian(m: &ComplexMatrix) -> Result<SpectralDecomposition> {
    if !m.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::domain("spectral decomposition requires a Hermitian matrix"));
    }
    Ok(spectral_unchecked(m))
}

fn spectral_unchecked(m: &ComplexMatrix) -> SpectralDecomposition {
    let (eigenvalues, eigenvectors) = hermitian_eigen(m);
    let blocks = group_blocks(&eigenvalues, DEGENERACY_TOL);
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        blocks,
    }
}

/// Optimal two-outcome discrimination of `rho0` vs `rho1` with equal priors.
#[derive(Clone, Debug)]
pub struct HelstromMeasurement {
    /// Projector for guessing 0.
    pub guess0: ComplexMatrix,
    /// Projector for guessing 1 (positive eigenspace of `rho1 − rho0`).
    pub guess1: ComplexMatrix,
    /// `(1 + D)/2` with `D` the trace distance.
    pub success_probability: f64,
}

pub fn helstrom_measurement(rho0: &DensityOperator, rho1: &DensityOperator) -> Result<HelstromMeasurement> {
    let distance = trace_distance(rho0, rho1)?;
    let (values, vectors) = hermitian_eigen(&(rho1.matrix() - rho0.matrix()));
    let n = rho0.dim();
    let mut guess1 = ComplexMatrix::zeros(n, n);
    for (k, v) in values.iter().enumerate() {
        if *v > 0.0 {
            let col = vectors.column(k);
            guess1 = &guess1 + &ComplexMatrix::outer(&col, &col);
        }
    }
    let guess0 = &ComplexMatrix::identity(n) - &guess1;
    Ok(HelstromMeasurement {
        guess0,
        guess1,
        success_probability: 0.5 * (1.0 + distance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StateVector;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn bell() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(vec![2, 2], vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap()
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let rho = bell().projector();
        let red = partial_trace(&rho, &[2, 2], &[1]).unwrap();
        assert!(red.matrix().max_abs_diff(DensityOperator::maximally_mixed(2).matrix()) < 1e-15);
    }

    #[test]
    fn product_state_marginal() {
        let a = StateVector::new(vec![2], vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let b = StateVector::new(vec![3], vec![c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let rho = a.tensor(&b).unwrap().projector();
        let red = partial_trace(&rho, &[2, 3], &[0]).unwrap();
        assert!(red.matrix().max_abs_diff(a.projector().matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_shape_error() {
        let rho = bell().projector();
        assert!(matches!(partial_trace(&rho, &[2, 3], &[0]), Err(Error::Shape(_))));
        assert!(partial_trace(&rho, &[2, 2], &[]).is_err());
    }

    #[test]
    fn trace_distance_basics() {
        let zero = StateVector::ket(2, 0).unwrap().projector();
        let one = StateVector::ket(2, 1).unwrap().projector();
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-15);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-15);
        assert!(trace_distance(&zero, &DensityOperator::maximally_mixed(3)).is_err());
    }

    #[test]
    fn scalar_matrix_is_one_degenerate_block() {
        let dec = spectral_decompose(&DensityOperator::maximally_mixed(3));
        assert_eq!(dec.blocks, vec![0..3]);
        assert!(dec.eigenvalues.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn pure_projector_spectrum() {
        let psi = StateVector::new(vec![3], vec![c(0.6, 0.0), c(0.0, 0.0), c(0.0, 0.8)]).unwrap();
        let dec = spectral_decompose(&psi.projector());
        assert!((dec.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!(dec.eigenvalues[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn validation_rejects_bad_operators() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.2, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-0.2, 0.0)]])
            .unwrap();
        assert!(matches!(DensityOperator::new(m), Err(Error::Domain(_))));
        let non_herm =
            ComplexMatrix::from_rows(&[vec![c(0.5, 0.0), c(0.1, 0.0)], vec![c(0.0, 0.0), c(0.5, 0.0)]])
                .unwrap();
        assert!(DensityOperator::new(non_herm.clone()).is_err());
        assert!(spectral_decompose_hermitian(&non_herm).is_err());
    }

    #[test]
    fn helstrom_on_orthogonal_states_is_perfect() {
        let zero = StateVector::ket(2, 0).unwrap().projector();
        let one = StateVector::ket(2, 1).unwrap().projector();
        let h = helstrom_measurement(&zero, &one).unwrap();
        assert!((h.success_probability - 1.0).abs() < 1e-15);
        assert!((h.guess1.get(1, 1).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dephase_kills_coherences() {
        let rho = bell().projector();
        let d = rho.dephase(&[2, 2], &[0]).unwrap();
        assert!(d.matrix().get(0, 3).norm() < 1e-15);
        assert!((d.matrix().get(0, 0).re - 0.5).abs() < 1e-15);
    }
}
