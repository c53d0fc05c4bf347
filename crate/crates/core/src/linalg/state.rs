use std::fmt;

use super::density::DensityOperator;
use super::matrix::{checked_dim, ComplexMatrix, C64, DEFAULT_MAX_DIMENSION, ONE, ZERO};
use crate::error::{Error, Result};

/// Normalization tolerance for state vectors.
pub const NORM_TOL: f64 = 1e-12;

/// Normalized amplitude vector over an ordered tensor factorization.
///
/// Subsystem 0 is the leftmost, slowest-varying factor.
#[derive(Clone, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(dims: Vec<usize>, amplitudes: Vec<C64>) -> Result<Self> {
        let state = Self::check_shape(dims, amplitudes)?;
        let norm_sqr = state.norm_sqr();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!(
                "state is not normalized (squared norm {norm_sqr})"
            )));
        }
        Ok(state)
    }

    /// Normalizes the given amplitudes; fails only for the zero vector.
    pub fn from_unnormalized(dims: Vec<usize>, amplitudes: Vec<C64>) -> Result<Self> {
        let mut state = Self::check_shape(dims, amplitudes)?;
        let norm = state.norm_sqr().sqrt();
        if norm < 1e-300 {
            return Err(Error::domain("cannot normalize the zero vector"));
        }
        state.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(state)
    }

    pub(crate) fn new_unchecked(dims: Vec<usize>, amplitudes: Vec<C64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), amplitudes.len());
        Self { dims, amplitudes }
    }

    fn check_shape(dims: Vec<usize>, amplitudes: Vec<C64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::shape("subsystem dimensions must be positive"));
        }
        let total: usize = dims.iter().product();
        if total != amplitudes.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} need {total} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("amplitudes must be finite"));
        }
        Ok(Self { dims, amplitudes })
    }

    /// Computational basis state `|levels⟩`.
    pub fn basis(dims: &[usize], levels: &[usize]) -> Result<Self> {
        if dims.len() != levels.len() {
            return Err(Error::shape("one level per subsystem required"));
        }
        if let Some((l, d)) = levels.iter().zip(dims).find(|(l, d)| l >= d) {
            return Err(Error::shape(format!("level {l} out of range for dimension {d}")));
        }
        let total: usize = dims.iter().product();
        let index = levels
            .iter()
            .zip(strides(dims))
            .map(|(l, s)| l * s)
            .sum::<usize>();
        let mut amplitudes = vec![ZERO; total];
        amplitudes[index] = ONE;
        Ok(Self::new_unchecked(dims.to_vec(), amplitudes))
    }

    /// Single-subsystem basis ket `|k⟩` of dimension `dim`.
    pub fn ket(dim: usize, k: usize) -> Result<Self> {
        Self::basis(&[dim], &[k])
    }

    /// The empty product: dimension 1, amplitude 1.
    pub fn scalar() -> Self {
        Self::new_unchecked(Vec::new(), vec![ONE])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "inner product of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Equality up to global phase: `|⟨a|b⟩| ≥ 1 − eps`.
    pub fn equals_up_to_phase(&self, other: &Self, eps: f64) -> bool {
        self.inner(other).is_ok_and(|z| z.norm() >= 1.0 - eps)
    }

    /// `min_θ ‖self − e^{iθ} other‖`, evaluated componentwise so that tiny
    /// distances keep full precision.
    pub fn phase_distance(&self, other: &Self) -> Result<f64> {
        let overlap = other.inner(self)?;
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - phase * b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        self.tensor_with_limit(other, DEFAULT_MAX_DIMENSION)
    }

    pub fn tensor_with_limit(&self, other: &Self, limit: usize) -> Result<Self> {
        checked_dim(self.len(), other.len(), limit)?;
        let mut amplitudes = Vec::with_capacity(self.len() * other.len());
        for a in &self.amplitudes {
            amplitudes.extend(other.amplitudes.iter().map(|b| a * b));
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(Self::new_unchecked(dims, amplitudes))
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> DensityOperator {
        DensityOperator::new_unchecked(ComplexMatrix::outer(&self.amplitudes, &self.amplitudes))
    }

    /// Reduced density operator on the subsystems in `keep` (sorted, deduplicated).
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityOperator> {
        let keep = normalize_positions(keep, self.dims.len())?;
        let traced = complement(self.dims.len(), &keep);
        let keep_off = offsets(&self.dims, &keep);
        let trace_off = offsets(&self.dims, &traced);
        let n = keep_off.len();
        let m = ComplexMatrix::from_fn(n, n, |i, j| {
            trace_off
                .iter()
                .map(|t| self.amplitudes[keep_off[i] + t] * self.amplitudes[keep_off[j] + t].conj())
                .sum()
        });
        Ok(DensityOperator::new_unchecked(m))
    }

    /// Reorders subsystems: factor `k` of the result is factor `order[k]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let n = self.dims.len();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::shape(format!("{order:?} is not a permutation of 0..{n}")));
        }
        let new_dims: Vec<usize> = order.iter().map(|&p| self.dims[p]).collect();
        let src = offsets(&self.dims, order);
        let amplitudes = src.iter().map(|&i| self.amplitudes[i]).collect();
        Ok(Self::new_unchecked(new_dims, amplitudes))
    }

    /// Applies an operator on the full space (no normalization check).
    pub(crate) fn map_amplitudes(&self, amplitudes: Vec<C64>) -> Self {
        Self::new_unchecked(self.dims.clone(), amplitudes)
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateVector{:?}[", self.dims)?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:+.6}{:+.6}i", a.re, a.im)?;
        }
        write!(f, "]")
    }
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Flat offsets for every digit combination over `positions`, enumerated
/// with the first listed position varying slowest.
pub(crate) fn offsets(dims: &[usize], positions: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * dims[p]);
        for base in &out {
            for d in 0..dims[p] {
                next.push(base + d * st[p]);
            }
        }
        out = next;
    }
    out
}

pub(crate) fn complement(n: usize, positions: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !positions.contains(i)).collect()
}

pub(crate) fn normalize_positions(positions: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut p = positions.to_vec();
    p.sort_unstable();
    p.dedup();
    if p.is_empty() {
        return Err(Error::shape("at least one subsystem must be kept"));
    }
    if p.last().is_some_and(|&x| x >= n) {
        return Err(Error::shape(format!("subsystem index out of range for {n} factors")));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn basis_tensor_basis() {
        let up = StateVector::ket(2, 0).unwrap();
        let t = up.tensor(&up).unwrap();
        assert_eq!(t.amplitudes(), &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert_eq!(t.dims(), &[2, 2]);
    }

    #[test]
    fn superposition_tensor_hand_expansion() {
        // (|0⟩+|1⟩)/√2 ⊗ |0⟩ = (1,0,1,0)/√2
        let plus = StateVector::new(vec![2], vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]).unwrap();
        let t = plus.tensor(&StateVector::ket(2, 0).unwrap()).unwrap();
        let expect = [FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0];
        for (a, e) in t.amplitudes().iter().zip(expect) {
            assert!((a - c(e)).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(matches!(
            StateVector::new(vec![2], vec![c(1.0), c(1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            StateVector::new(vec![3], vec![c(1.0), c(0.0)]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn tensor_capacity_error() {
        let big = StateVector::ket(1024, 0).unwrap();
        assert!(matches!(
            big.tensor_with_limit(&big, 1 << 19),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn permute_swaps_factors() {
        let s = StateVector::basis(&[2, 3], &[1, 2]).unwrap();
        let p = s.permute(&[1, 0]).unwrap();
        assert_eq!(p, StateVector::basis(&[3, 2], &[2, 1]).unwrap());
        assert!(s.permute(&[0, 0]).is_err());
    }

    #[test]
    fn phase_distance_ignores_global_phase() {
        let s = StateVector::new(vec![2], vec![c(0.6), C64::new(0.0, 0.8)]).unwrap();
        let rotated = s.map_amplitudes(s.amplitudes().iter().map(|a| a * C64::new(0.0, 1.0)).collect());
        assert!(s.phase_distance(&rotated).unwrap() < 1e-15);
        assert!(s.equals_up_to_phase(&rotated, 1e-12));
    }
}
