//! Dense complex linear algebra for small tensor-product Hilbert spaces.
//!
//! Subsystem ordering convention used throughout the crate: factor 0 is the
//! leftmost (slowest-varying) tensor factor.

mod density;
mod matrix;
mod schmidt;
mod state;

pub use density::{
    helstrom_measurement, partial_trace, spectral_decompose, spectral_decompose_hermitian,
    trace_distance, trace_norm, DensityOperator, HelstromMeasurement, SpectralDecomposition, DENSITY_TOL,
    HERMITIAN_TOL,
};
pub use matrix::{ComplexMatrix, C64, DEFAULT_MAX_DIMENSION};
pub use schmidt::{schmidt_decompose, SchmidtDecomposition};
pub use state::{StateVector, NORM_TOL};

pub(crate) use matrix::{complete_orthonormal, polar_unitary, svd, ONE, ZERO};
pub(crate) use schmidt::coefficient_matrix;
pub(crate) use state::{complement, offsets};

use crate::error::Result;

/// Schmidt coefficients or eigenvalues closer than this are one degenerate block.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Kronecker product with the left operand as the slower-varying index.
pub trait TensorProduct: Sized {
    fn tensor_with_limit(&self, other: &Self, limit: usize) -> Result<Self>;
}

impl TensorProduct for ComplexMatrix {
    fn tensor_with_limit(&self, other: &Self, limit: usize) -> Result<Self> {
        self.kron_with_limit(other, limit)
    }
}

impl TensorProduct for StateVector {
    fn tensor_with_limit(&self, other: &Self, limit: usize) -> Result<Self> {
        StateVector::tensor_with_limit(self, other, limit)
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> Result<T> {
    a.tensor_with_limit(b, DEFAULT_MAX_DIMENSION)
}

/// Shorthand for a real complex number.
#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}
