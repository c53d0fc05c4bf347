use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

/// Tolerance on eigenbasis orthonormality.
pub const BASIS_TOL: f64 = 1e-12;

/// Projective observable: an orthonormal eigenbasis with one outcome label per
/// column. Columns sharing a label span one degenerate eigenspace.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSpec {
    label: String,
    eigenbasis: ComplexMatrix,
    outcome_labels: Vec<String>,
}

impl ObservableSpec {
    pub fn new(label: impl Into<String>, eigenbasis: ComplexMatrix, outcome_labels: Vec<String>) -> Result<Self> {
        if !eigenbasis.is_square() {
            return Err(Error::shape(format!(
                "eigenbasis must be square, got {}x{}",
                eigenbasis.rows(),
                eigenbasis.cols()
            )));
        }
        if outcome_labels.len() != eigenbasis.cols() {
            return Err(Error::shape(format!(
                "{} outcome labels for {} eigenvectors",
                outcome_labels.len(),
                eigenbasis.cols()
            )));
        }
        if !eigenbasis.has_orthonormal_columns(BASIS_TOL) {
            return Err(Error::domain("eigenbasis columns are not orthonormal"));
        }
        Ok(Self {
            label: label.into(),
            eigenbasis,
            outcome_labels,
        })
    }

    /// Computational basis with the given outcome labels.
    pub fn computational(label: impl Into<String>, outcome_labels: &[&str]) -> Result<Self> {
        let n = outcome_labels.len();
        Self::new(
            label,
            ComplexMatrix::identity(n),
            outcome_labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    /// σ_x with outcomes `up`, `down`.
    pub fn pauli_x() -> Self {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let basis = ComplexMatrix::from_rows(&[vec![h, h], vec![h, -h]]).unwrap();
        Self::spin("sx", basis)
    }

    /// σ_y with `|up⟩ = (|0⟩ + i|1⟩)/√2`.
    pub fn pauli_y() -> Self {
        Self::pauli_y_with_phase(1.0)
    }

    /// σ_y with `|up⟩ = (|0⟩ + s·i|1⟩)/√2` for `s = ±1`.
    pub fn pauli_y_with_phase(sign: f64) -> Self {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let ih = C64::new(0.0, sign * FRAC_1_SQRT_2);
        let basis = ComplexMatrix::from_rows(&[vec![h, h], vec![ih, -ih]]).unwrap();
        Self::spin("sy", basis)
    }

    /// σ_z with outcomes `up`, `down`.
    pub fn pauli_z() -> Self {
        Self::spin("sz", ComplexMatrix::identity(2))
    }

    fn spin(label: &str, basis: ComplexMatrix) -> Self {
        Self {
            label: label.to_string(),
            eigenbasis: basis,
            outcome_labels: vec!["up".into(), "down".into()],
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.eigenbasis.rows()
    }

    pub fn eigenbasis(&self) -> &ComplexMatrix {
        &self.eigenbasis
    }

    pub fn outcome_labels(&self) -> &[String] {
        &self.outcome_labels
    }

    /// Distinct outcomes in order of first appearance.
    pub fn outcomes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for l in &self.outcome_labels {
            if !out.contains(&l.as_str()) {
                out.push(l);
            }
        }
        out
    }

    pub fn outcome_count(&self) -> usize {
        self.outcomes().len()
    }

    pub fn outcome_index(&self, outcome: &str) -> Result<usize> {
        self.outcomes()
            .iter()
            .position(|o| *o == outcome)
            .ok_or_else(|| Error::lookup(format!("observable `{}` has no outcome `{outcome}`", self.label)))
    }

    /// Eigenbasis column indices grouped by distinct outcome.
    pub(crate) fn groups(&self) -> Vec<Vec<usize>> {
        self.outcomes()
            .iter()
            .map(|o| {
                (0..self.outcome_labels.len())
                    .filter(|&j| self.outcome_labels[j] == *o)
                    .collect()
            })
            .collect()
    }

    /// Eigenspace projector for the `k`-th distinct outcome.
    pub fn projector_at(&self, k: usize) -> ComplexMatrix {
        let n = self.dim();
        let mut p = ComplexMatrix::zeros(n, n);
        for &j in &self.groups()[k] {
            let v = self.eigenbasis.column(j);
            p = &p + &ComplexMatrix::outer(&v, &v);
        }
        p
    }

    pub fn projector(&self, outcome: &str) -> Result<ComplexMatrix> {
        Ok(self.projector_at(self.outcome_index(outcome)?))
    }

    /// All eigenspace projectors with their labels.
    pub fn projectors(&self) -> Vec<(String, ComplexMatrix)> {
        self.outcomes()
            .iter()
            .enumerate()
            .map(|(k, o)| (o.to_string(), self.projector_at(k)))
            .collect()
    }

    /// Hermitian operator `Σ_k λ_k P_k` for the given eigenvalues (one per
    /// distinct outcome).
    pub fn operator(&self, eigenvalues: &[f64]) -> Result<ComplexMatrix> {
        if eigenvalues.len() != self.outcome_count() {
            return Err(Error::shape("one eigenvalue per distinct outcome expected"));
        }
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        for (k, lam) in eigenvalues.iter().enumerate() {
            m = &m + &self.projector_at(k).scale(C64::new(*lam, 0.0));
        }
        Ok(m)
    }

    /// The `j`-th eigenvector.
    pub fn eigenvector(&self, j: usize) -> Vec<C64> {
        self.eigenbasis.column(j)
    }
}

/// Outcome of one projective measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub subsystem: String,
    pub observable: String,
    pub outcome: String,
    pub probability: f64,
}
