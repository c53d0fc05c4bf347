//! Seeded random states and Haar-random unitaries for property tests,
//! examples and Monte Carlo runs.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, StateVector, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Uniformly random pure state with the given subsystem dimensions.
pub fn random_state<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> StateVector {
    let n: usize = dims.iter().product();
    let amps = (0..n).map(|_| gaussian(rng)).collect();
    StateVector::from_unnormalized(dims.to_vec(), amps).expect("gaussian vector is nonzero")
}

/// Haar-random `n × n` unitary (QR of a complex Ginibre matrix with the
/// phases of R's diagonal absorbed).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n).map(|_| gaussian(rng)).collect();
        for _ in 0..2 {
            for b in &cols {
                let proj: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|z| z / norm).collect());
        }
    }
    ComplexMatrix::from_columns(&cols).expect("square")
}

/// Random orthonormal basis given as the columns of a unitary.
pub fn random_basis<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    haar_unitary(n, rng)
}

/// Random probability vector of length `n` with every weight ≥ `floor`.
pub fn random_weights<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..6 {
            assert!(haar_unitary(n, &mut rng).is_unitary(1e-12));
        }
    }

    #[test]
    fn random_state_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_state(&[3, 4], &mut rng);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-14);
        assert_eq!(s.dims(), &[3, 4]);
    }
}
