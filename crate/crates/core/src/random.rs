//! Random generators for positive-definite matrices, Hamiltonian generators,
//! symplectic matrices and quantum-valid covariances.
//!
//! All generators take an explicit RNG so that callers control seeding.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg;
use crate::symplectic::{omega, CovMatrix};

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Wishart-style positive-definite matrix `GGᵀ/n + 0.1·I`.
pub fn pd_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CovMatrix {
    let g = gaussian_matrix(n, n, rng);
    let a = &g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1;
    CovMatrix::new(linalg::symmetrize(&a)).expect("symmetric by construction")
}

/// Positive-semidefinite matrix of the given rank.
pub fn psd_matrix<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> CovMatrix {
    let g = gaussian_matrix(n, rank, rng);
    let a = &g * g.transpose() / n.max(1) as f64;
    CovMatrix::new(linalg::symmetrize(&a)).expect("symmetric by construction")
}

/// A random symmetric matrix with standard-normal entries scaled by `scale`.
pub fn symmetric_matrix<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    linalg::symmetrize(&g) * scale
}

/// Hamiltonian generator `H = Δ K` with `K` symmetric, so that
/// `HΔ + ΔHᵀ = 0` and `e^{tH}` is symplectic.
pub fn hamiltonian<R: Rng + ?Sized>(modes: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let k = symmetric_matrix(2 * modes, scale, rng);
    omega(2 * modes) * k
}

/// Symmetric generator anticommuting with `Δ`; `e^{H}` is then a symmetric
/// positive-definite symplectic matrix.
pub fn symmetric_hamiltonian<R: Rng + ?Sized>(modes: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = symmetric_matrix(2 * modes, scale, rng);
    let d = omega(2 * modes);
    (&a + &d * &a * &d) * 0.5
}

/// Random symplectic matrix `e^{H}` for a random Hamiltonian generator.
pub fn symplectic<R: Rng + ?Sized>(modes: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    hamiltonian(modes, scale, rng).exp()
}

/// Quantum-valid covariance `S (⊕ ν_i I₂) Sᵀ` with `ν_i ∈ [½, ½ + spread]`.
/// With `pure = true` all `ν_i = ½`.
pub fn quantum_covariance<R: Rng + ?Sized>(modes: usize, spread: f64, pure: bool, rng: &mut R) -> CovMatrix {
    let s = symplectic(modes, 0.5, rng);
    let mut d = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        let nu = if pure { 0.5 } else { 0.5 + spread * rng.random::<f64>() };
        d[(2 * k, 2 * k)] = nu;
        d[(2 * k + 1, 2 * k + 1)] = nu;
    }
    CovMatrix::new(linalg::symmetrize(&(&s * d * s.transpose()))).expect("symmetric by construction")
}

/// `2m × k` matrix with orthonormal columns spanning a uniformly random
/// `k`-dimensional subspace.
pub fn orthonormal_frame<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let q = linalg::orthonormalize(&gaussian_matrix(n, k, rng));
        if q.ncols() == k {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{is_quantum_covariance, is_symplectic, nu_min};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_objects_have_their_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..4 {
            let h = symmetric_hamiltonian(m, 0.6, &mut rng);
            assert!(linalg::asymmetry(&h) < 1e-14);
            let s = h.exp();
            assert!(is_symplectic(&s, 1e-9).unwrap());
            assert!(CovMatrix::new(s).unwrap().is_positive_definite());

            let g = quantum_covariance(m, 2.0, false, &mut rng);
            assert!(is_quantum_covariance(&g, 1e-9));
            let p = quantum_covariance(m, 2.0, true, &mut rng);
            assert!((nu_min(&p).unwrap() - 0.5).abs() < 1e-9);

            let q = orthonormal_frame(2 * m, m, &mut rng);
            assert!((q.transpose() * &q - DMatrix::identity(m, m)).norm() < 1e-12);
        }
    }
}
