//! Symplectic forms, symplectic eigenvalues and the classification of linear
//! maps of quadratures into symplectic ("quantum") and commuting
//! ("classical") kinds.
//!
//! Conventions: the form on `m` modes is `Δ = ⊕ [[0, 1], [−1, 0]]`, and the
//! vacuum has covariance `½·I`, so a covariance matrix describes a quantum
//! state iff its smallest symplectic eigenvalue is at least `½`.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, STRUCTURAL_TOL};

/// Absolute slack accepted below `ν = ½` when validating quantum covariances.
pub const STATE_TOL: f64 = 1e-9;

/// The standard symplectic form `Δ_{2m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    modes: usize,
    matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn new(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument("symplectic form needs at least one mode".into()));
        }
        Ok(Self {
            modes,
            matrix: omega(2 * modes),
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        2 * self.modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// `Δ_{2m}` for `m ≥ 1`.
pub fn standard_form(modes: usize) -> Result<SymplecticForm> {
    SymplecticForm::new(modes)
}

/// `Δ_n` for even `n` (including `n = 0`); used internally where the
/// dimension is already known to be even.
pub(crate) fn omega(n: usize) -> DMatrix<f64> {
    debug_assert!(n % 2 == 0);
    let mut d = DMatrix::zeros(n, n);
    for k in 0..n / 2 {
        d[(2 * k, 2 * k + 1)] = 1.0;
        d[(2 * k + 1, 2 * k)] = -1.0;
    }
    d
}

/// A real symmetric matrix used as a covariance (or heat coefficient).
///
/// Construction checks squareness and symmetry up to a norm-scaled tolerance
/// and stores the exactly symmetrized matrix. Definiteness is checked by the
/// operations that need it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        let tol = linalg::scaled_tol(STRUCTURAL_TOL, m.norm());
        if linalg::asymmetry(&m) > tol {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        Ok(Self(linalg::symmetrize(&m)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(DMatrix::identity(n, n) * s)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_positive_definite(&self) -> bool {
        self.dim() == 0 || self.0.clone().cholesky().is_some()
    }

    /// `λ·γ`.
    pub fn scale(&self, lambda: f64) -> Self {
        Self(&self.0 * lambda)
    }

    /// `A γ Aᵀ` (symmetrized).
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<Self> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot push a {}-dimensional covariance through a {}x{} matrix",
                self.dim(),
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(Self(linalg::symmetrize(&(a * &self.0 * a.transpose()))))
    }

    pub fn direct_sum(&self, other: &CovMatrix) -> Self {
        Self(linalg::direct_sum(&self.0, &other.0))
    }

    /// Principal sub-block on the index range `start..start + len`.
    pub fn principal_block(&self, start: usize, len: usize) -> Self {
        Self(linalg::block(&self.0, start, start, len, len))
    }
}

impl Deref for CovMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<DMatrix<f64>> for CovMatrix {
    type Error = Error;

    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        Self::new(m)
    }
}

/// How a map of quadratures relates to the symplectic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    /// `B Δ Bᵀ = Δ`: the output quadratures form a quantum subsystem.
    Quantum,
    /// `B Δ Bᵀ = 0`: the output quadratures commute and can be measured.
    Classical,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapKind::Quantum => f.write_str("quantum"),
            MapKind::Classical => f.write_str("classical"),
        }
    }
}

/// Symplectic eigenvalues of a positive-definite `γ` of even dimension, in
/// ascending order, each listed once.
///
/// With `γ = LLᵀ`, the matrix `Lᵀ Δ L` is similar to `γΔ` and antisymmetric,
/// so `−(LᵀΔL)²` is symmetric with eigenvalues `ν_i²`, each twice. The sorted
/// spectrum is paired greedily.
pub fn symplectic_eigenvalues(gamma: &CovMatrix) -> Result<Vec<f64>> {
    let n = gamma.dim();
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "symplectic eigenvalues need a positive even dimension, got {n}"
        )));
    }
    let chol = gamma
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
    let l = chol.unpack();
    let k = l.transpose() * omega(n) * &l;
    let sq = k.transpose() * &k;
    let ev = linalg::sym_eigenvalues(&sq);
    let mut nus = Vec::with_capacity(n / 2);
    for pair in ev.chunks(2) {
        let (a, b) = (pair[0].max(0.0), pair[1].max(0.0));
        // Clustered spectra may pair across clusters; products and sums are
        // unaffected.
        nus.push((0.5 * (a + b)).sqrt());
    }
    Ok(nus)
}

/// Smallest symplectic eigenvalue.
pub fn nu_min(gamma: &CovMatrix) -> Result<f64> {
    Ok(symplectic_eigenvalues(gamma)?[0])
}

/// Whether `γ` is the covariance of a quantum state (`ν_min ≥ ½ − tol`).
pub fn is_quantum_covariance(gamma: &CovMatrix, tol: f64) -> bool {
    gamma.dim() % 2 == 0
        && gamma.is_positive_definite()
        && symplectic_eigenvalues(gamma).map_or(false, |nu| nu[0] >= 0.5 - tol)
}

/// Classify `B` (shape `n_i × 2m`) as a quantum or classical map.
///
/// Returns `Ok(None)` when `B` has full rank but satisfies neither condition,
/// and [`Error::RankDeficient`] when its smallest singular value is below
/// `tol` (scaled by `‖B‖`).
pub fn classify_map(b: &DMatrix<f64>, form: &SymplecticForm, tol: f64) -> Result<Option<MapKind>> {
    if b.ncols() != form.dim() {
        return Err(Error::DimensionMismatch(format!(
            "map has {} columns but the form acts on {}",
            b.ncols(),
            form.dim()
        )));
    }
    let ni = b.nrows();
    if ni == 0 || ni > b.ncols() {
        return Err(Error::InvalidArgument(format!(
            "map must have between 1 and {} rows, got {ni}",
            b.ncols()
        )));
    }
    let sv = linalg::singular_values(b);
    let sigma_min = sv.get(ni - 1).copied().unwrap_or(0.0);
    if sigma_min <= linalg::scaled_tol(tol, sv[0]) {
        return Err(Error::RankDeficient { sigma_min });
    }
    let image = b * form.matrix() * b.transpose();
    let scale = linalg::scaled_tol(tol, b.norm_squared());
    if ni % 2 == 0 && (&image - omega(ni)).norm() <= scale {
        return Ok(Some(MapKind::Quantum));
    }
    if image.norm() <= scale {
        return Ok(Some(MapKind::Classical));
    }
    Ok(None)
}

/// `‖S Δ Sᵀ − Δ‖ ≤ tol·max(1, ‖S‖²)`.
pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let n = s.nrows();
    if n != s.ncols() || n == 0 || n % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "symplectic test needs a square even matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let d = omega(n);
    let defect = (s * &d * s.transpose() - &d).norm();
    Ok(defect <= linalg::scaled_tol(tol, s.norm_squared()))
}

/// `‖HΔ + ΔHᵀ‖`: zero iff `e^{tH}` is symplectic for every `t`.
pub fn hamiltonian_defect(h: &DMatrix<f64>) -> f64 {
    let d = omega(h.nrows());
    (h * &d + &d * h.transpose()).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn form_single_mode() {
        let f = standard_form(1).unwrap();
        assert_eq!(f.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    }

    #[test]
    fn form_two_modes_is_block_diagonal() {
        let f = standard_form(2).unwrap();
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(f.matrix(), &linalg::direct_sum(&j, &j));
    }

    #[test]
    fn form_is_antisymmetric_and_squares_to_minus_identity() {
        for m in 1..6 {
            let d = standard_form(m).unwrap().matrix().clone();
            assert_eq!(d.transpose(), -&d);
            assert_eq!(&d * &d, -DMatrix::<f64>::identity(2 * m, 2 * m));
        }
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(matches!(standard_form(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn vacuum_and_thermal_single_mode() {
        let nu = symplectic_eigenvalues(&CovMatrix::scaled_identity(2, 0.5)).unwrap();
        assert_eq!(nu.len(), 1);
        assert!((nu[0] - 0.5).abs() < 1e-15);
        for &v in &[0.1, 0.5, 3.7, 1e4] {
            let nu = symplectic_eigenvalues(&CovMatrix::scaled_identity(2, v)).unwrap();
            assert!((nu[0] - v).abs() < 1e-12 * v);
        }
    }

    #[test]
    fn product_of_symplectic_eigenvalues_is_sqrt_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let g = random::pd_matrix(4, &mut rng);
            let nu = symplectic_eigenvalues(&g).unwrap();
            let prod: f64 = nu.iter().product();
            let det = g.matrix().determinant();
            assert!((prod - det.sqrt()).abs() < 1e-10 * prod.max(1.0));
        }
    }

    #[test]
    fn odd_or_indefinite_rejected() {
        assert!(symplectic_eigenvalues(&CovMatrix::identity(3)).is_err());
        let bad = CovMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(symplectic_eigenvalues(&bad).is_err());
    }

    #[test]
    fn classify_identity_row_and_rank_deficient() {
        let f = standard_form(1).unwrap();
        let id = DMatrix::identity(2, 2);
        assert_eq!(classify_map(&id, &f, STRUCTURAL_TOL).unwrap(), Some(MapKind::Quantum));
        let row = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(classify_map(&row, &f, STRUCTURAL_TOL).unwrap(), Some(MapKind::Classical));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(matches!(
            classify_map(&bad, &f, STRUCTURAL_TOL),
            Err(Error::RankDeficient { .. })
        ));
        let neither = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(classify_map(&neither, &f, STRUCTURAL_TOL).unwrap(), None);
    }

    #[test]
    fn symplectic_checks() {
        assert!(is_symplectic(&DMatrix::identity(4, 4), STRUCTURAL_TOL).unwrap());
        assert!(!is_symplectic(&(DMatrix::identity(2, 2) * 2.0), STRUCTURAL_TOL).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..4 {
            let h = random::hamiltonian(m, 0.7, &mut rng);
            assert!(hamiltonian_defect(&h) < 1e-12);
            for &t in &[-2.0, 0.3, 1.0, 4.0] {
                let s = (&h * t).exp();
                assert!(is_symplectic(&s, STRUCTURAL_TOL).unwrap());
            }
        }
    }
}
