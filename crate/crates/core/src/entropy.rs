//! Entropies of Gaussian states and random variables, in nats.
//!
//! * `S_G(γ) = ½ ln det(eγ)`: Shannon differential entropy of a centered
//!   Gaussian vector.
//! * `S_Q(γ) = Σ g(ν_i)`: von Neumann entropy of the Gaussian state with
//!   covariance `γ`, where `ν_i` are the symplectic eigenvalues and
//!   `g(ν) = (ν+½)ln(ν+½) − (ν−½)ln(ν−½)`.
//!
//! Conditional entropies are evaluated on [`GaussianJoint`]s whose first block
//! is the conditioned system `X` and whose second block is a quantum memory
//! `M` (possibly empty). Means are never tracked; every entropy here is
//! translation invariant.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::symplectic::{self, CovMatrix, MapKind, STATE_TOL};

/// Whether a system is a bosonic mode collection or a classical outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Quantum,
    Classical,
}

impl From<MapKind> for SystemKind {
    fn from(k: MapKind) -> Self {
        match k {
            MapKind::Quantum => SystemKind::Quantum,
            MapKind::Classical => SystemKind::Classical,
        }
    }
}

/// `S_G(γ) = ½(n + ln det γ)`.
pub fn shannon_gaussian(gamma: &CovMatrix) -> Result<f64> {
    let n = gamma.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("Shannon entropy of an empty covariance".into()));
    }
    let ld = linalg::ln_det_pd(gamma)
        .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
    Ok(0.5 * (n as f64 + ld))
}

/// The single-mode entropy function `g(ν)`, with `g(½) = 0`.
pub fn bosonic_g(nu: f64) -> Result<f64> {
    if !(nu >= 0.5) || !nu.is_finite() {
        return Err(Error::Domain(format!("g(nu) requires nu >= 1/2, got {nu}")));
    }
    Ok(g_unchecked(nu))
}

// (ν+½)ln(ν+½) − (ν−½)ln(ν−½) = ln(ν+½) + (ν−½)·ln(1 + 1/(ν−½))
fn g_unchecked(nu: f64) -> f64 {
    let lo = nu - 0.5;
    if lo <= 0.0 {
        return 0.0;
    }
    (nu + 0.5).ln() + lo * (1.0 / lo).ln_1p()
}

/// `g′(ν) = ln((ν+½)/(ν−½))`, infinite at `ν = ½`.
pub fn bosonic_g_derivative(nu: f64) -> Result<f64> {
    if !(nu >= 0.5) {
        return Err(Error::Domain(format!("g'(nu) requires nu >= 1/2, got {nu}")));
    }
    let lo = nu - 0.5;
    if lo == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 / lo).ln_1p())
}

/// `S_Q(γ) = Σ g(ν_i)`; the empty covariance has entropy 0.
pub fn von_neumann_gaussian(gamma: &CovMatrix) -> Result<f64> {
    if gamma.dim() == 0 {
        return Ok(0.0);
    }
    let nus = symplectic::symplectic_eigenvalues(gamma)?;
    if nus[0] < 0.5 - STATE_TOL {
        return Err(Error::StateInvalid { nu_min: nus[0] });
    }
    // g has infinite slope at ½, so round-off above the vacuum is snapped away
    Ok(nus
        .iter()
        .map(|&nu| if nu - 0.5 <= 64.0 * f64::EPSILON * nu { 0.0 } else { g_unchecked(nu) })
        .sum())
}

/// `d/dt S_Q(γ + tδ)` at `t = 0` for a symmetric direction `δ`.
///
/// With `γ = LLᵀ` and `W = LᵀΔL`, `−W²` is symmetric with eigenvalues `ν_k²`
/// and the derivative is `−tr(W ψ(−W²) LᵀΔδL⁻ᵀ)`, `ψ(u) = arccoth(2√u)/√u`.
/// This is `Σ g′(ν_k) dν_k` without differentiating eigenvalues. Infinite
/// when `δ` moves a mode sitting at `ν = ½`.
pub fn von_neumann_derivative(gamma: &CovMatrix, delta: &DMatrix<f64>) -> Result<f64> {
    let n = gamma.dim();
    if delta.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "direction is {}x{}, covariance is {n}x{n}",
            delta.nrows(),
            delta.ncols()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    if n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("quantum covariance needs even dimension, got {n}")));
    }
    let l = gamma
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?
        .unpack();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    let omega = symplectic::omega(n);
    let w = l.transpose() * &omega * &l;
    let eig = linalg::symmetrize(&(w.transpose() * &w)).symmetric_eigen();
    let m = l.transpose() * &omega * delta * l_inv.transpose();
    let c = eig.eigenvectors.transpose() * m * &w * &eig.eigenvectors;
    let scale = c.norm().max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        let ck = c[(k, k)];
        let s = mu.max(0.0).sqrt();
        if 2.0 * s - 1.0 < -2.0 * STATE_TOL {
            return Err(Error::StateInvalid { nu_min: s });
        }
        if 2.0 * s - 1.0 <= 128.0 * f64::EPSILON * s {
            if ck.abs() > 1e-12 * scale {
                return Ok(if ck < 0.0 { f64::INFINITY } else { f64::NEG_INFINITY });
            }
            continue;
        }
        total -= ck * (2.0 / (2.0 * s - 1.0)).ln_1p() / (2.0 * s);
    }
    Ok(total)
}

/// Gaussian covariance over a system `X` (first `x_dim` indices) and an
/// optional quantum memory `M` (remaining indices).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianJoint {
    cov: CovMatrix,
    x_dim: usize,
    kind_x: SystemKind,
}

impl GaussianJoint {
    pub fn new(cov: CovMatrix, x_dim: usize, kind_x: SystemKind) -> Result<Self> {
        let n = cov.dim();
        if x_dim == 0 || x_dim > n {
            return Err(Error::DimensionMismatch(format!(
                "X block of size {x_dim} does not fit a {n}-dimensional covariance"
            )));
        }
        if (n - x_dim) % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "memory block must have even dimension, got {}",
                n - x_dim
            )));
        }
        if kind_x == SystemKind::Quantum && x_dim % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "quantum X block must have even dimension, got {x_dim}"
            )));
        }
        Ok(Self { cov, x_dim, kind_x })
    }

    /// Joint of a quantum `X` with a quantum memory.
    pub fn quantum(cov: CovMatrix, x_dim: usize) -> Result<Self> {
        Self::new(cov, x_dim, SystemKind::Quantum)
    }

    /// `X` alone, no memory.
    pub fn without_memory(cov: CovMatrix, kind_x: SystemKind) -> Result<Self> {
        let n = cov.dim();
        Self::new(cov, n, kind_x)
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.cov
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn m_dim(&self) -> usize {
        self.cov.dim() - self.x_dim
    }

    pub fn kind_x(&self) -> SystemKind {
        self.kind_x
    }

    pub fn x_block(&self) -> CovMatrix {
        self.cov.principal_block(0, self.x_dim)
    }

    pub fn m_block(&self) -> CovMatrix {
        self.cov.principal_block(self.x_dim, self.m_dim())
    }

    /// `γ_{XM}` of shape `x_dim × m_dim`.
    pub fn cross_block(&self) -> DMatrix<f64> {
        linalg::block(&self.cov, 0, self.x_dim, self.x_dim, self.m_dim())
    }

    /// `γ + t·(α ⊕ 0_M)`: heat acting on `X` only.
    pub fn heated(&self, alpha: &CovMatrix, t: f64) -> Result<Self> {
        if alpha.dim() != self.x_dim {
            return Err(Error::DimensionMismatch(format!(
                "heat coefficient has dimension {} but X has {}",
                alpha.dim(),
                self.x_dim
            )));
        }
        let mut g = self.cov.matrix().clone();
        let mut xx = g.view_mut((0, 0), (self.x_dim, self.x_dim));
        xx += alpha.matrix() * t;
        Ok(Self {
            cov: CovMatrix::new(g)?,
            x_dim: self.x_dim,
            kind_x: self.kind_x,
        })
    }

    /// Joint of `Y = B X` with the untouched memory: `(B ⊕ I) γ (B ⊕ I)ᵀ`.
    pub fn pushforward(&self, b: &DMatrix<f64>, kind_y: SystemKind) -> Result<Self> {
        if b.ncols() != self.x_dim {
            return Err(Error::DimensionMismatch(format!(
                "map has {} columns but X has dimension {}",
                b.ncols(),
                self.x_dim
            )));
        }
        let full = linalg::direct_sum(b, &DMatrix::identity(self.m_dim(), self.m_dim()));
        Self::new(self.cov.congruence(&full)?, b.nrows(), kind_y)
    }
}

/// `S(X|M)` for a Gaussian joint.
///
/// Quantum `X`: `S_Q(γ_XM) − S_Q(γ_M)`. Classical `X` (outcome of measuring
/// commuting quadratures): `S_G(γ_X) + S_Q(γ_{M|X}) − S_Q(γ_M)` where the
/// post-measurement memory covariance is the Schur complement
/// `γ_{M|X} = γ_M − γ_{MX} γ_X⁻¹ γ_{XM}`, independent of the outcome.
pub fn conditional_entropy(joint: &GaussianJoint) -> Result<f64> {
    let s_m = von_neumann_gaussian(&joint.m_block())?;
    match joint.kind_x {
        SystemKind::Quantum => Ok(von_neumann_gaussian(joint.cov())? - s_m),
        SystemKind::Classical => {
            let gx = joint.x_block();
            let s_x = shannon_gaussian(&gx)?;
            if joint.m_dim() == 0 {
                return Ok(s_x);
            }
            let gx_inv = linalg::inv_pd(&gx)
                .ok_or_else(|| Error::InvalidArgument("classical X block is not positive definite".into()))?;
            let c = joint.cross_block();
            let cond = joint.m_block().matrix() - c.transpose() * gx_inv * &c;
            let cond = CovMatrix::new(linalg::symmetrize(&cond))?;
            Ok(s_x + von_neumann_gaussian(&cond)? - s_m)
        }
    }
}

/// One grid point of [`asymptotic_entropy_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticRow {
    pub t: f64,
    /// `S_G(γ + tα) − ½ ln det(e·t·α)`.
    pub shannon_residual: f64,
    /// Same with `S_Q`; `None` while `γ + tα` is not quantum-valid.
    pub quantum_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub rows: Vec<AsymptoticRow>,
    /// `max_t t·|r_G(t)|`.
    pub max_scaled_shannon: f64,
    /// `max_t t·|r_Q(t)|` over the valid points.
    pub max_scaled_quantum: Option<f64>,
}

/// Residuals of `S(γ + tα)` against `½ ln det(e·t·α)` on a grid of `t > 0`.
///
/// `γ` may be any positive-semidefinite matrix (including zero); the quantum
/// branch is evaluated only for even dimension and only where `γ + tα` is a
/// valid quantum covariance.
pub fn asymptotic_entropy_check(gamma: &CovMatrix, alpha: &CovMatrix, t_grid: &[f64]) -> Result<AsymptoticReport> {
    let n = alpha.dim();
    if gamma.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "gamma is {}-dimensional, alpha is {n}-dimensional",
            gamma.dim()
        )));
    }
    let ld_alpha = linalg::ln_det_pd(alpha)
        .ok_or_else(|| Error::InvalidArgument("heat coefficient must be positive definite".into()))?;
    let mut rows = Vec::with_capacity(t_grid.len());
    let (mut max_g, mut max_q): (f64, Option<f64>) = (0.0, None);
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("grid times must be positive, got {t}")));
        }
        let reference = 0.5 * (n as f64 * (1.0 + t.ln()) + ld_alpha);
        let heated = CovMatrix::new(gamma.matrix() + alpha.matrix() * t)?;
        let r_g = shannon_gaussian(&heated)? - reference;
        max_g = max_g.max(t * r_g.abs());
        let r_q = if n % 2 == 0 && symplectic::is_quantum_covariance(&heated, 0.0) {
            Some(von_neumann_gaussian(&heated)? - reference)
        } else {
            None
        };
        if let Some(r) = r_q {
            max_q = Some(max_q.unwrap_or(0.0).max(t * r.abs()));
        }
        rows.push(AsymptoticRow {
            t,
            shannon_residual: r_g,
            quantum_residual: r_q,
        });
    }
    Ok(AsymptoticReport {
        rows,
        max_scaled_shannon: max_g,
        max_scaled_quantum: max_q,
    })
}
