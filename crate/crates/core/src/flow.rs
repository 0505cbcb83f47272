//! Heat semigroup on covariances and the quantities built on it: integral
//! Fisher information `Δ`, Fisher information `J`, the Stam gap and the flow
//! `φ(t)` whose monotonicity carries the Gaussian extremality argument.
//!
//! Heat acts on `X` only: `γ ↦ γ + t(α ⊕ 0_M)`.

use nalgebra::DMatrix;

use crate::datum::{BLDatum, BLMap};
use crate::entropy::{conditional_entropy, von_neumann_derivative, GaussianJoint, SystemKind};
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::output_kind;
use crate::symplectic::CovMatrix;

/// `γ + tα`.
pub fn heat_apply(gamma: &CovMatrix, alpha: &CovMatrix, t: f64) -> Result<CovMatrix> {
    if gamma.dim() != alpha.dim() {
        return Err(Error::DimensionMismatch(format!(
            "gamma is {}-dimensional, alpha is {}-dimensional",
            gamma.dim(),
            alpha.dim()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("heat time must be finite and nonnegative, got {t}")));
    }
    CovMatrix::new(gamma.matrix() + alpha.matrix() * t)
}

/// `Δ_{X|M}(α) = S(X|M)(γ + α⊕0) − S(X|M)(γ)`.
pub fn integral_fisher(joint: &GaussianJoint, alpha: &CovMatrix) -> Result<f64> {
    Ok(conditional_entropy(&joint.heated(alpha, 1.0)?)? - conditional_entropy(joint)?)
}

/// `J_{X|M}(α)`, the right derivative of `t ↦ S(X|M)(γ + tα⊕0)` at 0.
///
/// Quantum `X`: the derivative of `S_Q(γ_XM)` in the direction `α ⊕ 0`.
/// Classical `X`: `½ tr(γ_X⁻¹α)` plus the derivative of `S_Q(γ_{M|X})`, whose
/// Schur complement moves in the direction `γ_MX γ_X⁻¹ α γ_X⁻¹ γ_XM`.
/// Infinite when the heat reaches a mode at `ν = ½`.
pub fn fisher_info(joint: &GaussianJoint, alpha: &CovMatrix) -> Result<f64> {
    let nx = joint.x_dim();
    if alpha.dim() != nx {
        return Err(Error::DimensionMismatch(format!(
            "heat coefficient has dimension {} but X has {nx}",
            alpha.dim()
        )));
    }
    if alpha.norm() == 0.0 {
        return Ok(0.0);
    }
    let j = match joint.kind_x() {
        SystemKind::Quantum => {
            let padded = linalg::direct_sum(alpha.matrix(), &DMatrix::zeros(joint.m_dim(), joint.m_dim()));
            von_neumann_derivative(joint.cov(), &padded)?
        }
        SystemKind::Classical => {
            let gx_inv = linalg::inv_pd(&joint.x_block())
                .ok_or_else(|| Error::InvalidArgument("classical X block is not positive definite".into()))?;
            let shannon = 0.5 * (&gx_inv * alpha.matrix()).trace();
            if joint.m_dim() == 0 {
                shannon
            } else {
                let c = joint.cross_block();
                let cond = joint.m_block().matrix() - c.transpose() * &gx_inv * &c;
                let cond = CovMatrix::new(linalg::symmetrize(&cond))?;
                let dir = c.transpose() * &gx_inv * alpha.matrix() * &gx_inv * &c;
                shannon + von_neumann_derivative(&cond, &linalg::symmetrize(&dir))?
            }
        }
    };
    if j.is_nan() {
        return Err(Error::NumericalFailure("Fisher information is not a number".into()));
    }
    Ok(j)
}

/// `J_{X|M}(α) − J_{Y|M}(BαBᵀ)` with `Y = BX`.
pub fn stam_check(joint: &GaussianJoint, b: &BLMap, alpha: &CovMatrix) -> Result<f64> {
    let kind = output_kind(b, joint.kind_x(), 0)?;
    let pushed = joint.pushforward(b.matrix(), kind)?;
    let alpha_y = alpha.congruence(b.matrix())?;
    let jx = fisher_info(joint, alpha)?;
    if jx == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(jx - fisher_info(&pushed, &alpha_y)?)
}

/// `φ(t) = S(X|M) − Σ p_i S(Y_i|M)` along the heat flow with coefficient `α*`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub t_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_x: Vec<f64>,
    /// `phi_y[i][k]` is `S(Y_i|M)` at `t_grid[k]`.
    pub phi_y: Vec<Vec<f64>>,
    /// Aitken extrapolation of the last three points (exact for a power-law
    /// tail on a geometric grid); the last value when the tail is not
    /// contracting.
    pub limit_estimate: f64,
    /// Largest drop `φ(t_k) − φ(t_{k+1})` over the grid; `≤ 0` when monotone.
    pub max_decrease: f64,
}

impl FlowTrace {
    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.max_decrease <= tol
    }

    /// `φ` at the largest grid time.
    pub fn final_value(&self) -> f64 {
        *self.phi.last().expect("grid is nonempty")
    }
}

/// `0` followed by `points` geometric times from `1e-2` to `1e4`.
pub fn default_grid(points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let (lo, hi) = (1e-2f64.ln(), 1e4f64.ln());
    let steps = points.max(2) - 1;
    grid.extend((0..=steps).map(|k| (lo + (hi - lo) * k as f64 / steps as f64).exp()));
    grid
}

pub fn flow_trace(d: &BLDatum, joint: &GaussianJoint, alpha_star: &CovMatrix, t_grid: &[f64]) -> Result<FlowTrace> {
    if joint.x_dim() != d.dim() || alpha_star.dim() != d.dim() {
        return Err(Error::DimensionMismatch(format!(
            "datum acts on {}, X has {}, alpha has {}",
            d.dim(),
            joint.x_dim(),
            alpha_star.dim()
        )));
    }
    if t_grid.first() != Some(&0.0) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid must start at 0 and increase strictly".into()));
    }
    let kinds = d
        .maps()
        .iter()
        .enumerate()
        .map(|(i, b)| output_kind(b, joint.kind_x(), i))
        .collect::<Result<Vec<_>>>()?;
    let mut phi = Vec::with_capacity(t_grid.len());
    let mut phi_x = Vec::with_capacity(t_grid.len());
    let mut phi_y = vec![Vec::with_capacity(t_grid.len()); d.len()];
    for &t in t_grid {
        let heated = joint.heated(alpha_star, t)?;
        let sx = conditional_entropy(&heated)?;
        let mut value = sx;
        for (i, (b, &p)) in d.maps().iter().zip(d.weights()).enumerate() {
            let sy = conditional_entropy(&heated.pushforward(b.matrix(), kinds[i])?)?;
            phi_y[i].push(sy);
            value -= p * sy;
        }
        phi_x.push(sx);
        phi.push(value);
    }
    let max_decrease = phi.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let limit_estimate = tail_limit(&phi);
    Ok(FlowTrace {
        t_grid: t_grid.to_vec(),
        phi,
        phi_x,
        phi_y,
        limit_estimate,
        max_decrease,
    })
}

fn tail_limit(values: &[f64]) -> f64 {
    let last = *values.last().expect("grid is nonempty");
    let [.., f1, f2, f3] = values else { return last };
    let (d1, d2) = (f2 - f1, f3 - f2);
    let r = d2 / d1;
    if d1 != 0.0 && r > 0.0 && r < 1.0 {
        f3 + d2 * r / (1.0 - r)
    } else {
        last
    }
}

/// Minimal margins of the concavity and monotonicity families; each is
/// `≥ 0` when the corresponding inequality holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    /// `2Δ(t(α+β)) − Δ(tα) − Δ(t(α+2β))`.
    pub matrix_concavity: f64,
    /// `Δ_γ(tα) − Δ_{γ+tβ}(tα)`.
    pub pre_smoothing: f64,
    /// Midpoint concavity of `t ↦ Δ(tα)` between consecutive grid points.
    pub ray_concavity: f64,
    /// `Δ(t_{k+1}α) − Δ(t_kα)`.
    pub ray_monotonicity: f64,
}

pub fn concavity_checks(
    joint: &GaussianJoint,
    alpha: &CovMatrix,
    beta: &CovMatrix,
    grid: &[f64],
) -> Result<ConcavityReport> {
    if grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("concavity grid must be positive".into()));
    }
    let delta = |a: &CovMatrix| integral_fisher(joint, a);
    let comb = |x: f64, y: f64| CovMatrix::new(alpha.matrix() * x + beta.matrix() * y);
    let mut report = ConcavityReport {
        matrix_concavity: f64::INFINITY,
        pre_smoothing: f64::INFINITY,
        ray_concavity: f64::INFINITY,
        ray_monotonicity: f64::INFINITY,
    };
    let mut ray = Vec::with_capacity(grid.len());
    for &t in grid {
        let d_a = delta(&comb(t, 0.0)?)?;
        let m = 2.0 * delta(&comb(t, t)?)? - d_a - delta(&comb(t, 2.0 * t)?)?;
        report.matrix_concavity = report.matrix_concavity.min(m);
        let smoothed = joint.heated(beta, t)?;
        let s = d_a - integral_fisher(&smoothed, &comb(t, 0.0)?)?;
        report.pre_smoothing = report.pre_smoothing.min(s);
        ray.push(d_a);
    }
    for k in 1..grid.len() {
        let mid = delta(&comb(0.5 * (grid[k - 1] + grid[k]), 0.0)?)?;
        report.ray_concavity = report.ray_concavity.min(mid - 0.5 * (ray[k - 1] + ray[k]));
        report.ray_monotonicity = report.ray_monotonicity.min(ray[k] - ray[k - 1]);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{bosonic_g, bosonic_g_derivative, SystemKind};
    use crate::random;
    use crate::solver::{fixed_point_solve, SolveOptions};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_mode(nu: f64) -> GaussianJoint {
        GaussianJoint::without_memory(CovMatrix::scaled_identity(2, nu), SystemKind::Quantum).unwrap()
    }

    #[test]
    fn heat_semigroup_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random::pd_matrix(4, &mut rng);
        let a = random::pd_matrix(4, &mut rng);
        assert_eq!(heat_apply(&g, &a, 0.0).unwrap(), g);
        let z = heat_apply(&CovMatrix::zeros(2), &CovMatrix::identity(2), 3.0).unwrap();
        assert_eq!(z, CovMatrix::scaled_identity(2, 3.0));
        let two = heat_apply(&heat_apply(&g, &a, 0.5).unwrap(), &a, 0.25).unwrap();
        assert!((two.matrix() - heat_apply(&g, &a, 0.75).unwrap().matrix()).norm() < 1e-14);
        assert!(heat_apply(&g, &a, -1.0).is_err());
        assert!(heat_apply(&g, &CovMatrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn pushforward_commutes_with_heat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random::pd_matrix(4, &mut rng);
        let a = random::pd_matrix(4, &mut rng);
        let b = random::gaussian_matrix(2, 4, &mut rng);
        let lhs = heat_apply(&g, &a, 2.5).unwrap().congruence(&b).unwrap();
        let rhs = heat_apply(&g.congruence(&b).unwrap(), &a.congruence(&b).unwrap(), 2.5).unwrap();
        assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-12 * lhs.norm());
    }

    #[test]
    fn integral_fisher_single_mode() {
        for &nu in &[0.5, 0.9, 3.0] {
            let j = single_mode(nu);
            assert_eq!(integral_fisher(&j, &CovMatrix::zeros(2)).unwrap(), 0.0);
            let d = integral_fisher(&j, &CovMatrix::identity(2)).unwrap();
            assert!((d - (bosonic_g(nu + 1.0).unwrap() - bosonic_g(nu).unwrap())).abs() < 1e-13);
        }
    }

    #[test]
    fn fisher_single_mode_matches_derivative_of_g() {
        for &nu in &[0.6, 1.0, 4.0] {
            let j = fisher_info(&single_mode(nu), &CovMatrix::identity(2)).unwrap();
            // one symplectic eigenvalue moving as ν + t
            let exact = bosonic_g_derivative(nu).unwrap();
            assert!((j - exact).abs() < 1e-12 * exact, "{j} vs {exact}");
        }
        assert_eq!(fisher_info(&single_mode(1.0), &CovMatrix::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn stam_identity_and_discard() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g1 = random::quantum_covariance(1, 1.0, false, &mut rng);
        let g2 = random::quantum_covariance(1, 1.0, false, &mut rng);
        let joint = GaussianJoint::without_memory(g1.direct_sum(&g2), SystemKind::Quantum).unwrap();
        let a = random::pd_matrix(4, &mut rng);
        let id = BLMap::new(DMatrix::identity(4, 4)).unwrap();
        assert!(stam_check(&joint, &id, &a).unwrap().abs() < 1e-8);

        let a1 = random::pd_matrix(2, &mut rng);
        let a2 = random::pd_matrix(2, &mut rng);
        let keep_first = BLMap::new(DMatrix::identity(2, 4)).unwrap();
        let gap = stam_check(&joint, &keep_first, &a1.direct_sum(&a2)).unwrap();
        let second = GaussianJoint::without_memory(g2, SystemKind::Quantum).unwrap();
        let j2 = fisher_info(&second, &a2).unwrap();
        assert!((gap - j2).abs() < 1e-6 * j2.max(1.0));
        assert!(gap > 0.0);
    }

    #[test]
    fn flow_constant_at_extremizer() {
        let p = [0.4, 0.7, 0.9];
        let d = BLDatum::two_sum(1, p).unwrap();
        let r = fixed_point_solve(&d, &CovMatrix::identity(2), &SolveOptions::default()).unwrap();
        let joint = GaussianJoint::without_memory(r.alpha.clone(), SystemKind::Classical).unwrap();
        let tr = flow_trace(&d, &joint, &r.alpha, &default_grid(40)).unwrap();
        for v in &tr.phi {
            assert!((v - r.constant).abs() < 1e-8);
        }
    }

    #[test]
    fn flow_identity_datum_vanishes() {
        let d = BLDatum::identity(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random::quantum_covariance(1, 1.0, false, &mut rng);
        let joint = GaussianJoint::without_memory(g, SystemKind::Quantum).unwrap();
        let tr = flow_trace(&d, &joint, &CovMatrix::identity(2), &default_grid(10)).unwrap();
        assert!(tr.phi.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn flow_from_squeezed_state_rises_to_zero() {
        let d = BLDatum::position_momentum(1).unwrap();
        let a = 3.0;
        let g = CovMatrix::from_row_slice(2, &[a + 0.1, 0.0, 0.0, 1.0 / (4.0 * a) + 0.1]).unwrap();
        let joint = GaussianJoint::without_memory(g, SystemKind::Quantum).unwrap();
        let tr = flow_trace(&d, &joint, &CovMatrix::identity(2), &default_grid(40)).unwrap();
        assert!(tr.phi[0] < 0.0);
        assert!(tr.is_nondecreasing(1e-7));
        assert!(tr.final_value().abs() < 1e-3);
        assert!(tr.limit_estimate.abs() < tr.final_value().abs());
    }

    #[test]
    fn flow_rejects_bad_grid() {
        let d = BLDatum::identity(1).unwrap();
        let joint = single_mode(1.0);
        let id = CovMatrix::identity(2);
        assert!(flow_trace(&d, &joint, &id, &[0.5, 1.0]).is_err());
        assert!(flow_trace(&d, &joint, &id, &[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn grid_shape() {
        let g = default_grid(40);
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-2).abs() < 1e-15 && (g[40] - 1e4).abs() < 1e-9);
    }

    #[test]
    fn concavity_zero_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random::quantum_covariance(2, 1.0, false, &mut rng);
        let joint = GaussianJoint::quantum(g, 2).unwrap();
        let a = random::pd_matrix(2, &mut rng);
        let r = concavity_checks(&joint, &a, &CovMatrix::zeros(2), &[0.1, 0.5, 1.0, 3.0]).unwrap();
        assert_eq!(r.matrix_concavity, 0.0);
        assert_eq!(r.pre_smoothing, 0.0);
        assert!(r.ray_concavity >= -1e-12);
        assert!(r.ray_monotonicity >= 0.0);
    }
}
