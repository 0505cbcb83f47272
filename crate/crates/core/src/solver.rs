//! Brascamp–Lieb constants by fixed-point iteration on the stationarity
//! condition `Σ p_i B_iᵀ(B_i α B_iᵀ)⁻¹B_i = α⁻¹`, plus Gaussian checks of the
//! entropy inequality and of the functional (integral) form.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datum::{self, BLDatum, BLMap, ProbeVerdict};
use crate::entropy::{conditional_entropy, GaussianJoint, SystemKind};
use crate::error::{Error, Result};
use crate::linalg;
use crate::random;
use crate::symplectic::CovMatrix;

/// Tolerance on `|2m − Σ p_i n_i|`.
pub const SCALING_TOL: f64 = 1e-9;

const DIVERGENCE_WINDOW: usize = 50;
const MAX_CONDITION: f64 = 1e13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Diverging,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Last iterate, normalized to `det α = 1`.
    pub alpha: CovMatrix,
    /// `F(α)` at the last iterate; the constant itself when converged.
    pub constant: f64,
    pub residual: f64,
    pub iterations: usize,
    pub objective_trace: Vec<(usize, f64)>,
    /// Damping in effect at the end of the run.
    pub damping: f64,
    /// Steps where the objective dropped by more than `1e-8`.
    pub ascent_violations: usize,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 20_000,
            damping: 1.0,
        }
    }
}

fn normalize_det(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = a.nrows() as f64;
    let ld = linalg::ln_det_pd(a)?;
    Some((a * (-ld / n).exp(), ld))
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let ev = linalg::sym_eigenvalues(a);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Iterate `α ← (1−θ)α + θ·M(α)⁻¹`, renormalizing `det α = 1`.
///
/// The damping drops to `½` the first time the objective decreases. The run
/// is flagged `Diverging` when `ln det` of the raw update drifts monotonically
/// for 50 steps without the residual improving, or when the iterate becomes
/// numerically singular (escape to the boundary of the cone).
pub fn fixed_point_solve(d: &BLDatum, alpha0: &CovMatrix, opts: &SolveOptions) -> Result<SolveResult> {
    if !datum::scaling_condition(d, SCALING_TOL) {
        return Err(Error::InvalidArgument(
            "fixed-point iteration requires the scaling condition".into(),
        ));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    if alpha0.dim() != d.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial alpha has dimension {} but the datum acts on {}",
            alpha0.dim(),
            d.dim()
        )));
    }
    let (start, _) = normalize_det(alpha0)
        .ok_or_else(|| Error::InvalidArgument("initial alpha is not positive definite".into()))?;
    let mut alpha = CovMatrix::new(start)?;
    let mut theta = opts.damping;
    let mut f = datum::objective(d, &alpha)?;
    let mut trace = vec![(0, f)];
    let mut raw_ld: Vec<f64> = Vec::new();
    let mut residuals: Vec<f64> = Vec::new();
    let mut ascent_violations = 0;

    let finish = |status, alpha: CovMatrix, f, residual, it, trace, theta, av| SolveResult {
        status,
        alpha,
        constant: f,
        residual,
        iterations: it,
        objective_trace: trace,
        damping: theta,
        ascent_violations: av,
    };

    for it in 0..=opts.max_iter {
        let m = datum::weighted_pullback(d, &alpha)?;
        let inv = linalg::inv_pd(&alpha)
            .ok_or_else(|| Error::NumericalFailure("iterate lost positive definiteness".into()))?;
        let residual = (&m - inv).norm();
        if !residual.is_finite() {
            return Ok(finish(SolveStatus::Diverging, alpha, f, residual, it, trace, theta, ascent_violations));
        }
        if residual <= opts.tol {
            return Ok(finish(SolveStatus::Converged, alpha, f, residual, it, trace, theta, ascent_violations));
        }
        if it == opts.max_iter {
            return Ok(finish(SolveStatus::MaxIterations, alpha, f, residual, it, trace, theta, ascent_violations));
        }
        residuals.push(residual);

        let Some(m_inv) = linalg::inv_pd(&m) else {
            return Ok(finish(SolveStatus::Diverging, alpha, f, residual, it, trace, theta, ascent_violations));
        };
        let (next, next_f, ld) = loop {
            let raw = linalg::symmetrize(&(alpha.matrix() * (1.0 - theta) + &m_inv * theta));
            let Some((next, ld)) = normalize_det(&raw) else {
                return Ok(finish(SolveStatus::Diverging, alpha, f, residual, it, trace, theta, ascent_violations));
            };
            let next = CovMatrix::new(next)?;
            let next_f = datum::objective(d, &next)?;
            if next_f < f - 1e-8 * f.abs().max(1.0) {
                ascent_violations += 1;
                if theta > 0.5 {
                    theta = 0.5;
                    continue;
                }
            }
            break (next, next_f, ld);
        };
        alpha = next;
        f = next_f;
        trace.push((it + 1, f));
        raw_ld.push(ld);

        if condition_number(&alpha) > MAX_CONDITION {
            return Ok(finish(SolveStatus::Diverging, alpha, f, residual, it + 1, trace, theta, ascent_violations));
        }
        let k = raw_ld.len();
        if k > DIVERGENCE_WINDOW {
            let w = &raw_ld[k - DIVERGENCE_WINDOW - 1..];
            let increasing = w.windows(2).all(|p| p[1] > p[0]);
            let decreasing = w.windows(2).all(|p| p[1] < p[0]);
            let stalled = residuals[k - 1] >= residuals[k - 1 - DIVERGENCE_WINDOW];
            if (increasing || decreasing) && stalled {
                return Ok(finish(SolveStatus::Diverging, alpha, f, residual, it + 1, trace, theta, ascent_violations));
            }
        }
    }
    unreachable!("loop returns at it == max_iter")
}

const NEWTON_MAX_ITER: usize = 100;

/// Newton's method on `F` along the geodesics `α = L e^X Lᵀ`, `α = LLᵀ`.
///
/// In these coordinates the gradient is `½(I − Σ p_i P_i)` and the Hessian
/// `X ↦ −¼ Σ p_i (P_i X Q_i + Q_i X P_i)`, where `P_i` projects onto the row
/// space of `B_i L` and `Q_i = I − P_i`. The Hessian is singular along the
/// scaling direction and along any flat directions of `F`, so the step uses
/// its pseudo-inverse, followed by a backtracking line search. Meant to finish
/// off iterates the fixed-point map approaches slowly.
pub fn newton_refine(d: &BLDatum, alpha0: &CovMatrix, opts: &SolveOptions) -> Result<SolveResult> {
    if !datum::scaling_condition(d, SCALING_TOL) {
        return Err(Error::InvalidArgument("Newton refinement requires the scaling condition".into()));
    }
    let n = d.dim();
    let (start, _) = normalize_det(alpha0)
        .ok_or_else(|| Error::InvalidArgument("initial alpha is not positive definite".into()))?;
    let mut alpha = CovMatrix::new(start)?;
    let mut f = datum::objective(d, &alpha)?;
    let mut trace = vec![(0, f)];
    let basis = sym_basis(n);
    let id = DMatrix::<f64>::identity(n, n);

    for it in 0..=NEWTON_MAX_ITER {
        let residual = datum::stationarity_residual(d, &alpha)?;
        let status = if residual <= opts.tol {
            Some(SolveStatus::Converged)
        } else if it == NEWTON_MAX_ITER || !residual.is_finite() {
            Some(SolveStatus::MaxIterations)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(SolveResult {
                status,
                alpha,
                constant: f,
                residual,
                iterations: it,
                objective_trace: trace,
                damping: 1.0,
                ascent_violations: 0,
            });
        }

        let l = alpha
            .matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("iterate lost positive definiteness".into()))?
            .l();
        let mut projectors = Vec::with_capacity(d.len());
        for (i, (b, &p)) in d.maps().iter().zip(d.weights()).enumerate() {
            if p == 0.0 {
                continue;
            }
            let c = b.matrix() * &l;
            let g = linalg::inv_pd(&(&c * c.transpose())).ok_or(Error::DegeneratePushforward { index: i })?;
            projectors.push((p, linalg::symmetrize(&(c.transpose() * g * &c))));
        }
        let mut grad = id.clone();
        for (p, pr) in &projectors {
            grad -= pr * *p;
        }
        grad *= 0.5;
        let hess_apply = |x: &DMatrix<f64>| {
            let mut acc = DMatrix::zeros(n, n);
            for (p, pr) in &projectors {
                let q = &id - pr;
                acc += (pr * x * &q + &q * x * pr) * (0.25 * p);
            }
            acc
        };
        let k = basis.len();
        let g = DMatrix::from_fn(k, 1, |a, _| (&basis[a] * &grad).trace());
        let images: Vec<DMatrix<f64>> = basis.iter().map(&hess_apply).collect();
        let h = DMatrix::from_fn(k, k, |a, b| (&basis[a] * &images[b]).trace());
        let svd = linalg::symmetrize(&h).svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let coef = svd
            .solve(&g, cutoff)
            .map_err(|e| Error::NumericalFailure(format!("Newton system: {e}")))?;
        let step = basis
            .iter()
            .zip(coef.iter())
            .fold(DMatrix::zeros(n, n), |acc, (e, &c)| acc + e * c);

        let mut t = 1.0;
        let accepted = loop {
            let eig = (&step * t).symmetric_eigen();
            let expx = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp))
                * eig.eigenvectors.transpose();
            let raw = linalg::symmetrize(&(&l * expx * l.transpose()));
            if let Some((next, _)) = normalize_det(&raw) {
                let next = CovMatrix::new(next)?;
                let next_f = datum::objective(d, &next)?;
                if next_f >= f - 1e-14 * f.abs().max(1.0) {
                    break Some((next, next_f));
                }
            }
            t *= 0.5;
            if t < 1e-10 {
                break None;
            }
        };
        let Some((next, next_f)) = accepted else {
            return Ok(SolveResult {
                status: SolveStatus::MaxIterations,
                alpha,
                constant: f,
                residual,
                iterations: it,
                objective_trace: trace,
                damping: 1.0,
                ascent_violations: 0,
            });
        };
        alpha = next;
        f = next_f;
        trace.push((it + 1, f));
    }
    unreachable!("loop returns at the iteration cap")
}

/// Orthonormal basis of the symmetric `n×n` matrices under `⟨X, Y⟩ = tr(XY)`.
fn sym_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            let mut e = DMatrix::zeros(n, n);
            if a == b {
                e[(a, a)] = 1.0;
            } else {
                e[(a, b)] = std::f64::consts::FRAC_1_SQRT_2;
                e[(b, a)] = std::f64::consts::FRAC_1_SQRT_2;
            }
            basis.push(e);
        }
    }
    basis
}

/// How a finite constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FixedPoint,
    /// Fixed-point iterate finished by [`newton_refine`].
    Newton,
    MultiStart,
    /// Extrapolated from regularized data with vanishing auxiliary weight.
    Regularized,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InfiniteReason {
    ScalingCondition { defect: f64 },
    Supercritical { dim: usize, weighted_image_dim: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Finite {
        value: f64,
        method: Method,
        /// Extremizer when the supremum was attained.
        alpha: Option<CovMatrix>,
    },
    Infinite(InfiniteReason),
    Unknown {
        /// Largest objective value seen; always a valid lower bound.
        lower_bound: f64,
        diagnostics: Vec<String>,
    },
}

impl Constant {
    pub fn value(&self) -> Option<f64> {
        match self {
            Constant::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantOptions {
    pub solve: SolveOptions,
    pub seed: u64,
    pub probe_trials: usize,
    pub restarts: usize,
    /// Decreasing auxiliary weights for the regularized fallback.
    pub eps_ladder: Vec<f64>,
    /// Agreement required between restarts and between ladder rungs.
    pub agreement: f64,
}

impl Default for ConstantOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            seed: 0,
            probe_trials: 200,
            restarts: 4,
            eps_ladder: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            agreement: 1e-6,
        }
    }
}

/// Fixed-point solve, followed by Newton refinement when the iteration ran
/// out of steps without diverging.
fn solve_polished(
    d: &BLDatum,
    start: &CovMatrix,
    opts: &SolveOptions,
) -> (Result<SolveResult>, Option<Result<SolveResult>>) {
    let r = fixed_point_solve(d, start, opts);
    let polished = match &r {
        Ok(s) if s.status == SolveStatus::MaxIterations => Some(newton_refine(d, &s.alpha, opts)),
        _ => None,
    };
    (r, polished)
}

/// `f(B, p)`: scaling check, subcriticality probe, fixed-point solve,
/// multi-start, then the regularized ladder; anything unresolved is `Unknown`.
pub fn bl_constant(d: &BLDatum, opts: &ConstantOptions) -> Constant {
    let defect = d.dim() as f64 - d.weighted_output_dim();
    if defect.abs() > SCALING_TOL {
        return Constant::Infinite(InfiniteReason::ScalingCondition { defect });
    }
    if let ProbeVerdict::Violated { dim, weighted_image_dim, .. } =
        datum::subcriticality_probe(d, opts.probe_trials, opts.seed)
    {
        return Constant::Infinite(InfiniteReason::Supercritical { dim, weighted_image_dim });
    }

    let mut diagnostics = Vec::new();
    let mut lower_bound = f64::NEG_INFINITY;
    let record = |label: &str, r: &Result<SolveResult>, lb: &mut f64, diag: &mut Vec<String>| match r {
        Ok(s) => {
            *lb = lb.max(s.objective_trace.iter().map(|&(_, f)| f).fold(f64::NEG_INFINITY, f64::max));
            diag.push(format!(
                "{label}: {:?} after {} iterations, residual {:.3e}, F = {}",
                s.status, s.iterations, s.residual, s.constant
            ));
        }
        Err(e) => diag.push(format!("{label}: {e}")),
    };

    let identity = CovMatrix::identity(d.dim());
    let (first, polished) = solve_polished(d, &identity, &opts.solve);
    record("identity start", &first, &mut lower_bound, &mut diagnostics);
    if let Some(p) = &polished {
        record("Newton refinement", p, &mut lower_bound, &mut diagnostics);
    }
    let newton = matches!(&polished, Some(Ok(p)) if p.converged());
    match polished.unwrap_or(first) {
        Ok(s) if s.converged() => {
            return Constant::Finite {
                value: s.constant,
                method: if newton { Method::Newton } else { Method::FixedPoint },
                alpha: Some(s.alpha),
            };
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut converged: Vec<SolveResult> = Vec::new();
    for k in 0..opts.restarts {
        let start = random::pd_matrix(d.dim(), &mut rng);
        let solve = SolveOptions { damping: 0.5, ..opts.solve.clone() };
        let (r, polished) = solve_polished(d, &start, &solve);
        record(&format!("restart {k}"), &r, &mut lower_bound, &mut diagnostics);
        if let Some(p) = &polished {
            record(&format!("restart {k} Newton"), p, &mut lower_bound, &mut diagnostics);
        }
        if let Ok(s) = polished.unwrap_or(r) {
            if s.converged() {
                converged.push(s);
            }
        }
    }
    if let Some(best) = converged.first() {
        let spread = converged
            .iter()
            .map(|s| (s.constant - best.constant).abs())
            .fold(0.0, f64::max);
        if spread <= opts.agreement * best.constant.abs().max(1.0) {
            return Constant::Finite {
                value: best.constant,
                method: Method::MultiStart,
                alpha: Some(best.alpha.clone()),
            };
        }
        diagnostics.push(format!("restarts disagree by {spread:.3e}"));
        return Constant::Unknown { lower_bound, diagnostics };
    }

    let mut rungs: Vec<(f64, f64)> = Vec::new();
    let mut warm = identity;
    for &eps in &opts.eps_ladder {
        let reg = match datum::regularize(d, eps) {
            Ok(reg) => reg,
            Err(e) => {
                diagnostics.push(format!("regularized eps={eps:e}: {e}"));
                break;
            }
        };
        let (r, polished) = solve_polished(&reg, &warm, &opts.solve);
        record(&format!("regularized eps={eps:e}"), &r, &mut lower_bound, &mut diagnostics);
        if let Some(p) = &polished {
            record(&format!("regularized eps={eps:e} Newton"), p, &mut lower_bound, &mut diagnostics);
        }
        match polished.unwrap_or(r) {
            Ok(s) if s.converged() => {
                rungs.push((eps, s.constant));
                warm = s.alpha;
            }
            _ => break,
        }
    }
    if let [.., (e1, f1), (e2, f2)] = rungs[..] {
        if (f2 - f1).abs() <= opts.agreement * f2.abs().max(1.0) {
            // linear extrapolation to eps = 0
            let value = f2 - e2 * (f1 - f2) / (e1 - e2);
            return Constant::Finite {
                value,
                method: Method::Regularized,
                alpha: None,
            };
        }
        diagnostics.push(format!("regularized constants still moving: {f1} at {e1:e}, {f2} at {e2:e}"));
    }
    Constant::Unknown { lower_bound, diagnostics }
}

/// Kind of `Y = B X`: every output of a classical `X` is classical, otherwise
/// the map decides.
pub(crate) fn output_kind(b: &BLMap, kind_x: SystemKind, index: usize) -> Result<SystemKind> {
    match kind_x {
        SystemKind::Classical => Ok(SystemKind::Classical),
        SystemKind::Quantum => b.kind().map(SystemKind::from).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "map {index} neither preserves nor annihilates the symplectic form"
            ))
        }),
    }
}

/// `Σ p_i S(Y_i|M) + f − S(X|M)`; nonnegative whenever `f ≥ f(B, p)`.
pub fn verify_ssa_gaussian(d: &BLDatum, joint: &GaussianJoint, f_value: f64) -> Result<f64> {
    if joint.x_dim() != d.dim() {
        return Err(Error::DimensionMismatch(format!(
            "X block has dimension {} but the datum acts on {}",
            joint.x_dim(),
            d.dim()
        )));
    }
    if !f_value.is_finite() {
        return Err(Error::InvalidArgument("constant must be finite".into()));
    }
    let mut margin = f_value - conditional_entropy(joint)?;
    for (i, (b, &p)) in d.maps().iter().zip(d.weights()).enumerate() {
        if p == 0.0 {
            continue;
        }
        let kind = output_kind(b, joint.kind_x(), i)?;
        margin += p * conditional_entropy(&joint.pushforward(b.matrix(), kind)?)?;
    }
    Ok(margin)
}

/// `ln RHS − ln LHS` of the functional inequality for centered Gaussian test
/// functions `exp(−yᵀA_i y/2)`.
pub fn verify_bl_integral_gaussian(d: &BLDatum, a: &[DMatrix<f64>], f_value: f64) -> Result<f64> {
    if a.len() != d.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} test matrices for {} maps",
            a.len(),
            d.len()
        )));
    }
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let n = d.dim();
    let mut agg = DMatrix::zeros(n, n);
    let mut ln_rhs = f_value;
    for (i, ((b, &p), ai)) in d.maps().iter().zip(d.weights()).zip(a).enumerate() {
        let ni = b.output_dim();
        if ai.shape() != (ni, ni) {
            return Err(Error::DimensionMismatch(format!("test matrix {i} must be {ni}x{ni}")));
        }
        let ld = linalg::ln_det_pd(ai)
            .ok_or_else(|| Error::InvalidArgument(format!("test matrix {i} is not positive definite")))?;
        ln_rhs += p * (0.5 * ni as f64 * ln_2pi - 0.5 * ld);
        agg += b.matrix().transpose() * ai * b.matrix() * p;
    }
    let ld_agg = linalg::ln_det_pd(&linalg::symmetrize(&agg))
        .ok_or_else(|| Error::InvalidArgument("aggregate quadratic form is not positive definite".into()))?;
    let ln_lhs = 0.5 * n as f64 * ln_2pi - 0.5 * ld_agg;
    Ok(ln_rhs - ln_lhs)
}
