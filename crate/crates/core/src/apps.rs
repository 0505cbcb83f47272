//! Applications: finiteness of rank-one (uncertainty-type) data, the
//! two-sum constant and its entropy-power consequences, correlation bounds
//! under symplectic transformations, and entanglement growth rates of
//! quadratic Hamiltonians.

use nalgebra::{DMatrix, DVector};

use crate::datum::{self, BLDatum};
use crate::entropy::{conditional_entropy, GaussianJoint, SystemKind};
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{bl_constant, Constant, ConstantOptions};
use crate::symplectic::{self, hamiltonian_defect, is_symplectic, CovMatrix};

/// Above this many candidate bases the vertex oracle switches from an
/// enumerated list to the greedy basis oracle.
pub const ENUMERATION_CAP: usize = 200_000;
const MAX_ENUMERATED_MAPS: usize = 20;
const MEMBERSHIP_TOL: f64 = 1e-9;

/// One vertex of a convex-combination certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisWeight {
    /// Map indices whose rows form a basis.
    pub basis: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankOneVerdict {
    /// `p = Σ weight · 1_basis`.
    Finite { certificate: Vec<BasisWeight> },
    /// `p` lies at Euclidean distance `distance` from the basis polytope.
    Infinite { distance: f64 },
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn is_independent(rows: &DMatrix<f64>, idx: &[usize]) -> bool {
    let sub = DMatrix::from_fn(idx.len(), rows.ncols(), |r, c| rows[(idx[r], c)]);
    linalg::numerical_rank(&sub, 1e-12) == idx.len()
}

fn indicator(k: usize, basis: &[usize]) -> DVector<f64> {
    let mut v = DVector::zeros(k);
    for &i in basis {
        v[i] = 1.0;
    }
    v
}

fn enumerate_bases(rows: &DMatrix<f64>, dim: usize) -> Vec<Vec<usize>> {
    fn rec(rows: &DMatrix<f64>, dim: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for i in start..rows.nrows() {
            if rows.nrows() - i < dim - cur.len() {
                break;
            }
            cur.push(i);
            if is_independent(rows, cur) {
                rec(rows, dim, i + 1, cur, out);
            }
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(rows, dim, 0, &mut Vec::new(), &mut out);
    out
}

/// Basis minimizing `Σ_{i∈I} w_i`: greedy on the row matroid.
fn greedy_basis(rows: &DMatrix<f64>, dim: usize, w: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.nrows()).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(dim);
    for i in order {
        basis.push(i);
        if !is_independent(rows, &basis) {
            basis.pop();
        }
        if basis.len() == dim {
            break;
        }
    }
    basis.sort_unstable();
    basis
}

/// Minimum-norm point of the affine hull of the columns of `s`, as affine
/// coefficients.
fn affine_min_norm(s: &DMatrix<f64>) -> DVector<f64> {
    let k = s.ncols();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k)).copy_from(&(s.transpose() * s));
    for i in 0..k {
        kkt[(i, k)] = 1.0;
        kkt[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("SVD with both factors solves");
    sol.rows(0, k).into_owned()
}

/// Decide whether `p` lies in the convex hull of indicator vectors of index
/// sets whose rows form a basis of `ℝ^{2m}`, by Wolfe's minimum-norm-point
/// algorithm on the polytope shifted by `−p`.
pub fn rank_one_finiteness(d: &BLDatum) -> Result<RankOneVerdict> {
    if let Some(i) = d.maps().iter().position(|b| b.output_dim() != 1) {
        return Err(Error::InvalidArgument(format!("map {i} is not a single row")));
    }
    let k = d.len();
    let dim = d.dim();
    let rows = DMatrix::from_fn(k, dim, |r, c| d.maps()[r].matrix()[(0, c)]);
    let p = DVector::from_column_slice(d.weights());
    if linalg::numerical_rank(&rows, 1e-12) < dim {
        // no basis at all, so the polytope is empty
        return Ok(RankOneVerdict::Infinite { distance: f64::INFINITY });
    }
    let enumerated = (k <= MAX_ENUMERATED_MAPS && binomial(k, dim) <= ENUMERATION_CAP)
        .then(|| enumerate_bases(&rows, dim));
    let oracle = |x: &DVector<f64>| -> Vec<usize> {
        match &enumerated {
            Some(list) => list
                .iter()
                .min_by(|a, b| {
                    let fa: f64 = a.iter().map(|&i| x[i]).sum();
                    let fb: f64 = b.iter().map(|&i| x[i]).sum();
                    fa.total_cmp(&fb)
                })
                .expect("rank check guarantees a basis")
                .clone(),
            None => greedy_basis(&rows, dim, x),
        }
    };

    let tol = MEMBERSHIP_TOL * p.norm().max(1.0);
    let mut active: Vec<Vec<usize>> = vec![oracle(&DVector::zeros(k))];
    let mut lambda = vec![1.0];
    let point = |active: &[Vec<usize>], lambda: &[f64]| -> DVector<f64> {
        active
            .iter()
            .zip(lambda)
            .fold(-&p, |acc, (b, &l)| acc + indicator(k, b) * l)
    };
    let mut x = point(&active, &lambda);
    for _ in 0..10_000 {
        if x.norm() <= tol {
            let certificate = active
                .into_iter()
                .zip(lambda)
                .filter(|(_, w)| *w > 0.0)
                .map(|(basis, weight)| BasisWeight { basis, weight })
                .collect();
            return Ok(RankOneVerdict::Finite { certificate });
        }
        let v = oracle(&x);
        let qv = indicator(k, &v) - &p;
        if x.norm_squared() - x.dot(&qv) <= tol * tol || active.contains(&v) {
            return Ok(RankOneVerdict::Infinite { distance: x.norm() });
        }
        active.push(v);
        lambda.push(0.0);
        loop {
            let s = DMatrix::from_columns(&active.iter().map(|b| indicator(k, b) - &p).collect::<Vec<_>>());
            let mu = affine_min_norm(&s);
            if mu.iter().all(|&m| m > 1e-14) {
                lambda = mu.iter().copied().collect();
                break;
            }
            let theta = lambda
                .iter()
                .zip(mu.iter())
                .filter(|(_, &m)| m <= 1e-14)
                .map(|(&l, &m)| l / (l - m))
                .fold(1.0f64, f64::min);
            for (l, &m) in lambda.iter_mut().zip(mu.iter()) {
                *l = (1.0 - theta) * *l + theta * m;
            }
            let keep: Vec<bool> = lambda.iter().map(|&l| l > 1e-14).collect();
            let mut it = keep.iter();
            active.retain(|_| *it.next().unwrap());
            lambda.retain(|&l| l > 1e-14);
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        x = point(&active, &lambda);
    }
    Err(Error::UnknownCapacity(
        "minimum-norm-point iteration did not terminate".into(),
    ))
}

/// `f` of the two-sum datum `(I 0), (0 I), (I I)` on `ℝ^{2n}`:
/// `(n/2) Σ [(1−p_i)ln(1−p_i) − p_i ln p_i]` on `{p ∈ [0,1]³ : Σp = 2}`,
/// infinite elsewhere.
pub fn two_sum_constant(p: [f64; 3], n: usize) -> f64 {
    let xlx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    let inside = p.iter().all(|&q| (0.0..=1.0).contains(&q)) && (p.iter().sum::<f64>() - 2.0).abs() <= 1e-12;
    if !inside {
        return f64::INFINITY;
    }
    0.5 * n as f64 * p.iter().map(|&q| xlx(1.0 - q) - xlx(q)).sum::<f64>()
}

/// `φ_{B⁰}(s) = inf_p (p·s + f(B⁰, p))` for the two-sum datum on `ℝ^{2n}`.
pub fn phi_b0(s: [f64; 3], n: usize) -> f64 {
    let half_n = 0.5 * n as f64;
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // x_i = e^{2s_i/n} rescaled by e^{−2·top/n}
    let x = s.map(|si| ((si - top) / half_n).exp());
    let triangle = x[0] < x[1] + x[2] && x[1] < x[0] + x[2] && x[2] < x[0] + x[1];
    if triangle {
        let q = (x[1] + x[2] - x[0]) * x[0] + (x[0] + x[2] - x[1]) * x[1] + (x[0] + x[1] - x[2]) * x[2];
        half_n * (q / 4.0).ln() + 2.0 * top
    } else {
        (s[0] + s[1]).min(s[0] + s[2]).min(s[1] + s[2])
    }
}

/// Inputs of the entropy-power bound for `Y = A₁X₁ + A₂X₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EPIInput {
    /// `|det A_i|^{1/m}`.
    pub lambda1: f64,
    pub lambda2: f64,
    /// `S(X₁|M)`, `S(X₂|M)`, `S(Y|M)` in nats.
    pub s1: f64,
    pub s2: f64,
    pub s_y: f64,
    pub modes: usize,
}

impl EPIInput {
    pub fn new(lambda1: f64, lambda2: f64, s1: f64, s2: f64, s_y: f64, modes: usize) -> Result<Self> {
        if !(lambda1 > 0.0 && lambda2 > 0.0) || modes == 0 {
            return Err(Error::InvalidArgument("need positive lambdas and at least one mode".into()));
        }
        Ok(Self { lambda1, lambda2, s1, s2, s_y, modes })
    }

    /// Whether the three strict inequalities on `λ₁e^{s₁/m}, λ₂e^{s₂/m}, e^{s_Y/m}` hold.
    pub fn triangle(&self) -> bool {
        let (a, b, c) = self.scaled_powers().0;
        a < b + c && b < a + c && c < a + b
    }

    fn scaled_powers(&self) -> ((f64, f64, f64), f64) {
        let m = self.modes as f64;
        let (u1, u2, u3) = (self.s1 / m + self.lambda1.ln(), self.s2 / m + self.lambda2.ln(), self.s_y / m);
        let top = u1.max(u2).max(u3);
        (((u1 - top).exp(), (u2 - top).exp(), (u3 - top).exp()), top)
    }
}

/// Upper bound on `S(X₁X₂|M)`.
pub fn epi_bound(input: &EPIInput) -> f64 {
    let m = input.modes as f64;
    let ((a, b, c), top) = input.scaled_powers();
    if input.triangle() {
        let q = (b + c - a) * a + (a + c - b) * b + (a + b - c) * c;
        m * ((q / 4.0).ln() + 2.0 * top - input.lambda1.ln() - input.lambda2.ln())
    } else {
        let (l1, l2) = (m * input.lambda1.ln(), m * input.lambda2.ln());
        (input.s1 + input.s2)
            .min(input.s1 + input.s_y - l2)
            .min(input.s2 + input.s_y - l1)
    }
}

/// `φ_B(s) = φ_{B⁰}(s_i + ln|det A_i|) − ln|det A|` for `B_i = A_i⁻¹ B⁰_i A`.
pub fn phi_from_equivalence<F>(base: F, a: &DMatrix<f64>, a_i: &[DMatrix<f64>], s: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if a_i.len() != s.len() {
        return Err(Error::DimensionMismatch(format!("{} matrices for {} entropies", a_i.len(), s.len())));
    }
    let ld = |m: &DMatrix<f64>| {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("equivalence matrices must be square".into()));
        }
        linalg::ln_abs_det(m).ok_or_else(|| Error::InvalidArgument("equivalence matrix is singular".into()))
    };
    let shifted = s
        .iter()
        .zip(a_i)
        .map(|(si, ai)| Ok(si + ld(ai)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(base(&shifted) - ld(a)?)
}

/// The datum `B_i = A_i⁻¹ B⁰_i A` equivalent to `d0`.
pub fn equivalent_datum(d0: &BLDatum, a: &DMatrix<f64>, a_i: &[DMatrix<f64>]) -> Result<BLDatum> {
    if a_i.len() != d0.len() || a.shape() != (d0.dim(), d0.dim()) {
        return Err(Error::DimensionMismatch("equivalence matrices do not fit the datum".into()));
    }
    let maps = d0
        .maps()
        .iter()
        .zip(a_i)
        .map(|(b, ai)| {
            let inv = ai
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::InvalidArgument("equivalence matrix is singular".into()))?;
            Ok(inv * b.matrix() * a)
        })
        .collect::<Result<Vec<_>>>()?;
    BLDatum::from_matrices(d0.modes(), maps, d0.weights().to_vec())
}

/// Quadratic Hamiltonian generator on `m₁ + m₂` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadHamiltonian {
    h: DMatrix<f64>,
    m1: usize,
    m2: usize,
    symmetric: bool,
}

impl QuadHamiltonian {
    /// Requires `HΔ + ΔHᵀ = 0`, so that `e^{tH}` is symplectic for all `t`.
    pub fn new(h: DMatrix<f64>, m1: usize, m2: usize) -> Result<Self> {
        let n = 2 * (m1 + m2);
        if m1 == 0 || m2 == 0 || h.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "expected a {n}x{n} generator with both parts nonempty, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("generator has non-finite entries".into()));
        }
        let scale = linalg::STRUCTURAL_TOL * h.norm().max(1.0);
        let defect = hamiltonian_defect(&h);
        if defect > scale {
            return Err(Error::InvalidArgument(format!(
                "generator does not preserve the symplectic form (defect {defect:.3e})"
            )));
        }
        let symmetric = linalg::asymmetry(&h) <= scale;
        Ok(Self { h, m1, m2, symmetric })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn partition(&self) -> (usize, usize) {
        (self.m1, self.m2)
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Off-diagonal block `H₁₂`.
    pub fn coupling(&self) -> DMatrix<f64> {
        linalg::block(&self.h, 0, 2 * self.m1, 2 * self.m1, 2 * self.m2)
    }

    /// `ln |det S(t)₁₁ · det S(t)₂₂|` with `S(t) = e^{tH}`; `None` on overflow
    /// or a singular diagonal block.
    pub fn log_block_det(&self, t: f64) -> Option<f64> {
        let s = (&self.h * t).exp();
        if s.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let (n1, n2) = (2 * self.m1, 2 * self.m2);
        let v = linalg::ln_abs_det(&linalg::block(&s, 0, 0, n1, n1))?
            + linalg::ln_abs_det(&linalg::block(&s, n1, n1, n2, n2))?;
        v.is_finite().then_some(v)
    }
}

/// `(t, ln |f(t)|)` for any valid generator, symmetric or not.
pub fn log_block_det_trace(h: &QuadHamiltonian, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&t| {
            h.log_block_det(t)
                .map(|v| (t, v))
                .ok_or_else(|| Error::NumericalFailure(format!("matrix exponential overflows at t = {t}")))
        })
        .collect()
}

/// `ln det S(t)₁₁ + ln det S(t)₂₂` for symmetric `H = V diag(λ) Vᵀ`.
///
/// By Cauchy–Binet, `det(V₁ e^{tλ} V₁ᵀ) = Σ_I det(V₁[:, I])² e^{t Σ_{i∈I} λ_i}`
/// over index sets `I` of the block size, so each block determinant is a
/// log-sum-exp of monomials. This is exact for every `t` and never
/// overflows, unlike forming `e^{tH}`.
#[derive(Debug, Clone)]
struct SpectralBlocks {
    /// `(ln det(V_b[:, I])², Σ_{i∈I} λ_i)` per block.
    terms: [Vec<(f64, f64)>; 2],
}

impl SpectralBlocks {
    /// Minors with `|det| ≤ 1e-10` are round-off of exact zeros: the squared
    /// minors of an orthonormal frame sum to one.
    const MINOR_TOL: f64 = 1e-10;

    fn new(h: &QuadHamiltonian) -> Self {
        let eig = h.h.clone().symmetric_eigen();
        let n1 = 2 * h.m1;
        let n = h.h.nrows();
        let block = |start: usize, size: usize| -> Vec<(f64, f64)> {
            let rows = linalg::block(&eig.eigenvectors, start, 0, size, n);
            let mut out = Vec::new();
            for_each_subset(n, size, &mut |idx| {
                let minor = DMatrix::from_fn(size, size, |r, c| rows[(r, idx[c])]);
                let det = minor.determinant();
                if det.abs() > Self::MINOR_TOL {
                    out.push((2.0 * det.abs().ln(), idx.iter().map(|&i| eig.eigenvalues[i]).sum()));
                }
            });
            out
        };
        Self {
            terms: [block(0, n1), block(n1, n - n1)],
        }
    }

    fn log_block_det(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|terms| {
                let top = terms.iter().map(|&(c, l)| c + t * l).fold(f64::NEG_INFINITY, f64::max);
                top + terms.iter().map(|&(c, l)| (c + t * l - top).exp()).sum::<f64>().ln()
            })
            .sum()
    }
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(n, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut Vec::with_capacity(k), f);
}

/// Largest number of index sets for which the spectral evaluation is used.
const SPECTRAL_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementRate {
    /// Slope of `ln f(t)` over the last decade of the grid.
    pub lambda: f64,
    pub r_squared: f64,
    /// `R² ≥ 0.999`.
    pub asymptotic: bool,
    pub trace: Vec<(f64, f64)>,
    pub t_max: f64,
    /// Whether `t_max` had to be reduced to avoid overflow.
    pub reduced: bool,
    /// `max |ln f(−t) − ln f(t)|` over the grid.
    pub symmetry_defect: f64,
}

/// `Λ` with `ln f(t) = Λt + O(1)`, `f(t) = det S(t)₁₁ det S(t)₂₂`.
///
/// Only symmetric generators are accepted: for those `e^{tH}` is symmetric
/// positive definite and `½ ln f(t)` bounds the entanglement generated from
/// any pure state. Use [`log_block_det_trace`] otherwise.
///
/// `f` is evaluated spectrally when the partition is small enough, else from
/// `e^{tH}` by scaling and squaring, halving `t_max` on overflow.
pub fn entanglement_rate(h: &QuadHamiltonian, t_max: f64, samples: usize) -> Result<EntanglementRate> {
    if !h.is_symmetric() {
        return Err(Error::InvalidArgument(
            "linear entanglement growth is only established for symmetric generators; \
             ln f(t) is still available via the block-determinant trace"
                .into(),
        ));
    }
    if !(t_max > 0.0) || !t_max.is_finite() || samples < 3 {
        return Err(Error::InvalidArgument("need t_max > 0 and at least 3 samples".into()));
    }
    let n = h.h.nrows();
    let spectral = (binomial(n, 2 * h.m1) <= SPECTRAL_CAP).then(|| SpectralBlocks::new(h));
    let eval = |t: f64| -> Option<f64> {
        match &spectral {
            Some(sb) => Some(sb.log_block_det(t)).filter(|v| v.is_finite()),
            None => h.log_block_det(t),
        }
    };
    let mut t_top = t_max;
    let mut reduced = false;
    let (trace, mirrored) = loop {
        let lo = (t_top * 1e-3).ln();
        let hi = t_top.ln();
        let grid = (0..samples).map(|k| (lo + (hi - lo) * k as f64 / (samples - 1) as f64).exp());
        let evaluated: Option<Vec<(f64, f64, f64)>> = grid.map(|t| Some((t, eval(t)?, eval(-t)?))).collect();
        match evaluated {
            Some(v) => break (v.iter().map(|&(t, f, _)| (t, f)).collect::<Vec<_>>(), v),
            None => {
                t_top *= 0.5;
                reduced = true;
                if t_top < 1e-12 * t_max {
                    return Err(Error::NumericalFailure("matrix exponential overflows on every grid".into()));
                }
            }
        }
    };
    let symmetry_defect = mirrored.iter().map(|&(_, f, g)| (f - g).abs()).fold(0.0, f64::max);

    let window: Vec<(f64, f64)> = trace.iter().copied().filter(|&(t, _)| t >= t_top / 10.0).collect();
    let nw = window.len() as f64;
    let mean_t = window.iter().map(|p| p.0).sum::<f64>() / nw;
    let mean_v = window.iter().map(|p| p.1).sum::<f64>() / nw;
    let sxx: f64 = window.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = window.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_v)).sum();
    let lambda = sxy / sxx;
    let ss_res: f64 = window
        .iter()
        .map(|p| (p.1 - mean_v - lambda * (p.0 - mean_t)).powi(2))
        .sum();
    let ss_tot: f64 = window.iter().map(|p| (p.1 - mean_v).powi(2)).sum();
    // a flat trace is fitted exactly
    let r_squared = if ss_tot <= 1e-24 * nw { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(EntanglementRate {
        lambda,
        r_squared,
        asymptotic: r_squared >= 0.999,
        trace,
        t_max: t_top,
        reduced,
        symmetry_defect,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationBound {
    /// `½I(X₁;X₂|M)(γ) + ½I(X₁;X₂|M)(SγSᵀ)`.
    pub lhs: f64,
    /// `−f` for the bipartite datum of `S`.
    pub rhs: f64,
    pub margin: f64,
    /// Pure global state with trivial memory: `lhs` is a sum of
    /// entanglement entropies. Otherwise it is only a correlation bound.
    pub entanglement: bool,
}

fn mutual_information(joint: &GaussianJoint, n1: usize, n2: usize) -> Result<f64> {
    let n = n1 + n2;
    let first = DMatrix::from_fn(n1, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let second = DMatrix::from_fn(n2, n, |r, c| if r + n1 == c { 1.0 } else { 0.0 });
    Ok(conditional_entropy(&joint.pushforward(&first, SystemKind::Quantum)?)?
        + conditional_entropy(&joint.pushforward(&second, SystemKind::Quantum)?)?
        - conditional_entropy(joint)?)
}

/// Lower bound on the conditional mutual information of `X₁X₂` before and
/// after the symplectic transformation `S`.
pub fn correlation_lower_bound(
    s: &DMatrix<f64>,
    joint: &GaussianJoint,
    m1: usize,
    m2: usize,
    opts: &ConstantOptions,
) -> Result<CorrelationBound> {
    let n = 2 * (m1 + m2);
    if joint.kind_x() != SystemKind::Quantum || joint.x_dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "need a quantum X block of dimension {n}, got {} ({:?})",
            joint.x_dim(),
            joint.kind_x()
        )));
    }
    if !is_symplectic(s, linalg::STRUCTURAL_TOL)? {
        return Err(Error::InvalidArgument("transformation is not symplectic".into()));
    }
    let d = BLDatum::bipartite_symplectic(s, m1, m2)?;
    let rhs = match bl_constant(&d, opts) {
        Constant::Finite { value, .. } => -value,
        Constant::Infinite(_) => f64::NEG_INFINITY,
        Constant::Unknown { diagnostics, .. } => {
            return Err(Error::NumericalFailure(format!(
                "constant undetermined: {}",
                diagnostics.join("; ")
            )))
        }
    };
    let (n1, n2) = (2 * m1, 2 * m2);
    let before = mutual_information(joint, n1, n2)?;
    let after = mutual_information(&joint.pushforward(s, SystemKind::Quantum)?, n1, n2)?;
    let lhs = 0.5 * (before + after);
    let pure = joint.m_dim() == 0
        && symplectic::symplectic_eigenvalues(joint.cov())?
            .iter()
            .all(|&nu| nu - 0.5 <= symplectic::STATE_TOL);
    Ok(CorrelationBound {
        lhs,
        rhs,
        margin: lhs - rhs,
        entanglement: pure,
    })
}

/// `−½ ln(det S₁₁ det S₂₂)` for a symmetric positive-definite symplectic `S`.
pub fn symmetric_symplectic_constant(s: &DMatrix<f64>, m1: usize, m2: usize) -> Result<f64> {
    let (n1, n2) = (2 * m1, 2 * m2);
    if s.shape() != (n1 + n2, n1 + n2) {
        return Err(Error::DimensionMismatch("block sizes do not match S".into()));
    }
    let ld = |b: DMatrix<f64>| {
        linalg::ln_det_pd(&b).ok_or_else(|| Error::InvalidArgument("diagonal block is not positive definite".into()))
    };
    Ok(-0.5 * (ld(linalg::block(s, 0, 0, n1, n1))? + ld(linalg::block(s, n1, n1, n2, n2))?))
}

/// Stationarity check used by the closed form above: `α = S⁻¹`.
pub fn symmetric_symplectic_extremizer(s: &DMatrix<f64>) -> Result<CovMatrix> {
    let inv = linalg::inv_pd(s).ok_or_else(|| Error::InvalidArgument("S is not positive definite".into()))?;
    CovMatrix::new(inv)
}

/// Residual of `α = S⁻¹` for the bipartite datum of `S`.
pub fn symmetric_symplectic_residual(s: &DMatrix<f64>, m1: usize, m2: usize) -> Result<f64> {
    let d = BLDatum::bipartite_symplectic(s, m1, m2)?;
    datum::stationarity_residual(&d, &symmetric_symplectic_extremizer(s)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(m: usize, data: &[&[f64]], p: &[f64]) -> BLDatum {
        let maps = data.iter().map(|r| DMatrix::from_row_slice(1, 2 * m, r)).collect();
        BLDatum::from_matrices(m, maps, p.to_vec()).unwrap()
    }

    fn check_certificate(d: &BLDatum, cert: &[BasisWeight]) {
        let total: f64 = cert.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let mut p = vec![0.0; d.len()];
        for c in cert {
            assert!(c.weight > 0.0);
            for &i in &c.basis {
                p[i] += c.weight;
            }
        }
        for (a, b) in p.iter().zip(d.weights()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_one_examples() {
        let d = rows(1, &[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0]);
        match rank_one_finiteness(&d).unwrap() {
            RankOneVerdict::Finite { certificate } => {
                assert_eq!(certificate.len(), 1);
                assert_eq!(certificate[0].basis, vec![0, 1]);
            }
            v => panic!("{v:?}"),
        }
        let d = rows(1, &[&[1.0, 0.0], &[1.0, 0.0]], &[1.0, 1.0]);
        assert!(matches!(rank_one_finiteness(&d).unwrap(), RankOneVerdict::Infinite { .. }));

        let d = rows(1, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]], &[2.0 / 3.0; 3]);
        match rank_one_finiteness(&d).unwrap() {
            RankOneVerdict::Finite { certificate } => check_certificate(&d, &certificate),
            v => panic!("{v:?}"),
        }
        let d = rows(1, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]], &[1.2, 0.4, 0.4]);
        match rank_one_finiteness(&d).unwrap() {
            RankOneVerdict::Infinite { distance } => assert!(distance > 0.1),
            v => panic!("{v:?}"),
        }
        let d = BLDatum::position_momentum(2).unwrap();
        assert!(rank_one_finiteness(&d).is_err());
    }

    #[test]
    fn greedy_oracle_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let k = 6;
            let r = random::gaussian_matrix(k, 4, &mut rng);
            let w = DVector::from_fn(k, |_, _| rng.random::<f64>());
            let g = greedy_basis(&r, 4, &w);
            let best = enumerate_bases(&r, 4)
                .into_iter()
                .map(|b| b.iter().map(|&i| w[i]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((g.iter().map(|&i| w[i]).sum::<f64>() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_weights_on_generic_rows_are_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 7;
        let r = random::gaussian_matrix(k, 4, &mut rng);
        let maps = (0..k).map(|i| r.rows(i, 1).into_owned()).collect();
        let d = BLDatum::from_matrices(2, maps, vec![4.0 / k as f64; k]).unwrap();
        match rank_one_finiteness(&d).unwrap() {
            RankOneVerdict::Finite { certificate } => check_certificate(&d, &certificate),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn two_sum_constant_region() {
        assert_eq!(two_sum_constant([1.0, 1.0, 0.0], 3), 0.0);
        assert_eq!(two_sum_constant([1.2, 0.4, 0.4], 1), f64::INFINITY);
        assert_eq!(two_sum_constant([1.0, 1.0, 1.0], 1), f64::INFINITY);
        let v = two_sum_constant([2.0 / 3.0; 3], 1);
        assert!((v + 0.143_841_036_225_890_2).abs() < 1e-12);
        assert!((two_sum_constant([2.0 / 3.0; 3], 4) - 4.0 * v).abs() < 1e-12);
    }

    #[test]
    fn phi_b0_examples() {
        for &n in &[1, 2, 4] {
            for &s in &[-3.0, 0.0, 0.7, 50.0] {
                let v = phi_b0([s; 3], n);
                assert!((v - (2.0 * s + 0.5 * n as f64 * 0.75f64.ln())).abs() < 1e-10 * s.abs().max(1.0));
            }
        }
        assert_eq!(phi_b0([0.1, 0.2, 10.0], 1), 0.1 + 0.2);
    }

    #[test]
    fn phi_b0_below_every_admissible_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..4);
            let s = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let phi = phi_b0(s, n);
            for _ in 0..20 {
                let (p1, p2): (f64, f64) = (rng.random(), rng.random());
                let p3 = 2.0 - p1 - p2;
                if !(0.0..=1.0).contains(&p3) {
                    continue;
                }
                let p = [p1, p2, p3];
                let val = p.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() + two_sum_constant(p, n);
                assert!(phi <= val + 1e-8);
            }
        }
    }

    #[test]
    fn epi_matches_phi_b0_through_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut branches = [0, 0];
        for _ in 0..200 {
            let m = rng.random_range(1..3);
            let a1 = random::gaussian_matrix(2 * m, 2 * m, &mut rng);
            let a2 = random::gaussian_matrix(2 * m, 2 * m, &mut rng);
            let l1 = (linalg::ln_abs_det(&a1).unwrap() / m as f64).exp();
            let l2 = (linalg::ln_abs_det(&a2).unwrap() / m as f64).exp();
            let s = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let input = EPIInput::new(l1, l2, s[0], s[1], s[2], m).unwrap();
            branches[input.triangle() as usize] += 1;
            let a = linalg::direct_sum(&a1, &a2);
            let via = phi_from_equivalence(
                |x| phi_b0([x[0], x[1], x[2]], 2 * m),
                &a,
                &[a1, a2, DMatrix::identity(2 * m, 2 * m)],
                &s,
            )
            .unwrap();
            assert!((epi_bound(&input) - via).abs() < 1e-9, "{input:?}");
        }
        assert!(branches[0] > 0 && branches[1] > 0);
    }

    #[test]
    fn epi_equal_inputs() {
        let s = 0.8;
        for m in 1..4 {
            let input = EPIInput::new(1.0, 1.0, s, s, s, m).unwrap();
            let expected = m as f64 * (0.75 * (s / m as f64).exp().powi(2)).ln();
            assert!((epi_bound(&input) - expected).abs() < 1e-12);
            assert!((epi_bound(&input) - phi_b0([s; 3], 2 * m)).abs() < 1e-12);
        }
    }

    #[test]
    fn equivalence_identity_and_scalar() {
        let s = [0.3, -0.2, 1.1];
        let base = |x: &[f64]| phi_b0([x[0], x[1], x[2]], 1);
        let id1 = DMatrix::<f64>::identity(1, 1);
        let id2 = DMatrix::<f64>::identity(2, 2);
        let same = phi_from_equivalence(base, &id2, &[id1.clone(), id1.clone(), id1.clone()], &s).unwrap();
        assert_eq!(same, base(&s));
        let c = DMatrix::from_element(1, 1, 3.0);
        let shifted = phi_from_equivalence(base, &id2, &[c, id1.clone(), id1.clone()], &s).unwrap();
        assert_eq!(shifted, base(&[s[0] + 3.0f64.ln(), s[1], s[2]]));
        assert!(phi_from_equivalence(base, &DMatrix::zeros(2, 2), &[id1.clone(), id1.clone(), id1], &s).is_err());
    }

    fn squeezer(r: f64) -> QuadHamiltonian {
        let h = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, r, 0.0, 0.0, 0.0, 0.0, -r, r, 0.0, 0.0, 0.0, 0.0, -r, 0.0, 0.0],
        );
        QuadHamiltonian::new(h, 1, 1).unwrap()
    }

    #[test]
    fn squeezer_rate() {
        let r = 0.7;
        let h = squeezer(r);
        assert!(h.is_symmetric());
        for &t in &[0.1, 1.0, 5.0] {
            let exact = 4.0 * (r * t).cosh().ln();
            assert!((h.log_block_det(t).unwrap() - exact).abs() < 1e-10);
        }
        let spectral = SpectralBlocks::new(&h);
        for &t in &[-3.0, 0.0, 0.5, 4.0] {
            assert!((spectral.log_block_det(t) - h.log_block_det(t).unwrap()).abs() < 1e-9);
        }
        let rate = entanglement_rate(&h, 200.0, 60).unwrap();
        assert!((rate.lambda - 4.0 * r).abs() < 1e-9);
        assert!(rate.asymptotic);
        assert!(rate.symmetry_defect < 1e-8);
        assert!(!rate.reduced);
        // t_max = 10/‖H‖₂ is already in the asymptotic regime
        let op_norm = linalg::singular_values(h.matrix())[0];
        let short = entanglement_rate(&h, 10.0 / op_norm, 60).unwrap();
        let doubled = entanglement_rate(&h, 20.0 / op_norm, 60).unwrap();
        assert!((doubled.lambda - short.lambda).abs() < 0.02 * short.lambda);
    }

    #[test]
    fn block_diagonal_has_zero_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h1 = random::symmetric_hamiltonian(1, 0.5, &mut rng);
        let h2 = random::symmetric_hamiltonian(2, 0.5, &mut rng);
        let h = QuadHamiltonian::new(linalg::direct_sum(&h1, &h2), 1, 2).unwrap();
        assert_eq!(h.coupling().norm(), 0.0);
        let rate = entanglement_rate(&h, 20.0, 40).unwrap();
        assert!(rate.lambda.abs() <= 1e-6);
    }

    #[test]
    fn spectral_matches_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m1, m2) in &[(1, 1), (1, 2), (2, 2)] {
            let h = QuadHamiltonian::new(random::symmetric_hamiltonian(m1 + m2, 0.4, &mut rng), m1, m2).unwrap();
            let spectral = SpectralBlocks::new(&h);
            for &t in &[-2.0, -0.3, 0.0, 0.7, 2.0] {
                let direct = h.log_block_det(t).unwrap();
                assert!((spectral.log_block_det(t) - direct).abs() < 1e-8, "{t}: {direct}");
            }
        }
    }

    #[test]
    fn exponential_overflow_detected() {
        assert!(squeezer(1.0).log_block_det(5000.0).is_none());
        assert!(log_block_det_trace(&squeezer(1.0), &[1.0, 5000.0]).is_err());
    }

    #[test]
    fn non_symmetric_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut h = random::hamiltonian(2, 0.5, &mut rng);
        while linalg::asymmetry(&h) < 1e-3 {
            h = random::hamiltonian(2, 0.5, &mut rng);
        }
        let h = QuadHamiltonian::new(h, 1, 1).unwrap();
        assert!(!h.is_symmetric());
        assert!(entanglement_rate(&h, 10.0, 20).is_err());
        assert_eq!(log_block_det_trace(&h, &[0.0, 0.5, 1.0]).unwrap()[0].1, 0.0);

        let bad = DMatrix::<f64>::identity(4, 4);
        assert!(QuadHamiltonian::new(bad, 1, 1).is_err());
    }

    #[test]
    fn correlation_bound_vacuum_under_squeezing() {
        let opts = ConstantOptions::default();
        let h = squeezer(1.0);
        for &t in &[0.0, 0.3, 1.0] {
            let s = (h.matrix() * t).exp();
            let joint = GaussianJoint::without_memory(CovMatrix::scaled_identity(4, 0.5), SystemKind::Quantum).unwrap();
            let b = correlation_lower_bound(&s, &joint, 1, 1, &opts).unwrap();
            assert!(b.entanglement);
            assert!(b.margin >= -1e-8, "{b:?}");
            let closed = symmetric_symplectic_constant(&s, 1, 1).unwrap();
            assert!((b.rhs + closed).abs() < 1e-8);
            assert!(symmetric_symplectic_residual(&s, 1, 1).unwrap() < 1e-9);
        }
    }
}
