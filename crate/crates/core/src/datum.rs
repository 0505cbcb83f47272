//! Brascamp–Lieb data `(B, p)` on the phase space `ℝ^{2m}` of `m` modes.
//!
//! A datum is an ordered list of full-row-rank maps `B_i : ℝ^{2m} → ℝ^{n_i}`
//! with nonnegative weights `p_i`. The log-det objective
//!
//! ```text
//! F(α) = ½ ln det α − Σ (p_i/2) ln det(B_i α B_iᵀ)
//! ```
//!
//! is scale invariant exactly when `2m = Σ p_i n_i`, and its stationary points
//! solve `Σ p_i B_iᵀ (B_i α B_iᵀ)⁻¹ B_i = α⁻¹`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, STRUCTURAL_TOL};
use crate::random;
use crate::symplectic::{classify_map, CovMatrix, MapKind, SymplecticForm};

/// Relative singular-value threshold for ranks of restricted maps.
pub const RANK_RTOL: f64 = 1e-12;

/// One map `B_i` of a datum.
#[derive(Debug, Clone, PartialEq)]
pub struct BLMap {
    matrix: DMatrix<f64>,
    /// `None` for maps that are neither symplectic nor commuting; such maps
    /// are fine for the classical constant but carry no entropy semantics.
    kind: Option<MapKind>,
}

impl BLMap {
    /// Wrap `matrix`, deriving its kind. The column count must be even.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.ncols() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "maps act on an even-dimensional phase space, got {} columns",
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("map has non-finite entries".into()));
        }
        let form = SymplecticForm::new(matrix.ncols() / 2)?;
        let kind = classify_map(&matrix, &form, STRUCTURAL_TOL)?;
        Ok(Self { matrix, kind })
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> Option<MapKind> {
        self.kind
    }

    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// A Brascamp–Lieb datum together with its weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BLDatum {
    modes: usize,
    maps: Vec<BLMap>,
    weights: Vec<f64>,
}

impl BLDatum {
    pub fn new(modes: usize, maps: Vec<BLMap>, weights: Vec<f64>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument("datum needs at least one mode".into()));
        }
        if maps.is_empty() {
            return Err(Error::InvalidArgument("datum has no maps".into()));
        }
        if maps.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} maps but {} weights",
                maps.len(),
                weights.len()
            )));
        }
        for (i, b) in maps.iter().enumerate() {
            if b.input_dim() != 2 * modes {
                return Err(Error::DimensionMismatch(format!(
                    "map {i} acts on dimension {} but the datum has {} modes",
                    b.input_dim(),
                    modes
                )));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("weights must be finite and nonnegative, got {w}")));
        }
        Ok(Self { modes, maps, weights })
    }

    /// Build from raw matrices, classifying each.
    pub fn from_matrices(modes: usize, maps: Vec<DMatrix<f64>>, weights: Vec<f64>) -> Result<Self> {
        let maps = maps.into_iter().map(BLMap::new).collect::<Result<Vec<_>>>()?;
        Self::new(modes, maps, weights)
    }

    /// `K = 1`, `B = I_{2m}`, `p = (1)`.
    pub fn identity(modes: usize) -> Result<Self> {
        Self::from_matrices(modes, vec![DMatrix::identity(2 * modes, 2 * modes)], vec![1.0])
    }

    /// Position rows `R_1, R_3, …` and momentum rows `R_2, R_4, …` with
    /// `p = (1, 1)`.
    pub fn position_momentum(modes: usize) -> Result<Self> {
        let n = 2 * modes;
        let q = DMatrix::from_fn(modes, n, |i, j| if j == 2 * i { 1.0 } else { 0.0 });
        let p = DMatrix::from_fn(modes, n, |i, j| if j == 2 * i + 1 { 1.0 } else { 0.0 });
        Self::from_matrices(modes, vec![q, p], vec![1.0, 1.0])
    }

    /// `(I_n 0)`, `(0 I_n)`, `(I_n I_n)` on `ℝ^{2n}` with the given weights.
    pub fn two_sum(n: usize, weights: [f64; 3]) -> Result<Self> {
        let id = DMatrix::<f64>::identity(n, n);
        let zero = DMatrix::<f64>::zeros(n, n);
        let maps = vec![
            linalg::hstack(&[&id, &zero]),
            linalg::hstack(&[&zero, &id]),
            linalg::hstack(&[&id, &id]),
        ];
        Self::from_matrices(n, maps, weights.to_vec())
    }

    /// The bipartite datum of a symplectic `S` on `m₁ + m₂` modes: both
    /// coordinate blocks and both row blocks of `S`, weights `½`.
    pub fn bipartite_symplectic(s: &DMatrix<f64>, m1: usize, m2: usize) -> Result<Self> {
        let (n1, n2) = (2 * m1, 2 * m2);
        let n = n1 + n2;
        if s.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "expected a {n}x{n} symplectic matrix, got {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        let b1 = linalg::hstack(&[&DMatrix::identity(n1, n1), &DMatrix::zeros(n1, n2)]);
        let b2 = linalg::hstack(&[&DMatrix::zeros(n2, n1), &DMatrix::identity(n2, n2)]);
        let s1 = linalg::block(s, 0, 0, n1, n);
        let s2 = linalg::block(s, n1, 0, n2, n);
        Self::from_matrices(m1 + m2, vec![b1, b2, s1, s2], vec![0.5; 4])
    }

    /// `(I 0)`, `(0 I)`, `(A₁ A₂)` on two `m`-mode systems.
    pub fn beam_combiner(a1: &DMatrix<f64>, a2: &DMatrix<f64>, weights: [f64; 3]) -> Result<Self> {
        let n = a1.nrows();
        if a1.shape() != (n, n) || a2.shape() != (n, n) || n % 2 != 0 {
            return Err(Error::DimensionMismatch("A1, A2 must be equal even square matrices".into()));
        }
        let b1 = linalg::hstack(&[&DMatrix::identity(n, n), &DMatrix::zeros(n, n)]);
        let b2 = linalg::hstack(&[&DMatrix::zeros(n, n), &DMatrix::identity(n, n)]);
        let b3 = linalg::hstack(&[a1, a2]);
        Self::from_matrices(n, vec![b1, b2, b3], weights.to_vec())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Ambient dimension `2m`.
    pub fn dim(&self) -> usize {
        2 * self.modes
    }

    pub fn maps(&self) -> &[BLMap] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Same maps, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.modes, self.maps.clone(), weights)
    }

    /// `Σ p_i n_i`.
    pub fn weighted_output_dim(&self) -> f64 {
        self.maps
            .iter()
            .zip(&self.weights)
            .map(|(b, p)| p * b.output_dim() as f64)
            .sum()
    }
}

/// `|2m − Σ p_i n_i| ≤ tol`.
pub fn scaling_condition(d: &BLDatum, tol: f64) -> bool {
    (d.dim() as f64 - d.weighted_output_dim()).abs() <= tol
}

fn check_alpha(d: &BLDatum, alpha: &CovMatrix) -> Result<()> {
    if alpha.dim() != d.dim() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has dimension {} but the datum acts on {}",
            alpha.dim(),
            d.dim()
        )));
    }
    Ok(())
}

/// `F_{B,p}(α)` in nats.
pub fn objective(d: &BLDatum, alpha: &CovMatrix) -> Result<f64> {
    check_alpha(d, alpha)?;
    let ld = linalg::ln_det_pd(alpha)
        .ok_or_else(|| Error::InvalidArgument("alpha is not positive definite".into()))?;
    let mut f = 0.5 * ld;
    for (i, (b, &p)) in d.maps.iter().zip(&d.weights).enumerate() {
        if p == 0.0 {
            continue;
        }
        let push = alpha.congruence(b.matrix())?;
        let ldi = linalg::ln_det_pd(&push).ok_or(Error::DegeneratePushforward { index: i })?;
        f -= 0.5 * p * ldi;
    }
    Ok(f)
}

/// `Σ p_i B_iᵀ (B_i α B_iᵀ)⁻¹ B_i` (symmetrized).
pub fn weighted_pullback(d: &BLDatum, alpha: &CovMatrix) -> Result<DMatrix<f64>> {
    check_alpha(d, alpha)?;
    let n = d.dim();
    let mut acc = DMatrix::zeros(n, n);
    for (i, (b, &p)) in d.maps.iter().zip(&d.weights).enumerate() {
        if p == 0.0 {
            continue;
        }
        let push = alpha.congruence(b.matrix())?;
        let inv = linalg::inv_pd(&push).ok_or(Error::DegeneratePushforward { index: i })?;
        acc += b.matrix().transpose() * inv * b.matrix() * p;
    }
    Ok(linalg::symmetrize(&acc))
}

/// `‖Σ p_i B_iᵀ(B_i α B_iᵀ)⁻¹B_i − α⁻¹‖_F`.
pub fn stationarity_residual(d: &BLDatum, alpha: &CovMatrix) -> Result<f64> {
    let m = weighted_pullback(d, alpha)?;
    let inv = linalg::inv_pd(alpha).ok_or_else(|| Error::InvalidArgument("alpha is not positive definite".into()))?;
    Ok((m - inv).norm())
}

/// Outcome of [`subcriticality_probe`].
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeVerdict {
    /// Every tested subspace satisfied `dim V ≤ Σ p_i dim B_i V`. This is not a
    /// proof that all subspaces do.
    NoViolationFound { tested: usize },
    /// A supercritical subspace, spanned by the orthonormal columns of `frame`.
    Violated {
        frame: DMatrix<f64>,
        dim: usize,
        weighted_image_dim: f64,
    },
}

impl ProbeVerdict {
    pub fn is_violated(&self) -> bool {
        matches!(self, ProbeVerdict::Violated { .. })
    }
}

/// `Σ p_i dim(B_i V)` for `V` spanned by the orthonormal columns of `frame`.
pub fn weighted_image_dim(d: &BLDatum, frame: &DMatrix<f64>) -> f64 {
    d.maps
        .iter()
        .zip(&d.weights)
        .map(|(b, &p)| p * restricted_rank(b.matrix(), frame) as f64)
        .sum()
}

fn restricted_rank(b: &DMatrix<f64>, frame: &DMatrix<f64>) -> usize {
    if frame.ncols() == 0 {
        return 0;
    }
    let norm = linalg::singular_values(b).first().copied().unwrap_or(0.0);
    let thresh = b.nrows().max(b.ncols()) as f64 * norm * RANK_RTOL;
    linalg::singular_values(&(b * frame)).iter().filter(|&&s| s > thresh).count()
}

fn structured_candidates(d: &BLDatum) -> Vec<DMatrix<f64>> {
    let n = d.dim();
    let k = d.len();
    let mut out = Vec::new();
    // kernels of every group of maps (all groups when K is small)
    let groups: Vec<Vec<usize>> = if k <= 12 {
        (1..(1usize << k))
            .map(|mask| (0..k).filter(|i| mask & (1 << i) != 0).collect())
            .collect()
    } else {
        let mut g: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
        for i in 0..k {
            for j in i + 1..k {
                g.push(vec![i, j]);
            }
        }
        g
    };
    for group in groups {
        let parts: Vec<&DMatrix<f64>> = group.iter().map(|&i| d.maps[i].matrix()).collect();
        let stacked = linalg::vstack(&parts);
        out.push(linalg::null_space(&stacked, RANK_RTOL));
    }
    // row spaces of single maps
    for b in &d.maps {
        out.push(linalg::orthonormalize(&b.matrix().transpose()));
    }
    // coordinate subspaces
    let coord_masks: Vec<usize> = if n <= 10 {
        (1..(1usize << n) - 1).collect()
    } else {
        (0..n).flat_map(|j| [1usize << j, ((1usize << n) - 1) ^ (1 << j)]).collect()
    };
    for mask in coord_masks {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        out.push(DMatrix::from_fn(n, cols.len(), |r, c| if r == cols[c] { 1.0 } else { 0.0 }));
    }
    out.retain(|f| f.ncols() > 0 && f.ncols() < n);
    out
}

/// Search for a subspace `V` with `dim V > Σ p_i dim B_i V`.
///
/// Structured candidates (kernels of groups of maps, row spaces, coordinate
/// subspaces) are tried first, then `trials` random subspaces of uniformly
/// random dimension in `1..2m`. The probe can refute finiteness but never
/// certify it.
pub fn subcriticality_probe(d: &BLDatum, trials: usize, seed: u64) -> ProbeVerdict {
    let n = d.dim();
    let check = |frame: DMatrix<f64>| -> Option<ProbeVerdict> {
        let dim = frame.ncols();
        let w = weighted_image_dim(d, &frame);
        (dim as f64 > w + 1e-9).then_some(ProbeVerdict::Violated {
            frame,
            dim,
            weighted_image_dim: w,
        })
    };
    let mut tested = 0;
    for frame in structured_candidates(d) {
        tested += 1;
        if let Some(v) = check(frame) {
            return v;
        }
    }
    if n >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let k = rng.random_range(1..n);
            tested += 1;
            if let Some(v) = check(random::orthonormal_frame(n, k, &mut rng)) {
                return v;
            }
        }
    }
    ProbeVerdict::NoViolationFound { tested }
}

/// Mix `d` with the auxiliary datum `e_1, …, e_{2m}, Σ e_i` (weights
/// `2m/(2m+1)`), whose only critical subspaces are `{0}` and `ℝ^{2m}`:
/// weights become `((1−ε)p, ε p′)`.
pub fn regularize(d: &BLDatum, eps: f64) -> Result<BLDatum> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("regularization weight must lie in (0, 1], got {eps}")));
    }
    let n = d.dim();
    let aux_weight = n as f64 / (n as f64 + 1.0);
    let mut maps = d.maps.clone();
    let mut weights: Vec<f64> = d.weights.iter().map(|p| (1.0 - eps) * p).collect();
    for i in 0..n {
        maps.push(BLMap::new(DMatrix::from_fn(1, n, |_, j| if i == j { 1.0 } else { 0.0 }))?);
        weights.push(eps * aux_weight);
    }
    maps.push(BLMap::new(DMatrix::from_element(1, n, 1.0))?);
    weights.push(eps * aux_weight);
    BLDatum::new(d.modes, maps, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;

    fn b0_alpha(p: [f64; 3]) -> CovMatrix {
        // extremizer for the (I 0), (0 I), (I I) datum with n = 1
        let off = -(1.0 - p[0]) * (1.0 - p[1]);
        CovMatrix::from_row_slice(2, &[p[0] * (1.0 - p[0]), off, off, p[1] * (1.0 - p[1])]).unwrap()
    }

    fn b0_closed_form(p: [f64; 3]) -> f64 {
        0.5 * p.iter().map(|&q| (1.0 - q) * (1.0 - q).ln() - q * q.ln()).sum::<f64>()
    }

    #[test]
    fn scaling_condition_examples() {
        for m in 1..4 {
            assert!(scaling_condition(&BLDatum::position_momentum(m).unwrap(), 1e-12));
            assert!(scaling_condition(&BLDatum::identity(m).unwrap(), 1e-12));
        }
        assert!(!scaling_condition(&BLDatum::two_sum(2, [1.0, 1.0, 1.0]).unwrap(), 1e-12));
        assert!(scaling_condition(&BLDatum::two_sum(2, [0.5, 0.7, 0.8]).unwrap(), 1e-12));
    }

    #[test]
    fn kinds_of_fixtures() {
        let eur = BLDatum::position_momentum(2).unwrap();
        assert!(eur.maps().iter().all(|b| b.kind() == Some(MapKind::Classical)));
        let b0 = BLDatum::two_sum(1, [1.0; 3]).unwrap();
        assert!(b0.maps().iter().all(|b| b.kind() == Some(MapKind::Classical)));
        // (I I) scales the form by 2 for n ≥ 2
        let b0 = BLDatum::two_sum(2, [1.0; 3]).unwrap();
        assert_eq!(b0.maps()[0].kind(), Some(MapKind::Quantum));
        assert_eq!(b0.maps()[2].kind(), None);
    }

    #[test]
    fn invalid_data_rejected() {
        let b = DMatrix::<f64>::identity(2, 2);
        assert!(BLDatum::from_matrices(1, vec![b.clone()], vec![-1.0]).is_err());
        assert!(BLDatum::from_matrices(1, vec![b.clone()], vec![1.0, 1.0]).is_err());
        assert!(BLDatum::from_matrices(2, vec![b], vec![1.0]).is_err());
        assert!(BLDatum::from_matrices(1, vec![], vec![]).is_err());
    }

    #[test]
    fn identity_datum_objective_vanishes() {
        let d = BLDatum::identity(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = random::pd_matrix(4, &mut rng);
            assert!(objective(&d, &a).unwrap().abs() < 1e-12);
            assert!(stationarity_residual(&d, &a).unwrap() < 1e-10);
        }
    }

    #[test]
    fn objective_is_scale_invariant_under_scaling_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = [
            BLDatum::position_momentum(2).unwrap(),
            BLDatum::two_sum(2, [0.5, 0.6, 0.9]).unwrap(),
        ];
        for d in &data {
            for _ in 0..20 {
                let a = random::pd_matrix(d.dim(), &mut rng);
                let f = objective(d, &a).unwrap();
                for &l in &[0.5, 2.0, 10.0, 1e-3, 1e3] {
                    assert!((objective(d, &a.scale(l)).unwrap() - f).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn two_sum_extremizer_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (p1, p2): (f64, f64) = (rng.random(), rng.random());
            let p3 = 2.0 - p1 - p2;
            if !(p3 > 0.0 && p3 < 1.0) {
                continue;
            }
            let p = [p1, p2, p3];
            let d = BLDatum::two_sum(1, p).unwrap();
            let a = b0_alpha(p);
            assert!(stationarity_residual(&d, &a).unwrap() < 1e-10 * (1.0 + a.norm().recip()));
            assert!((objective(&d, &a).unwrap() - b0_closed_form(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn position_momentum_identity_is_stationary() {
        for m in 1..4 {
            let d = BLDatum::position_momentum(m).unwrap();
            let id = CovMatrix::identity(2 * m);
            assert!(stationarity_residual(&d, &id).unwrap() < 1e-14);
            assert!(objective(&d, &id).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn zero_residual_means_stationary_objective() {
        let p = [0.4, 0.7, 0.9];
        let d = BLDatum::two_sum(1, p).unwrap();
        let a = b0_alpha(p);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let dir = random::symmetric_matrix(2, 1.0, &mut rng);
            let h = 1e-5;
            let plus = CovMatrix::new(a.matrix() + &dir * h).unwrap();
            let minus = CovMatrix::new(a.matrix() - &dir * h).unwrap();
            let deriv = (objective(&d, &plus).unwrap() - objective(&d, &minus).unwrap()) / (2.0 * h);
            assert!(deriv.abs() < 1e-6, "directional derivative {deriv}");
        }
    }

    #[test]
    fn degenerate_pushforward_reported() {
        let d = BLDatum::identity(1).unwrap();
        let singular = CovMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(objective(&d, &singular).is_err());
    }

    #[test]
    fn probe_identity_and_auxiliary_data_clean() {
        let d = BLDatum::identity(2).unwrap();
        assert!(!subcriticality_probe(&d, 100, 0).is_violated());
        let aux = regularize(&BLDatum::identity(2).unwrap(), 1.0).unwrap();
        assert!(!subcriticality_probe(&aux, 300, 1).is_violated());
    }

    #[test]
    fn probe_finds_two_sum_violations() {
        // enumerate the structured subspaces by hand: ker B1 = {(0, y)} has
        // dim 1 and images of dim (0, 1, 1); Σ p_i dim = p2 + p3 = 2 − p1.
        for p in [[2.0, 0.0, 0.0], [1.5, 0.5, 0.0], [0.2, 0.2, 1.6]] {
            let d = BLDatum::two_sum(1, p).unwrap();
            assert!(scaling_condition(&d, 1e-12));
            match subcriticality_probe(&d, 50, 0) {
                ProbeVerdict::Violated { dim, weighted_image_dim, .. } => {
                    assert_eq!(dim, 1);
                    assert!(weighted_image_dim < 1.0);
                }
                v => panic!("expected a violation for {p:?}, got {v:?}"),
            }
        }
        for p in [[1.0, 1.0, 0.0], [2.0 / 3.0; 3], [0.5, 0.5, 1.0]] {
            let d = BLDatum::two_sum(1, p).unwrap();
            assert!(!subcriticality_probe(&d, 200, 0).is_violated());
        }
    }

    #[test]
    fn regularize_shapes_and_scaling() {
        let d = BLDatum::position_momentum(1).unwrap();
        let r = regularize(&d, 1.0).unwrap();
        assert_eq!(r.len(), 2 + 3);
        assert_eq!(&r.weights()[..2], &[0.0, 0.0]);
        let aux: f64 = r.weights()[2..].iter().sum();
        assert!((aux - 2.0).abs() < 1e-15);
        for &eps in &[0.5, 0.1, 1e-4] {
            assert!(scaling_condition(&regularize(&d, eps).unwrap(), 1e-12));
        }
        let bad = BLDatum::two_sum(1, [1.0, 1.0, 1.0]).unwrap();
        assert!(!scaling_condition(&regularize(&bad, 0.3).unwrap(), 1e-12));
        assert!(regularize(&d, 0.0).is_err());
        assert!(regularize(&d, 1.5).is_err());
    }
}
