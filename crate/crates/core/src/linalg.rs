//! Dense linear-algebra helpers shared by the other modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Log-determinants of
//! positive-definite matrices are always accumulated from Cholesky pivots so
//! that large heat-flow times never overflow.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance used for structural checks (symmetry, symplecticity,
/// commutation) before scaling by the matrix norm.
pub const STRUCTURAL_TOL: f64 = 1e-9;

/// Frobenius norm.
pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

/// `STRUCTURAL_TOL` scaled by `max(1, scale)`.
pub fn scaled_tol(tol: f64, scale: f64) -> f64 {
    tol * scale.max(1.0)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `‖A − Aᵀ‖_F`; zero for non-square input is never returned (callers check shape).
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

/// `ln det A` for symmetric positive-definite `A`, `None` if the Cholesky
/// factorization fails.
pub fn ln_det_pd(a: &DMatrix<f64>) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn inv_pd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(a.clone());
    }
    let chol = a.clone().cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// `ln |det A|` for a general square matrix via LU; `None` when singular.
pub fn ln_abs_det(a: &DMatrix<f64>) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Numerical rank with threshold `max(rows, cols) · σ_max · rel`.
pub fn numerical_rank(a: &DMatrix<f64>, rel: f64) -> usize {
    let sv = singular_values(a);
    let Some(&smax) = sv.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    let thresh = a.nrows().max(a.ncols()) as f64 * smax * rel;
    sv.iter().filter(|&&s| s > thresh).count()
}

/// Orthonormal basis (as columns) of the null space of `a`.
///
/// The matrix is zero-padded to square so that the SVD returns the full right
/// singular basis.
pub fn null_space(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let c = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let r = a.nrows().max(c);
    let mut padded = DMatrix::zeros(r, c);
    padded.view_mut((0, 0), (a.nrows(), c)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let thresh = r as f64 * smax.max(f64::MIN_POSITIVE) * rel;
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thresh || smax == 0.0)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormalize the columns of `a` (thin QR), dropping dependent columns.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..a.ncols() {
        let mut v = a.column(j).into_owned();
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let n = v.norm();
        if n > 1e-10 * a.column(j).norm().max(1e-300) {
            basis.push(v / n);
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(a.nrows(), 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Block-diagonal direct sum `a ⊕ b`.
pub fn direct_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Copy of the sub-block starting at `(r0, c0)` with shape `(nr, nc)`.
pub fn block(a: &DMatrix<f64>, r0: usize, c0: usize, nr: usize, nc: usize) -> DMatrix<f64> {
    a.view((r0, c0), (nr, nc)).into_owned()
}

/// Stack matrices with equal column counts vertically.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(p);
        r += p.nrows();
    }
    out
}

/// Stack matrices with equal row counts horizontally.
pub fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), (rows, p.ncols())).copy_from(p);
        c += p.ncols();
    }
    out
}

/// Build a matrix from row-major nested vectors. Returns `None` when ragged.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return None;
    }
    Some(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Row-major nested vectors.
pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}
