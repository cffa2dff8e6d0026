//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// SVD of `a` padded with zero rows so that `V` is always square.
fn full_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let rows = m.max(n).max(1);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("requested V^T");
    (svd.singular_values.iter().copied().collect(), vt.transpose())
}

/// Orthonormal basis (as columns) of `{ξ : a ξ = 0}`.
///
/// A singular value counts as zero when it is at most `tol` times the largest one.
pub fn nullspace(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    let (sv, v) = full_svd(a);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<usize> = (0..n).filter(|&i| smax == 0.0 || sv[i] <= tol * smax).collect();
    let mut z = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        z.set_column(k, &v.column(i));
    }
    z
}

/// Whether the columns of `a` are linearly independent.
pub fn full_column_rank(a: &DMatrix<f64>, tol: f64) -> bool {
    let (n, k) = a.shape();
    if k == 0 {
        return true;
    }
    if k > n {
        return false;
    }
    let sv = SVD::new(a.clone(), false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    smax > 0.0 && smin > tol * smax
}

/// Minimum-norm least-squares solution of `a y = b` and its residual `‖a y - b‖∞`.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> (DVector<f64>, f64) {
    let k = a.ncols();
    if k == 0 {
        return (DVector::zeros(0), b.amax());
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut y = DVector::zeros(k);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax && s > 0.0 {
            let coef = u.column(i).dot(b) / s;
            y += vt.row(i).transpose() * coef;
        }
    }
    let r = (a * &y - b).amax();
    (y, r)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(h: &DMatrix<f64>) -> Vec<f64> {
    if h.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Matrix whose columns are the given vectors (`n` rows).
pub fn columns(n: usize, vs: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, vs.len());
    for (k, v) in vs.iter().enumerate() {
        m.set_column(k, v);
    }
    m
}
