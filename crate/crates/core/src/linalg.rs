//! Small dense linear algebra on row-major square matrices, backed by nalgebra.

use nalgebra::DMatrix;

fn to_dmatrix(k: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(k, k, entries)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse by LU with partial pivoting; `None` when singular.
pub fn invert(k: usize, entries: &[f64]) -> Option<Vec<f64>> {
    let lu = to_dmatrix(k, entries).lu();
    let inv = lu.try_inverse()?;
    inv.iter().all(|v| v.is_finite()).then(|| to_rows(&inv))
}

/// Maximum absolute row sum.
pub fn inf_norm(k: usize, entries: &[f64]) -> f64 {
    entries.chunks(k).map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// 2-norm condition number from singular values; infinite when singular.
pub fn condition_number(k: usize, entries: &[f64]) -> f64 {
    let sv = to_dmatrix(k, entries).singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with relative tolerance on singular values.
pub fn rank(k: usize, entries: &[f64]) -> usize {
    to_dmatrix(k, entries).rank(1e-12 * k as f64)
}

/// Largest eigenvalue of `A·Aᵀ`.
pub fn lambda_max_aat(k: usize, entries: &[f64]) -> f64 {
    let a = to_dmatrix(k, entries);
    let sym = &a * a.transpose();
    sym.symmetric_eigen().eigenvalues.max()
}

/// Solves the square system `A x = b`; `None` when singular.
pub fn solve(n: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let lu = to_dmatrix(n, a).lu();
    let x = lu.solve(&nalgebra::DVector::from_column_slice(b))?;
    x.iter().all(|v| v.is_finite()).then(|| x.iter().copied().collect())
}
