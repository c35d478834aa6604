//! Dense matrix primitives shared by every stage of the pipeline.
//!
//! Matrices are `ndarray` arrays in row-major order. Sample matrices are
//! stored with one sample per column (`D x N`). The SVD is delegated to
//! `faer`, the symmetric eigensolver to `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{invalid, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Default relative cutoff for singular values in [`pseudoinverse`].
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Largest tolerated `|a_ij - a_ji|`, relative to `max(1, max |a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Logistic sigmoid, evaluated without overflow for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_matrix(z: &Matrix) -> Matrix {
    z.mapv(sigmoid)
}

pub fn sigmoid_inplace(z: &mut Matrix) {
    z.mapv_inplace(sigmoid);
}

/// Elementwise `h * (1 - h)`: the sigmoid derivative expressed through its output.
pub fn sigmoid_derivative_factor(h: &Matrix) -> Matrix {
    h.mapv(|v| v * (1.0 - v))
}

/// Thin SVD `a = u diag(s) v^T`, singular values in nonincreasing order.
pub(crate) struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub(crate) fn thin_svd(a: &Matrix) -> ThinSvd {
    let (rows, cols) = a.dim();
    let m = faer::Mat::<f64>::from_fn(rows, cols, |i, j| a[[i, j]]);
    let svd = m.thin_svd().expect("SVD of a finite matrix converges");
    let (u, v) = (svd.U(), svd.V());
    let r = rows.min(cols);
    ThinSvd {
        u: Array2::from_shape_fn((rows, r), |(i, j)| u[(i, j)]),
        s: svd.S().column_vector().iter().copied().collect(),
        v: Array2::from_shape_fn((cols, r), |(i, j)| v[(i, j)]),
    }
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values at or below `tol * sigma_max` are treated as zero, so the
/// zero matrix maps to the zero matrix of transposed shape.
pub fn pseudoinverse(a: &Matrix, tol: f64) -> Matrix {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return Matrix::zeros((cols, rows));
    }
    let svd = thin_svd(a);
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = tol * sigma_max;

    let mut out = Matrix::zeros((cols, rows));
    for (r, &s) in svd.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        // out += v_r * inv * u_r^T
        for i in 0..cols {
            let vi = svd.v[[i, r]] * inv;
            if vi == 0.0 {
                continue;
            }
            for j in 0..rows {
                out[[i, j]] += vi * svd.u[[j, r]];
            }
        }
    }
    out
}

/// `I_m - e e^T / m`, the projector that moves columns to their centroid.
pub fn centering_matrix(m: usize) -> Result<Matrix> {
    if m == 0 {
        return Err(invalid("centering matrix needs m >= 1"));
    }
    let off = 1.0 / m as f64;
    Ok(Matrix::from_shape_fn((m, m), |(i, j)| {
        if i == j {
            1.0 - off
        } else {
            -off
        }
    }))
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    /// One unit-norm eigenvector per column.
    pub eigenvectors: Matrix,
}

pub fn symmetry_residual(a: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// Returns the `d` eigenpairs with smallest eigenvalues after discarding the
/// `skip` smallest. Uses a dense symmetric decomposition.
pub fn smallest_eigenvectors(phi: &Matrix, d: usize, skip: usize) -> Result<SpectralResult> {
    let (n, m) = phi.dim();
    if n != m {
        return Err(invalid(format!("eigenproblem needs a square matrix, got {n}x{m}")));
    }
    if d + skip > n {
        return Err(invalid(format!(
            "requested {d} eigenvectors after skipping {skip}, but matrix order is {n}"
        )));
    }
    let scale = phi.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let asym = symmetry_residual(phi);
    if asym >= SYMMETRY_TOL * scale {
        return Err(invalid(format!("matrix is not symmetric (residual {asym:e})")));
    }
    if d == 0 {
        return Ok(SpectralResult { eigenvalues: vec![], eigenvectors: Matrix::zeros((n, 0)) });
    }

    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (phi[[i, j]] + phi[[j, i]]));
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let picked = &order[skip..skip + d];
    let eigenvalues = picked.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = Matrix::zeros((n, d));
    for (col, &k) in picked.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let norm = v.norm();
        for i in 0..n {
            eigenvectors[[i, col]] = v[i] / norm;
        }
    }
    Ok(SpectralResult { eigenvalues, eigenvectors })
}

/// Spectrum of a symmetric matrix, ascending, eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<SpectralResult> {
    smallest_eigenvectors(a, a.nrows(), 0)
}
