//! Dense linear algebra helpers built on `nalgebra`.
//!
//! Every rank decision and pseudo-inverse in the crate goes through the
//! relative cutoff [`SVD_TOL`], so that model checks, moment translation and
//! least squares agree on which directions are considered zero.

use nalgebra::{DMatrix, DVector};

/// Relative singular value cutoff used for numerical rank and pseudo-inverses.
pub const SVD_TOL: f64 = 1e-10;

/// Relative tolerance used to accept a matrix as positive semidefinite.
pub const PSD_TOL: f64 = 1e-9;

/// Singular values of `m`, in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Spectral norm (largest singular value); zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Numerical rank: number of singular values above `tau * sigma_max`.
pub fn rank(m: &DMatrix<f64>, tau: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > tau * smax).count(),
        _ => 0,
    }
}

/// Moore-Penrose pseudo-inverse with relative cutoff `tau`.
pub fn pinv(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut out = DMatrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tau * smax {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix via its eigendecomposition.
///
/// Eigenvalues at or below `tau * lambda_max` are treated as zero.
pub fn pinv_psd(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let mut out = DMatrix::zeros(n, n);
    if lmax == 0.0 {
        return out;
    }
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tau * lmax {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix, in nondecreasing order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    e
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let e = sym_eigenvalues(m);
    (e.first().copied().unwrap_or(0.0), e.last().copied().unwrap_or(0.0))
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Trace of the product `a b` without forming it.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}
