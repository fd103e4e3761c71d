//! Symmetric matrix vectorization.
//!
//! `svec` stacks the lower triangle of a symmetric `d × d` matrix column by
//! column, diagonal entry first in each column, with off-diagonal entries
//! scaled by `√2` so that `svec(X)ᵀ svec(Y) = tr(XY)`. The selection matrix
//! `Q_d` satisfies `svec(X) = Q_d vec(X)` with `vec` the column-major
//! vectorization, and the symmetrized Kronecker product
//! `V ⊛ U = ½ Q_m (U ⊗ V + V ⊗ U) Q_nᵀ` satisfies
//! `svec(Z X Zᵀ) = (Z ⊛ Z) svec(X)`.

use std::f64::consts::SQRT_2;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative asymmetry accepted by [`SymMat::new`].
pub const SYM_TOL: f64 = 1e-9;

/// Number of free entries of a symmetric `d × d` matrix, `d(d+1)/2`.
pub fn sd(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Inverse of [`sd`]: the `d` with `d(d+1)/2 == len`, if any.
pub fn sd_inverse(len: usize) -> Option<usize> {
    let d = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (sd(d) == len).then_some(d)
}

/// Position of entry `(i, j)` inside `svec` of a `d × d` matrix.
pub fn svec_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // column j starts after sum_{k<j} (d - k) entries
    j * d - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Symmetric real matrix, exactly symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    m: DMatrix<f64>,
}

impl SymMat {
    /// Builds a symmetric matrix from `x`, symmetrizing as `(x + xᵀ)/2`.
    ///
    /// Fails with [`Error::Asymmetric`] when the relative asymmetry
    /// `max|x - xᵀ| / max|x|` exceeds [`SYM_TOL`].
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(x, SYM_TOL)
    }

    /// As [`SymMat::new`] with an explicit relative asymmetry tolerance.
    pub fn with_tolerance(x: DMatrix<f64>, tol: f64) -> Result<Self> {
        if !x.is_square() || x.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "symmetric matrix must be square and nonempty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        let scale = x.amax();
        let asym = (&x - x.transpose()).amax();
        let rel = if scale > 0.0 { asym / scale } else { 0.0 };
        if rel > tol {
            return Err(Error::Asymmetric { asymmetry: rel, tol });
        }
        Ok(Self::symmetrize(x))
    }

    /// Symmetrizes `x` without any tolerance check.
    pub fn symmetrize(x: DMatrix<f64>) -> Self {
        assert!(x.is_square(), "symmetrize needs a square matrix");
        let m = (&x + x.transpose()) * 0.5;
        SymMat { m }
    }

    /// Builds from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    /// Identity of size `d`.
    pub fn identity(d: usize) -> Self {
        SymMat { m: DMatrix::identity(d, d) }
    }

    /// Zero matrix of size `d`.
    pub fn zeros(d: usize) -> Self {
        SymMat { m: DMatrix::zeros(d, d) }
    }

    /// Diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMat { m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &DVector<f64>) -> Self {
        SymMat::symmetrize(v * v.transpose())
    }

    /// Matrix dimension `d`.
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Borrow the dense matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Consume into the dense matrix.
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Entry `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// Eigenvalues in nondecreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.m)
    }

    /// Smallest eigenvalue.
    pub fn eigmin(&self) -> f64 {
        linalg::sym_eig_extremes(&self.m).0
    }

    /// Largest eigenvalue.
    pub fn eigmax(&self) -> f64 {
        linalg::sym_eig_extremes(&self.m).1
    }

    /// PSD test `eigmin ≥ -tol · max(1, eigmax)`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let (lo, hi) = linalg::sym_eig_extremes(&self.m);
        lo >= -tol * hi.max(1.0)
    }

    /// Checks PSD with the crate tolerance, naming the matrix in the error.
    pub fn require_psd(&self, what: &str) -> Result<()> {
        let (lo, hi) = linalg::sym_eig_extremes(&self.m);
        if lo >= -linalg::PSD_TOL * hi.max(1.0) {
            Ok(())
        } else {
            Err(Error::NotPsd { what: what.to_string(), eigmin: lo })
        }
    }

    /// Checks strict positive definiteness.
    pub fn require_pd(&self, what: &str) -> Result<()> {
        let lo = self.eigmin();
        if lo > 0.0 {
            Ok(())
        } else {
            Err(Error::NotPd { what: what.to_string(), eigmin: lo })
        }
    }

    /// Projection onto the PSD cone by clipping negative eigenvalues.
    pub fn clip_psd(&self) -> SymMat {
        let eig = self.m.clone().symmetric_eigen();
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        SymMat::symmetrize(v * DMatrix::from_diagonal(&clipped) * v.transpose())
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.m.norm()
    }

    /// Spectral norm.
    pub fn norm2(&self) -> f64 {
        let (lo, hi) = linalg::sym_eig_extremes(&self.m);
        lo.abs().max(hi.abs())
    }

    /// `tr(self · other)`.
    pub fn inner(&self, other: &SymMat) -> f64 {
        self.m.component_mul(&other.m).sum()
    }

    /// Congruence `Z self Zᵀ`.
    pub fn congruence(&self, z: &DMatrix<f64>) -> SymMat {
        SymMat::symmetrize(z * &self.m * z.transpose())
    }

    /// Scale by a real number.
    pub fn scale(&self, a: f64) -> SymMat {
        SymMat { m: &self.m * a }
    }

    /// Row-major nested vectors, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.m)
    }
}

impl Add for &SymMat {
    type Output = SymMat;
    fn add(self, rhs: &SymMat) -> SymMat {
        SymMat { m: &self.m + &rhs.m }
    }
}

impl Sub for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        SymMat { m: &self.m - &rhs.m }
    }
}

impl Mul<f64> for &SymMat {
    type Output = SymMat;
    fn mul(self, rhs: f64) -> SymMat {
        self.scale(rhs)
    }
}

impl Serialize for SymMat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMat::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Coordinates of a symmetric matrix in the `svec` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SvecVector {
    dim: usize,
    data: DVector<f64>,
}

impl SvecVector {
    /// Wraps `data`, inferring the matrix dimension from its length.
    pub fn new(data: DVector<f64>) -> Result<Self> {
        let dim = sd_inverse(data.len()).ok_or(Error::LengthNotTriangular(data.len()))?;
        Ok(SvecVector { dim, data })
    }

    /// Underlying matrix dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates, of length `sd(d)`.
    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    /// Consume into the coordinate vector.
    pub fn into_data(self) -> DVector<f64> {
        self.data
    }
}

/// `svec(X)`: lower triangle column by column, off-diagonals scaled by `√2`.
pub fn svec(x: &SymMat) -> SvecVector {
    let d = x.dim();
    SvecVector { dim: d, data: svec_matrix(x.as_matrix()) }
}

/// `svec` of a square matrix assumed symmetric; only the lower triangle is read.
pub fn svec_matrix(x: &DMatrix<f64>) -> DVector<f64> {
    let d = x.nrows();
    let mut out = DVector::zeros(sd(d));
    let mut k = 0;
    for j in 0..d {
        out[k] = x[(j, j)];
        k += 1;
        for i in (j + 1)..d {
            out[k] = SQRT_2 * x[(i, j)];
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn unsvec(v: &DVector<f64>) -> Result<SymMat> {
    let d = sd_inverse(v.len()).ok_or(Error::LengthNotTriangular(v.len()))?;
    Ok(SymMat { m: unsvec_dim(v, d) })
}

/// Inverse of [`svec`] for a vector already known to have length `sd(d)`.
pub(crate) fn unsvec_dim(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), sd(d));
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        m[(j, j)] = v[k];
        k += 1;
        for i in (j + 1)..d {
            let val = v[k] / SQRT_2;
            m[(i, j)] = val;
            m[(j, i)] = val;
            k += 1;
        }
    }
    m
}

/// The selection matrix `Q_d` of shape `sd(d) × d²` with `svec(X) = Q_d vec(X)`.
pub fn qd_matrix(d: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(sd(d), d * d);
    let mut k = 0;
    for j in 0..d {
        q[(k, j + j * d)] = 1.0;
        k += 1;
        for i in (j + 1)..d {
            q[(k, i + j * d)] = 1.0 / SQRT_2;
            q[(k, j + i * d)] = 1.0 / SQRT_2;
            k += 1;
        }
    }
    q
}

/// Symmetrized Kronecker product `V ⊛ U` of two `m × n` matrices.
///
/// Column `k` is `svec(½(V E_k Uᵀ + U E_k Vᵀ))` where `E_k = unsvec(e_k)`,
/// which equals `½ Q_m (U ⊗ V + V ⊗ U) Q_nᵀ` without forming the Kronecker
/// products.
pub fn skron(v: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.shape() != u.shape() {
        return Err(Error::ShapeMismatch(format!(
            "skron operands {}x{} and {}x{}",
            v.nrows(),
            v.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(skron_unchecked(v, u))
}

pub(crate) fn skron_unchecked(v: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = v.shape();
    let mut out = DMatrix::zeros(sd(m), sd(n));
    let mut col = 0;
    for l in 0..n {
        for k in l..n {
            // E = e_k e_lᵀ + e_l e_kᵀ scaled so that svec(E) is a unit vector.
            // V E Uᵀ = s (v_k u_lᵀ + v_l u_kᵀ), with s = 1/√2 off the diagonal
            // and s = 1/2 on it (E = e_k e_kᵀ counted twice).
            let s = if k == l { 0.5 } else { 1.0 / SQRT_2 };
            let vk = v.column(k);
            let vl = v.column(l);
            let uk = u.column(k);
            let ul = u.column(l);
            let mut row = 0;
            for j in 0..m {
                for i in j..m {
                    // entry (i, j) of ½(V E Uᵀ + U E Vᵀ)
                    let a = vk[i] * ul[j] + vl[i] * uk[j] + uk[i] * vl[j] + ul[i] * vk[j];
                    let val = 0.5 * s * a;
                    out[(row, col)] = if i == j { val } else { SQRT_2 * val };
                    row += 1;
                }
            }
            col += 1;
        }
    }
    out
}

/// `z ⊛ z` for a vector, which equals `svec(z zᵀ)`.
pub fn skron_vec(z: &DVector<f64>) -> DVector<f64> {
    let d = z.len();
    let mut out = DVector::zeros(sd(d));
    let mut k = 0;
    for j in 0..d {
        out[k] = z[j] * z[j];
        k += 1;
        for i in (j + 1)..d {
            out[k] = SQRT_2 * z[i] * z[j];
            k += 1;
        }
    }
    out
}

/// Dense matrix from row-major nested vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::ShapeMismatch("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Row-major nested vectors of a dense matrix.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}
