//! Completely positive operators on symmetric matrices.
//!
//! An operator `S : 𝕊ⁿ → 𝕊ᵐ` is stored through its matrix `𝑺` in `svec`
//! coordinates, `svec(S(X)) = 𝑺 svec(X)`. Operators built from modes
//! (`S(X) = Σ Aᵢ X Aᵢᵀ`) or from a mode tensor with a PSD parameter are
//! completely positive and carry a flag that unlocks the exact norm
//! `‖S‖₂ = ‖S(I)‖₂`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symm::{sd, skron_unchecked, svec, svec_matrix, unsvec_dim, SymMat};
use crate::tensor::{matricize, Tensor3};

/// Default margin used by [`is_mss`] and [`lyapunov_solve`].
pub const STAB_TOL: f64 = 1e-9;

/// Linear map between spaces of symmetric matrices, in `svec` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CpOperator {
    in_dim: usize,
    out_dim: usize,
    op_matrix: DMatrix<f64>,
    cp: bool,
}

impl CpOperator {
    /// Wraps a raw `sd(m) × sd(n)` matrix. The result is not flagged as CP.
    pub fn from_matrix(in_dim: usize, out_dim: usize, op_matrix: DMatrix<f64>) -> Result<Self> {
        if op_matrix.shape() != (sd(out_dim), sd(in_dim)) {
            return Err(Error::ShapeMismatch(format!(
                "operator matrix {}x{} does not map {in_dim} to {out_dim}",
                op_matrix.nrows(),
                op_matrix.ncols()
            )));
        }
        Ok(CpOperator { in_dim, out_dim, op_matrix, cp: false })
    }

    pub(crate) fn from_parts(in_dim: usize, out_dim: usize, op_matrix: DMatrix<f64>, cp: bool) -> Self {
        debug_assert_eq!(op_matrix.shape(), (sd(out_dim), sd(in_dim)));
        CpOperator { in_dim, out_dim, op_matrix, cp }
    }

    /// Identity operator on `𝕊ⁿ`.
    pub fn identity(n: usize) -> Self {
        CpOperator { in_dim: n, out_dim: n, op_matrix: DMatrix::identity(sd(n), sd(n)), cp: true }
    }

    /// Zero operator from `𝕊ⁿ` to `𝕊ᵐ`.
    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        CpOperator { in_dim, out_dim, op_matrix: DMatrix::zeros(sd(out_dim), sd(in_dim)), cp: true }
    }

    /// Input dimension `n`.
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Output dimension `m`.
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Matrix representation `𝑺` of shape `sd(m) × sd(n)`.
    pub fn op_matrix(&self) -> &DMatrix<f64> {
        &self.op_matrix
    }

    /// True if the operator was built from modes or a PSD-parameterized tensor.
    pub fn is_cp(&self) -> bool {
        self.cp
    }

    /// `S(X) = unsvec(𝑺 svec(X))`.
    pub fn apply(&self, x: &SymMat) -> Result<SymMat> {
        if x.dim() != self.in_dim {
            return Err(Error::ShapeMismatch(format!("operator input is {}, got {}", self.in_dim, x.dim())));
        }
        let y = &self.op_matrix * svec(x).data();
        Ok(SymMat::symmetrize(unsvec_dim(&y, self.out_dim)))
    }

    /// Adjoint `S*(P) = unsvec(𝑺ᵀ svec(P))`, so that `tr[S(X) P] = tr[X S*(P)]`.
    pub fn adjoint_apply(&self, p: &SymMat) -> Result<SymMat> {
        if p.dim() != self.out_dim {
            return Err(Error::ShapeMismatch(format!("adjoint input is {}, got {}", self.out_dim, p.dim())));
        }
        let y = self.op_matrix.transpose() * svec(p).data();
        Ok(SymMat::symmetrize(unsvec_dim(&y, self.in_dim)))
    }

    /// The adjoint as an operator.
    pub fn adjoint(&self) -> CpOperator {
        CpOperator {
            in_dim: self.out_dim,
            out_dim: self.in_dim,
            op_matrix: self.op_matrix.transpose(),
            cp: self.cp,
        }
    }

    /// Composition `self ∘ inner`.
    pub fn compose(&self, inner: &CpOperator) -> Result<CpOperator> {
        if inner.out_dim != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "cannot compose: inner maps to {}, outer expects {}",
                inner.out_dim, self.in_dim
            )));
        }
        Ok(CpOperator {
            in_dim: inner.in_dim,
            out_dim: self.out_dim,
            op_matrix: &self.op_matrix * &inner.op_matrix,
            cp: self.cp && inner.cp,
        })
    }

    /// Exact induced 2-norm `‖S(I)‖₂`, valid for CP operators only.
    pub fn op_norm(&self) -> Result<f64> {
        if !self.cp {
            return Err(Error::NotCpConstructed);
        }
        Ok(self.apply(&SymMat::identity(self.in_dim))?.norm2())
    }

    /// Generic bound `√m · ‖𝑺‖₂` on the induced 2-norm.
    pub fn op_norm_bound(&self) -> f64 {
        (self.out_dim as f64).sqrt() * linalg::spectral_norm(&self.op_matrix)
    }

    /// Spectral radius of `𝑺`.
    pub fn spectral_radius(&self) -> Result<f64> {
        self.require_square()?;
        Ok(linalg::spectral_radius(&self.op_matrix))
    }

    fn require_square(&self) -> Result<()> {
        if self.in_dim != self.out_dim {
            return Err(Error::NotSquare { in_dim: self.in_dim, out_dim: self.out_dim });
        }
        Ok(())
    }
}

/// `S(X) = Σᵢ Aᵢ X Aᵢᵀ` with matrix `Σᵢ Aᵢ ⊛ Aᵢ`.
pub fn cp_from_modes(modes: &[DMatrix<f64>]) -> Result<CpOperator> {
    let first = modes.first().ok_or(Error::EmptyModeList)?;
    let (m, n) = first.shape();
    if modes.iter().any(|a| a.shape() != (m, n)) {
        return Err(Error::ShapeMismatch("modes differ in shape".into()));
    }
    let mut op = DMatrix::zeros(sd(m), sd(n));
    for a in modes {
        op += skron_unchecked(a, a);
    }
    Ok(CpOperator { in_dim: n, out_dim: m, op_matrix: op, cp: true })
}

/// Matrix of the operator `X ↦ A_(1)(W ⊗ X)A_(1)ᵀ` for a tensor `A` of shape `m × n × r`.
///
/// Equals `(A ⊛ A) ×̄₃ svec(W) = Σ_{c,d} W_cd (A_c ⊛ A_d)`, assembled from
/// the frontal slices without forming the symmetrized tensor.
pub(crate) fn tensor_op_matrix(a: &Tensor3, w: &DMatrix<f64>) -> DMatrix<f64> {
    let [m, n, r] = a.dims();
    let slices = a.frontal_slices();
    let mut op = DMatrix::zeros(sd(m), sd(n));
    for c in 0..r {
        if w[(c, c)] != 0.0 {
            op += skron_unchecked(&slices[c], &slices[c]) * w[(c, c)];
        }
        for d in 0..c {
            let wcd = 0.5 * (w[(c, d)] + w[(d, c)]);
            if wcd != 0.0 {
                op += skron_unchecked(&slices[c], &slices[d]) * (2.0 * wcd);
            }
        }
    }
    op
}

/// CP operator `S(W; X) = A_(1)(W ⊗ X)A_(1)ᵀ` defined by a mode tensor and a PSD parameter.
pub fn cp_from_tensor(a: &Tensor3, w: &SymMat) -> Result<CpOperator> {
    let [m, n, r] = a.dims();
    if w.dim() != r {
        return Err(Error::ShapeMismatch(format!("parameter is {}x{}, tensor has {r} slices", w.dim(), w.dim())));
    }
    w.require_psd("W")?;
    Ok(CpOperator { in_dim: n, out_dim: m, op_matrix: tensor_op_matrix(a, w.as_matrix()), cp: true })
}

/// Direct evaluation `A_(1)(W ⊗ X)A_(1)ᵀ`; used as an independent path in checks.
pub fn tensor_apply_direct(a: &Tensor3, w: &SymMat, x: &SymMat) -> Result<SymMat> {
    let a1 = matricize(a, 1)?;
    Ok(SymMat::symmetrize(&a1 * linalg::kron(w.as_matrix(), x.as_matrix()) * a1.transpose()))
}

/// Direct evaluation of the adjoint `A_(2)(W ⊗ P)A_(2)ᵀ`.
pub fn tensor_adjoint_direct(a: &Tensor3, w: &SymMat, p: &SymMat) -> Result<SymMat> {
    let a2 = matricize(a, 2)?;
    Ok(SymMat::symmetrize(&a2 * linalg::kron(w.as_matrix(), p.as_matrix()) * a2.transpose()))
}

/// Outer spectral radius `√ρ(Σᵢ Aᵢ ⊗ Aᵢ)` of square modes.
pub fn outer_spectral_radius(modes: &[DMatrix<f64>]) -> Result<f64> {
    let first = modes.first().ok_or(Error::EmptyModeList)?;
    let n = first.nrows();
    if modes.iter().any(|a| a.shape() != (n, n)) {
        return Err(Error::ShapeMismatch("modes must be square and equally sized".into()));
    }
    let mut s = DMatrix::zeros(n * n, n * n);
    for a in modes {
        s += linalg::kron(a, a);
    }
    Ok(linalg::spectral_radius(&s).sqrt())
}

/// Mean-square stability test `ρ(S) < 1 - tol`.
pub fn is_mss(op: &CpOperator, tol: f64) -> Result<bool> {
    Ok(op.spectral_radius()? < 1.0 - tol)
}

/// Solves `P - S*(P) = H` for a mean-square stable `S` and `H ≻ 0`.
///
/// The solve is a single dense LU factorization of `I - 𝑺ᵀ` in `svec`
/// coordinates. The solution satisfies `tr[P X] = tr[H Σₜ Sᵗ(X)]`.
pub fn lyapunov_solve(op: &CpOperator, h: &SymMat) -> Result<SymMat> {
    let rho = op.spectral_radius()?;
    if rho >= 1.0 - STAB_TOL {
        return Err(Error::Unstable(rho));
    }
    h.require_pd("H")?;
    lyapunov_solve_unchecked(op, h)
}

/// As [`lyapunov_solve`] with only the stability precondition; `H` may be PSD.
pub(crate) fn lyapunov_solve_unchecked(op: &CpOperator, h: &SymMat) -> Result<SymMat> {
    if h.dim() != op.in_dim {
        return Err(Error::ShapeMismatch(format!("H is {}, operator acts on {}", h.dim(), op.in_dim)));
    }
    let k = sd(op.in_dim);
    let lhs = DMatrix::identity(k, k) - op.op_matrix.transpose();
    let rhs: DVector<f64> = svec_matrix(h.as_matrix());
    let sol = lhs.lu().solve(&rhs).ok_or(Error::Unstable(1.0))?;
    Ok(SymMat::symmetrize(unsvec_dim(&sol, op.in_dim)))
}
