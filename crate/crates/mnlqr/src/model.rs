//! Mode tensors and second-moment dynamics.
//!
//! A [`ModeTensor`] `𝓜 ∈ ℝ^{n_x × n_z × n_w}` collects the modes `[A_c, B_c]`
//! as frontal slices, so that with `z = (x, u)` the dynamics read
//! `x⁺ = ⟦𝓜; I, z, w⟧ = Σ_c w_c [A_c, B_c] z`. With `W = E[w wᵀ]` the
//! second moments evolve through the completely positive operator
//! `𝓔(W; Z) = 𝓜_(1)(W ⊗ Z)𝓜_(1)ᵀ`.
//!
//! A structured tensor keeps a known deterministic mode `[A₁, B₁]` in its
//! first slice and expects disturbances of the form `w = (1, w̃)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cpop::{tensor_op_matrix, CpOperator};
use crate::error::{Error, Result};
use crate::linalg::{self, pinv, rank, SVD_TOL};
use crate::symm::{matrix_from_rows, matrix_to_rows, skron_unchecked, SymMat};
use crate::tensor::{fold, matricize, Tensor3};

/// Mode tensor of shape `n_x × (n_x + n_u) × n_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTensor {
    nx: usize,
    nu: usize,
    tensor: Tensor3,
    structured: bool,
}

impl ModeTensor {
    /// Wraps a tensor, checking that its shape is `n_x × (n_x + n_u) × n_w`.
    pub fn new(nx: usize, nu: usize, tensor: Tensor3, structured: bool) -> Result<Self> {
        let [q1, q2, q3] = tensor.dims();
        if nx == 0 || q1 != nx || q2 != nx + nu || q3 == 0 {
            return Err(Error::DimensionMismatch(format!(
                "tensor {q1}x{q2}x{q3} does not match nx={nx}, nu={nu}"
            )));
        }
        if structured && q3 < 2 {
            return Err(Error::DimensionMismatch("a structured model needs at least two slices".into()));
        }
        Ok(ModeTensor { nx, nu, tensor, structured })
    }

    /// Builds the tensor from mode pairs `(A_c, B_c)`.
    pub fn from_modes(a: &[DMatrix<f64>], b: &[DMatrix<f64>], structured: bool) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch("need as many B modes as A modes".into()));
        }
        let nx = a.first().ok_or(Error::EmptyModeList)?.nrows();
        let nu = b[0].ncols();
        let mut slices = Vec::with_capacity(a.len());
        for (ac, bc) in a.iter().zip(b) {
            if ac.shape() != (nx, nx) || bc.shape() != (nx, nu) {
                return Err(Error::DimensionMismatch("modes differ in shape".into()));
            }
            let mut s = DMatrix::zeros(nx, nx + nu);
            s.view_mut((0, 0), (nx, nx)).copy_from(ac);
            s.view_mut((0, nx), (nx, nu)).copy_from(bc);
            slices.push(s);
        }
        ModeTensor::new(nx, nu, Tensor3::from_frontal_slices(&slices)?, structured)
    }

    /// Builds the tensor from its 3-mode matricization (one row per mode, `vec([A_c, B_c])ᵀ`).
    pub fn from_mode3_matrix(nx: usize, nu: usize, m3: &DMatrix<f64>, structured: bool) -> Result<Self> {
        let nz = nx + nu;
        if m3.ncols() != nx * nz || m3.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "3-mode matricization must have {} columns, got {}",
                nx * nz,
                m3.ncols()
            )));
        }
        ModeTensor::new(nx, nu, fold(m3, 3, [nx, nz, m3.nrows()])?, structured)
    }

    /// State dimension.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Input dimension.
    pub fn nu(&self) -> usize {
        self.nu
    }

    /// `n_z = n_x + n_u`.
    pub fn nz(&self) -> usize {
        self.nx + self.nu
    }

    /// Number of modes `n_w`.
    pub fn nw(&self) -> usize {
        self.tensor.dims()[2]
    }

    /// Whether the first slice is a known deterministic mode.
    pub fn is_structured(&self) -> bool {
        self.structured
    }

    /// The underlying tensor.
    pub fn tensor(&self) -> &Tensor3 {
        &self.tensor
    }

    /// 1-mode matricization `[M_1 | … | M_{n_w}]`.
    pub fn mode1_matrix(&self) -> DMatrix<f64> {
        matricize(&self.tensor, 1).expect("valid mode")
    }

    /// 3-mode matricization, row `c` equal to `vec([A_c, B_c])ᵀ`.
    pub fn mode3_matrix(&self) -> DMatrix<f64> {
        matricize(&self.tensor, 3).expect("valid mode")
    }

    /// Mode pair `[A_c, B_c]` as an `n_x × n_z` matrix.
    pub fn slice(&self, c: usize) -> DMatrix<f64> {
        self.tensor.frontal_slice(c)
    }

    /// State part `𝓐 = 𝓜[:, 0..n_x, :]`.
    pub fn a_tensor(&self) -> Tensor3 {
        self.tensor.mode2_range(0..self.nx)
    }

    /// Input part `𝓑 = 𝓜[:, n_x.., :]`.
    pub fn b_tensor(&self) -> Tensor3 {
        self.tensor.mode2_range(self.nx..self.nz())
    }

    /// Deterministic mode `[A₁, B₁]` of a structured model.
    pub fn deterministic_mode(&self) -> Result<DMatrix<f64>> {
        if !self.structured {
            return Err(Error::NotStructured);
        }
        Ok(self.slice(0))
    }

    /// Stochastic part `𝓜̃` of a structured model (slices 2..n_w) as an unstructured model.
    pub fn truncated(&self) -> Result<ModeTensor> {
        if !self.structured {
            return Err(Error::NotStructured);
        }
        ModeTensor::new(self.nx, self.nu, self.tensor.mode3_range(1..self.nw()), false)
    }

    /// Same tensor with the structured flag changed.
    pub fn with_structured(&self, structured: bool) -> Result<ModeTensor> {
        ModeTensor::new(self.nx, self.nu, self.tensor.clone(), structured)
    }

    /// Mode matrices `𝓜 ×̄₂ z`, an `n_x × n_w` matrix with columns `[A_c, B_c] z`.
    pub fn contract_z(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        if z.len() != self.nz() {
            return Err(Error::DimensionMismatch(format!("z has length {}, expected {}", z.len(), self.nz())));
        }
        let mut out = DMatrix::zeros(self.nx, self.nw());
        for c in 0..self.nw() {
            out.set_column(c, &(self.slice(c) * z));
        }
        Ok(out)
    }
}

/// JSON form of a [`ModeTensor`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTensorJson {
    /// State dimension.
    pub nx: usize,
    /// Input dimension.
    pub nu: usize,
    /// Number of modes.
    pub nw: usize,
    /// Whether slice 1 is deterministic.
    #[serde(default)]
    pub structured: bool,
    /// Row-major 3-mode matricization, `n_w` rows of length `n_x n_z`.
    pub mode3_matrix: Vec<Vec<f64>>,
}

impl TryFrom<ModeTensorJson> for ModeTensor {
    type Error = Error;
    fn try_from(j: ModeTensorJson) -> Result<Self> {
        let m3 = matrix_from_rows(&j.mode3_matrix)?;
        if m3.nrows() != j.nw {
            return Err(Error::DimensionMismatch(format!(
                "nw = {} but mode3_matrix has {} rows",
                j.nw,
                m3.nrows()
            )));
        }
        ModeTensor::from_mode3_matrix(j.nx, j.nu, &m3, j.structured)
    }
}

impl From<&ModeTensor> for ModeTensorJson {
    fn from(m: &ModeTensor) -> Self {
        ModeTensorJson {
            nx: m.nx,
            nu: m.nu,
            nw: m.nw(),
            structured: m.structured,
            mode3_matrix: matrix_to_rows(&m.mode3_matrix()),
        }
    }
}

impl Serialize for ModeTensor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModeTensorJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModeTensor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ModeTensorJson::deserialize(d)?;
        ModeTensor::try_from(j).map_err(serde::de::Error::custom)
    }
}

/// True system: modes `𝓥`, disturbance second moment `V = E[v vᵀ]` and optional mean.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True mode tensor.
    pub v_tensor: ModeTensor,
    /// Second moment of the true disturbance.
    pub v_moment: SymMat,
    /// Mean of the true disturbance, when known.
    pub mean: Option<DVector<f64>>,
}

impl GroundTruth {
    /// Validates shapes and positive semidefiniteness.
    pub fn new(v_tensor: ModeTensor, v_moment: SymMat, mean: Option<DVector<f64>>) -> Result<Self> {
        if v_moment.dim() != v_tensor.nw() {
            return Err(Error::DimensionMismatch("moment size differs from the number of modes".into()));
        }
        if let Some(m) = &mean {
            if m.len() != v_tensor.nw() {
                return Err(Error::DimensionMismatch("mean length differs from the number of modes".into()));
            }
        }
        v_moment.require_psd("V")?;
        Ok(GroundTruth { v_tensor, v_moment, mean })
    }
}

/// Outcome of [`check_model_equivalence`].
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// True iff both rank conditions hold.
    pub equivalent: bool,
    /// Numerical rank of the model's 3-mode matricization.
    pub rank_model: usize,
    /// Numerical rank of the model and truth matricizations stacked.
    pub rank_stacked: usize,
    /// Required rank (the number of stochastic modes of the model).
    pub required: usize,
    /// For structured models: whether the deterministic slices agree.
    pub deterministic_match: bool,
}

/// Checks `rk(𝓜_(3)) = rk([𝓜_(3); 𝓥_(3)]) = n_w`.
///
/// For a structured model the condition is applied to the stochastic parts
/// and the deterministic slices must coincide.
pub fn check_model_equivalence(m: &ModeTensor, v: &ModeTensor) -> Result<EquivalenceReport> {
    if m.nx != v.nx || m.nu != v.nu {
        return Err(Error::DimensionMismatch(format!(
            "model has (nx, nu) = ({}, {}), truth has ({}, {})",
            m.nx, m.nu, v.nx, v.nu
        )));
    }
    let (mm, vv, det_ok) = if m.structured {
        if !v.structured {
            return Err(Error::DimensionMismatch("structured model needs a structured truth".into()));
        }
        let d = (m.slice(0) - v.slice(0)).amax();
        let scale = m.slice(0).amax().max(1.0);
        (m.truncated()?, v.truncated()?, d <= SVD_TOL * scale)
    } else {
        (m.clone(), v.clone(), true)
    };
    let m3 = mm.mode3_matrix();
    let v3 = vv.mode3_matrix();
    let mut stacked = DMatrix::zeros(m3.nrows() + v3.nrows(), m3.ncols());
    stacked.view_mut((0, 0), m3.shape()).copy_from(&m3);
    stacked.view_mut((m3.nrows(), 0), v3.shape()).copy_from(&v3);
    let rank_model = rank(&m3, SVD_TOL);
    let rank_stacked = rank(&stacked, SVD_TOL);
    let required = mm.nw();
    Ok(EquivalenceReport {
        equivalent: det_ok && rank_model == required && rank_stacked == required,
        rank_model,
        rank_stacked,
        required,
        deterministic_match: det_ok,
    })
}

fn require_equivalent(m: &ModeTensor, v: &ModeTensor) -> Result<()> {
    let r = check_model_equivalence(m, v)?;
    if r.equivalent {
        Ok(())
    } else {
        Err(Error::ModelNotEquivalent(format!(
            "rank of model {} and of stacked {} must both equal {}{}",
            r.rank_model,
            r.rank_stacked,
            r.required,
            if r.deterministic_match { "" } else { "; deterministic modes differ" }
        )))
    }
}

/// Linear map `T` with `w = T v`, i.e. `T = pinv(𝓜_(3)ᵀ) 𝓥_(3)ᵀ`.
///
/// Structured models map `(1, ṽ)` to `(1, T̃ ṽ)` using the stochastic parts.
pub fn translation_matrix(m: &ModeTensor, v: &ModeTensor) -> Result<DMatrix<f64>> {
    require_equivalent(m, v)?;
    if m.structured {
        let t = translation_plain(&m.truncated()?, &v.truncated()?);
        let mut out = DMatrix::zeros(m.nw(), v.nw());
        out[(0, 0)] = 1.0;
        out.view_mut((1, 1), t.shape()).copy_from(&t);
        Ok(out)
    } else {
        Ok(translation_plain(m, v))
    }
}

fn translation_plain(m: &ModeTensor, v: &ModeTensor) -> DMatrix<f64> {
    pinv(&m.mode3_matrix().transpose(), SVD_TOL) * v.mode3_matrix().transpose()
}

/// Disturbance `w` in the model basis that reproduces the true disturbance `v`.
pub fn translate_disturbance(m: &ModeTensor, v: &ModeTensor, vv: &DVector<f64>) -> Result<DVector<f64>> {
    if vv.len() != v.nw() {
        return Err(Error::DimensionMismatch(format!("v has length {}, expected {}", vv.len(), v.nw())));
    }
    Ok(translation_matrix(m, v)? * vv)
}

/// Second moment `W = T V Tᵀ` in the model basis.
pub fn translate_second_moment(m: &ModeTensor, v: &ModeTensor, vmat: &SymMat) -> Result<SymMat> {
    if vmat.dim() != v.nw() {
        return Err(Error::DimensionMismatch(format!("V is {}, expected {}", vmat.dim(), v.nw())));
    }
    vmat.require_psd("V")?;
    let t = translation_matrix(m, v)?;
    Ok(vmat.congruence(&t))
}

/// `𝓔(W; ·) : 𝕊^{n_z} → 𝕊^{n_x}`, `Z ↦ 𝓜_(1)(W ⊗ Z)𝓜_(1)ᵀ`.
///
/// `W` may be indefinite; the operator is flagged completely positive only
/// when `W` is PSD.
pub fn moment_dynamics(m: &ModeTensor, w: &SymMat) -> Result<CpOperator> {
    if w.dim() != m.nw() {
        return Err(Error::DimensionMismatch(format!("W is {}, model has {} modes", w.dim(), m.nw())));
    }
    let cp = w.is_psd(linalg::PSD_TOL);
    Ok(CpOperator::from_parts(m.nz(), m.nx, tensor_op_matrix(&m.tensor, w.as_matrix()), cp))
}

/// `[I; K]`, the map from states to `z = (x, Kx)`.
pub fn feedback_lift(nx: usize, k: &DMatrix<f64>) -> DMatrix<f64> {
    let nu = k.nrows();
    let mut l = DMatrix::zeros(nx + nu, nx);
    l.view_mut((0, 0), (nx, nx)).fill_with_identity();
    l.view_mut((nx, 0), (nu, nx)).copy_from(k);
    l
}

/// `Π_K(X) = [I; K] X [I, Kᵀ]` as an operator `𝕊^{n_x} → 𝕊^{n_z}`.
pub fn pi_k(nx: usize, k: &DMatrix<f64>) -> CpOperator {
    let l = feedback_lift(nx, k);
    CpOperator::from_parts(nx, nx + k.nrows(), skron_unchecked(&l, &l), true)
}

/// `Π_K*(H) = [I, Kᵀ] H [I; K]`.
pub fn pi_k_adjoint(h: &SymMat, k: &DMatrix<f64>) -> SymMat {
    let nx = k.ncols();
    h.congruence(&feedback_lift(nx, k).transpose())
}

/// Closed loop `𝓔_K(X) = 𝓔(W; Π_K(X))` on `𝕊^{n_x}`.
pub fn closed_loop(m: &ModeTensor, w: &SymMat, k: &DMatrix<f64>) -> Result<CpOperator> {
    if k.shape() != (m.nu, m.nx) {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, expected {}x{}",
            k.nrows(),
            k.ncols(),
            m.nu,
            m.nx
        )));
    }
    moment_dynamics(m, w)?.compose(&pi_k(m.nx, k))
}

/// Blocks of `𝓔*(W; P) = [[F*, H*ᵀ], [H*, G*]]` partitioned at `n_x`.
#[derive(Debug, Clone)]
pub struct AdjointBlocks {
    /// `F*(P) = 𝓐_(2)(W ⊗ P)𝓐_(2)ᵀ`, `n_x × n_x`.
    pub f: SymMat,
    /// `H*(P) = 𝓑_(2)(W ⊗ P)𝓐_(2)ᵀ`, `n_u × n_x`.
    pub h: DMatrix<f64>,
    /// `G*(P) = 𝓑_(2)(W ⊗ P)𝓑_(2)ᵀ`, `n_u × n_u`.
    pub g: SymMat,
}

/// Full adjoint `𝓔*(W; P) = Σ_{c,d} W_cd M_cᵀ P M_d` as an `n_z × n_z` matrix.
pub fn adjoint_full(m: &ModeTensor, w: &SymMat, p: &SymMat) -> Result<SymMat> {
    if w.dim() != m.nw() || p.dim() != m.nx {
        return Err(Error::DimensionMismatch(format!(
            "W is {}, P is {}; model has nw={}, nx={}",
            w.dim(),
            p.dim(),
            m.nw(),
            m.nx
        )));
    }
    let slices = m.tensor.frontal_slices();
    let pm: Vec<DMatrix<f64>> = slices.iter().map(|s| p.as_matrix() * s).collect();
    let mut out = DMatrix::zeros(m.nz(), m.nz());
    for c in 0..m.nw() {
        for d in 0..m.nw() {
            let wcd = w.get(c, d);
            if wcd != 0.0 {
                out += slices[c].transpose() * &pm[d] * wcd;
            }
        }
    }
    Ok(SymMat::symmetrize(out))
}

/// Blocks `F*, H*, G*` of the adjoint moment dynamics at `P`.
pub fn adjoint_blocks(m: &ModeTensor, w: &SymMat, p: &SymMat) -> Result<AdjointBlocks> {
    let full = adjoint_full(m, w, p)?;
    let e = full.as_matrix();
    let (nx, nu) = (m.nx, m.nu);
    Ok(AdjointBlocks {
        f: SymMat::symmetrize(e.view((0, 0), (nx, nx)).into_owned()),
        h: e.view((nx, 0), (nu, nx)).into_owned(),
        g: SymMat::symmetrize(e.view((nx, nx), (nu, nu)).into_owned()),
    })
}

/// One step `x⁺ = ⟦𝓜; I, z, w⟧ = Σ_c w_c [A_c, B_c] z`.
pub fn step(m: &ModeTensor, z: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    if w.len() != m.nw() {
        return Err(Error::DimensionMismatch(format!("w has length {}, expected {}", w.len(), m.nw())));
    }
    Ok(m.contract_z(z)? * w)
}

/// Model-free basis: `n_w = n_x n_z` and `𝓜_(3) = I`.
pub fn model_free_basis(nx: usize, nu: usize) -> ModeTensor {
    let nz = nx + nu;
    ModeTensor::from_mode3_matrix(nx, nu, &DMatrix::identity(nx * nz, nx * nz), false)
        .expect("identity matricization has the right shape")
}
