//! LQR synthesis for multiplicative noise through the generalized Riccati map.
//!
//! With the adjoint blocks `F*, H*, G*` of the moment dynamics at `P`,
//! `𝓡(P) = Q + F*(P) − H*(P)ᵀ(R + G*(P))⁻¹H*(P)`. Value iteration from
//! `P₀ = 0` is nondecreasing and converges to the optimal value matrix
//! exactly when a mean-square stabilizing controller exists; the optimal
//! gain is `K = −(R + G*(P))⁻¹H*(P)`. Robust synthesis over the interval
//! `[Ŵ − β I, Ŵ + β I]` runs the same iteration at the upper end, which by
//! monotonicity of completely positive operators stabilizes every second
//! moment in the interval.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpop::{lyapunov_solve_unchecked, STAB_TOL};
use crate::error::{Error, Result};
use crate::identify::AmbiguitySet;
use crate::linalg::PSD_TOL;
use crate::model::{adjoint_blocks, closed_loop, pi_k_adjoint, ModeTensor};
use crate::symm::{matrix_from_rows, matrix_to_rows, SymMat};

/// Stage cost weights and initial second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LqrSpecJson", into = "LqrSpecJson")]
pub struct LqrSpec {
    q: SymMat,
    r: SymMat,
    x0: SymMat,
}

impl LqrSpec {
    /// Validates `Q ≻ 0`, `R ≻ 0` and `X₀ ⪰ 0`.
    pub fn new(q: SymMat, r: SymMat, x0: SymMat) -> Result<Self> {
        q.require_pd("Q")?;
        r.require_pd("R")?;
        x0.require_psd("X0")?;
        if x0.dim() != q.dim() {
            return Err(Error::DimensionMismatch("X0 and Q differ in size".into()));
        }
        Ok(LqrSpec { q, r, x0 })
    }

    /// State weight.
    pub fn q(&self) -> &SymMat {
        &self.q
    }

    /// Input weight.
    pub fn r(&self) -> &SymMat {
        &self.r
    }

    /// Initial second moment.
    pub fn x0(&self) -> &SymMat {
        &self.x0
    }

    /// `H = diag(Q, R)`.
    pub fn h(&self) -> SymMat {
        let (nx, nu) = (self.q.dim(), self.r.dim());
        let mut h = DMatrix::zeros(nx + nu, nx + nu);
        h.view_mut((0, 0), (nx, nx)).copy_from(self.q.as_matrix());
        h.view_mut((nx, nx), (nu, nu)).copy_from(self.r.as_matrix());
        SymMat::symmetrize(h)
    }

    fn check_model(&self, m: &ModeTensor) -> Result<()> {
        if self.q.dim() != m.nx() || self.r.dim() != m.nu() {
            return Err(Error::DimensionMismatch(format!(
                "weights are {}x{} and {}x{}, model has nx={}, nu={}",
                self.q.dim(),
                self.q.dim(),
                self.r.dim(),
                self.r.dim(),
                m.nx(),
                m.nu()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqrSpecJson {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "X0")]
    x0: Vec<Vec<f64>>,
}

impl TryFrom<LqrSpecJson> for LqrSpec {
    type Error = Error;
    fn try_from(j: LqrSpecJson) -> Result<Self> {
        LqrSpec::new(SymMat::from_rows(&j.q)?, SymMat::from_rows(&j.r)?, SymMat::from_rows(&j.x0)?)
    }
}

impl From<LqrSpec> for LqrSpecJson {
    fn from(s: LqrSpec) -> Self {
        LqrSpecJson { q: s.q.to_rows(), r: s.r.to_rows(), x0: s.x0.to_rows() }
    }
}

/// Stopping rules of the value iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    /// Relative Frobenius step tolerance.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Divergence is declared once `‖P_k‖_F > cap · ‖Q‖_F`.
    pub divergence_cap: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        RiccatiOptions { tol: 1e-10, max_iter: 10_000, divergence_cap: 1e12 }
    }
}

/// Value matrix, gain and diagnostics of a converged synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    /// Value matrix `P`.
    pub p: SymMat,
    /// Gain `K`, `n_u × n_x`.
    pub k: DMatrix<f64>,
    /// `tr[P X₀]`.
    pub value: f64,
    /// Number of Riccati iterations.
    pub iterations: usize,
    /// `‖𝓡(P) − P‖_F`.
    pub residual: f64,
    /// Spectral radius of the closed loop at the synthesis moment.
    pub rho_closed_loop: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesisResultJson {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    value: f64,
    iterations: usize,
    residual: f64,
    rho_closed_loop: f64,
}

impl Serialize for SynthesisResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SynthesisResultJson {
            p: self.p.to_rows(),
            k: matrix_to_rows(&self.k),
            value: self.value,
            iterations: self.iterations,
            residual: self.residual,
            rho_closed_loop: self.rho_closed_loop,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SynthesisResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SynthesisResultJson::deserialize(d)?;
        let p = SymMat::from_rows(&j.p).map_err(serde::de::Error::custom)?;
        let k = matrix_from_rows(&j.k).map_err(serde::de::Error::custom)?;
        Ok(SynthesisResult {
            p,
            k,
            value: j.value,
            iterations: j.iterations,
            residual: j.residual,
            rho_closed_loop: j.rho_closed_loop,
        })
    }
}

fn solve_inner(inner: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = inner.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let lu = inner.clone().lu();
    let sol = lu.solve(rhs).ok_or(Error::SingularInnerMatrix)?;
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::SingularInnerMatrix)
    }
}

/// Riccati map together with the minimizing gain at `P`.
fn riccati_step(m: &ModeTensor, w: &SymMat, spec: &LqrSpec, p: &SymMat) -> Result<(SymMat, DMatrix<f64>)> {
    let b = adjoint_blocks(m, w, p)?;
    let inner = spec.r.as_matrix() + b.g.as_matrix();
    let sol = solve_inner(&inner, &b.h)?;
    let next = spec.q.as_matrix() + b.f.as_matrix() - b.h.transpose() * &sol;
    Ok((SymMat::symmetrize(next), -sol))
}

/// `𝓡(P) = Q + F*(P) − H*(P)ᵀ(R + G*(P))⁻¹H*(P)`.
pub fn riccati_apply(m: &ModeTensor, w: &SymMat, spec: &LqrSpec, p: &SymMat) -> Result<SymMat> {
    spec.check_model(m)?;
    Ok(riccati_step(m, w, spec, p)?.0)
}

/// Minimizing gain `K = −(R + G*(P))⁻¹H*(P)`.
pub fn riccati_gain(m: &ModeTensor, w: &SymMat, spec: &LqrSpec, p: &SymMat) -> Result<DMatrix<f64>> {
    spec.check_model(m)?;
    Ok(riccati_step(m, w, spec, p)?.1)
}

/// Value iteration `P_{k+1} = 𝓡(P_k)` from `P₀ = 0`.
///
/// Stops when `‖P_{k+1} − P_k‖_F ≤ tol · ‖P_k‖_F`; reports
/// [`Error::Diverged`] once `‖P_k‖_F` exceeds `divergence_cap · ‖Q‖_F`,
/// which signals that no controller stabilizes the system in mean square.
pub fn riccati_fixed_point(m: &ModeTensor, w: &SymMat, spec: &LqrSpec, opts: RiccatiOptions) -> Result<SynthesisResult> {
    spec.check_model(m)?;
    w.require_psd("W")?;
    let cap = opts.divergence_cap * spec.q.norm_fro();
    let mut p = SymMat::zeros(m.nx());
    let mut iterations = 0;
    loop {
        if iterations >= opts.max_iter {
            let next = riccati_step(m, w, spec, &p)?.0;
            let step = (&next - &p).norm_fro() / p.norm_fro().max(f64::MIN_POSITIVE);
            return Err(Error::NotConverged { max_iter: opts.max_iter, step });
        }
        let (next, _) = riccati_step(m, w, spec, &p)?;
        iterations += 1;
        let next_norm = next.norm_fro();
        if !(next_norm <= cap) {
            return Err(Error::Diverged { iterations });
        }
        let step = (&next - &p).norm_fro();
        let done = step <= opts.tol * p.norm_fro();
        p = next;
        if done {
            break;
        }
    }
    let (after, k) = riccati_step(m, w, spec, &p)?;
    let residual = (&after - &p).norm_fro();
    let rho = closed_loop(m, w, &k)?.spectral_radius()?;
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop(rho));
    }
    Ok(SynthesisResult { value: p.inner(&spec.x0), p, k, iterations, residual, rho_closed_loop: rho })
}

/// Upper second moment used by [`dr_synthesize`].
///
/// Unstructured sets use `W̄ = Ŵ + β_W I`; structured sets use
/// [`AmbiguitySet::structured_upper_moment`].
pub fn upper_moment(amb: &AmbiguitySet) -> Result<SymMat> {
    let w_bar = match amb.structured {
        Some(_) => amb.structured_upper_moment()?,
        None => amb.w_upper(),
    };
    let (lo, hi) = (w_bar.eigmin(), w_bar.eigmax());
    if lo < -PSD_TOL * hi.max(1.0) {
        return Err(Error::WBarNotPsd(lo));
    }
    Ok(w_bar)
}

/// Distributionally robust synthesis: value iteration at the upper moment `W̄`.
///
/// The returned gain stabilizes every second moment in the ambiguity set
/// and its value `tr[P̄ X₀]` upper-bounds the cost under any of them.
pub fn dr_synthesize(m: &ModeTensor, amb: &AmbiguitySet, spec: &LqrSpec, opts: RiccatiOptions) -> Result<SynthesisResult> {
    let w_bar = upper_moment(amb)?;
    if w_bar.dim() != m.nw() {
        return Err(Error::DimensionMismatch(format!(
            "ambiguity set has dimension {}, model has {} modes",
            w_bar.dim(),
            m.nw()
        )));
    }
    riccati_fixed_point(m, &w_bar, spec, opts)
}

/// Certainty-equivalent synthesis at the point estimate (full moment for structured sets).
pub fn ce_synthesize(m: &ModeTensor, amb: &AmbiguitySet, spec: &LqrSpec, opts: RiccatiOptions) -> Result<SynthesisResult> {
    riccati_fixed_point(m, &amb.full_moment_estimate().clip_psd(), spec, opts)
}

/// Infinite-horizon cost `tr[P X₀]` of `u = K x` under the moment `W`,
/// where `P − 𝓔_K*(P) = Π_K*(H)`.
pub fn closed_loop_cost(m: &ModeTensor, w: &SymMat, k: &DMatrix<f64>, spec: &LqrSpec) -> Result<f64> {
    spec.check_model(m)?;
    let op = closed_loop(m, w, k)?;
    let rho = op.spectral_radius()?;
    if rho >= 1.0 - STAB_TOL {
        return Err(Error::UnstableClosedLoop(rho));
    }
    let rhs = pi_k_adjoint(&spec.h(), k);
    let p = lyapunov_solve_unchecked(&op, &rhs)?;
    Ok(p.inner(&spec.x0))
}

/// `(J(K) − J(K⋆)) / J(K⋆)` with `K⋆` optimal for the moment `W`.
pub fn relative_suboptimality(
    m: &ModeTensor,
    w: &SymMat,
    k: &DMatrix<f64>,
    spec: &LqrSpec,
    opts: RiccatiOptions,
) -> Result<f64> {
    let opt = riccati_fixed_point(m, w, spec, opts)?;
    relative_suboptimality_to(m, w, k, spec, &opt)
}

/// As [`relative_suboptimality`] with a precomputed optimum.
pub fn relative_suboptimality_to(
    m: &ModeTensor,
    w: &SymMat,
    k: &DMatrix<f64>,
    spec: &LqrSpec,
    optimum: &SynthesisResult,
) -> Result<f64> {
    let j_opt = closed_loop_cost(m, w, &optimum.k, spec)?;
    let j = closed_loop_cost(m, w, k, spec)?;
    Ok((j - j_opt) / j_opt)
}
