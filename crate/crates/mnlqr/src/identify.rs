//! Least-squares identification of disturbance moments with confidence radii.
//!
//! Measurements follow `x_{i+1} = ⟦𝓜; I, z_i, w_i⟧`. Taking symmetrized
//! Kronecker squares gives the linear regression
//! `x_{i+1} ⊛ x_{i+1} = (𝓦 ×̄₂ (z_i ⊛ z_i)) svec(w_i w_iᵀ)` with
//! `𝓦 = 𝓜 ⊛ 𝓜`, whose least-squares solution `svec(Ŵ) = Z_N⁺ Y_N`
//! estimates `W = E[w wᵀ]` up to a component that does not affect the
//! moment dynamics.
//!
//! For a structured model the known deterministic slice is subtracted
//! from the targets first, and the estimators act on the stochastic part
//! `𝓜̃` and `w̃`, where `w = (1, w̃)`.
//!
//! The normal equations are accumulated in `O(sd(n_z)²)` memory: only
//! `Σ (z_i⊛z_i)(z_i⊛z_i)ᵀ` and `Z_Nᵀ Y_N` are kept, and the Gram matrix
//! `Z_Nᵀ Z_N = 𝓦_(3)((Σ (z_i⊛z_i)(z_i⊛z_i)ᵀ) ⊗ I)𝓦_(3)ᵀ` is formed once.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::concentration::{check_delta, vector_hoeffding_radius};
use crate::error::{Error, Result};
use crate::linalg::{self, pinv, pinv_psd, rank, SVD_TOL};
use crate::model::ModeTensor;
use crate::simulate::sample_unit_ball;
use crate::symm::{sd, skron_vec, svec_matrix, unsvec_dim, SymMat};
use crate::tensor::{matricize, mode_vec_product, tensor_skron, tensor_spectral_norm_ub, Tensor3};

/// Relative residual accepted by [`recover_disturbances`].
pub const RECOVERY_TOL: f64 = 1e-8;

/// How a dataset was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Generation {
    /// Independent one-step transitions from random initial states.
    RepeatedInit,
    /// Final transition of independent rollouts of length `horizon`.
    Rollout {
        /// Rollout length `T`.
        horizon: usize,
    },
    /// Consecutive transitions of one trajectory; radii are not certified.
    SingleTrajectory,
}

/// One measured transition `(z_i, x_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// State-input pair `z_i = (x_i, u_i)`.
    pub z: DVector<f64>,
    /// Next state.
    pub x_next: DVector<f64>,
}

/// Metadata stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    /// Bound on the disturbance norm in model coordinates.
    pub r_w: f64,
    /// Optional bound on `‖z‖`.
    #[serde(default)]
    pub r_z: Option<f64>,
    /// Generation method.
    pub generation: Generation,
    /// Seed used by the generator.
    pub seed: u64,
}

/// Measured transitions plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    meta: DatasetMeta,
}

/// Version tag written as the first line of dataset CSV files.
pub const DATASET_CSV_VERSION: &str = "# mnlqr-dataset v1";

impl Dataset {
    /// Validates that all transitions share their dimensions.
    pub fn new(transitions: Vec<Transition>, meta: DatasetMeta) -> Result<Self> {
        if let Some(first) = transitions.first() {
            let (nz, nx) = (first.z.len(), first.x_next.len());
            for (i, t) in transitions.iter().enumerate() {
                if t.z.len() != nz || t.x_next.len() != nx {
                    return Err(Error::DimensionMismatch(format!("transition {i} differs in shape")));
                }
            }
        }
        if !(meta.r_w >= 0.0) {
            return Err(Error::InvalidArgument("r_w must be nonnegative".into()));
        }
        Ok(Dataset { transitions, meta })
    }

    /// Number of transitions `N`.
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    /// True when the dataset has no transitions.
    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// The transitions.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Metadata.
    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    /// Disturbance norm bound.
    pub fn r_w(&self) -> f64 {
        self.meta.r_w
    }

    /// Same transitions with a different disturbance bound, used when the
    /// model basis rescales the disturbance.
    pub fn with_r_w(&self, r_w: f64) -> Result<Dataset> {
        Dataset::new(self.transitions.clone(), DatasetMeta { r_w, ..self.meta.clone() })
    }

    /// Generation method.
    pub fn generation(&self) -> Generation {
        self.meta.generation
    }

    /// First `n` transitions as a new dataset.
    pub fn truncate(&self, n: usize) -> Dataset {
        Dataset { transitions: self.transitions[..n.min(self.len())].to_vec(), meta: self.meta.clone() }
    }

    /// Path of the JSON sidecar belonging to a CSV path.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        let mut s = csv_path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// Writes `i,z_0..,xnext_0..` rows after a version comment, plus the JSON sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{DATASET_CSV_VERSION}")?;
        let (nz, nx) = self
            .transitions
            .first()
            .map(|t| (t.z.len(), t.x_next.len()))
            .unwrap_or((0, 0));
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["i".to_string()];
        header.extend((0..nz).map(|k| format!("z_{k}")));
        header.extend((0..nx).map(|k| format!("xnext_{k}")));
        wtr.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.transitions.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(t.z.iter().map(|v| format!("{v:e}")));
            rec.extend(t.x_next.iter().map(|v| format!("{v:e}")));
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(Self::sidecar_path(path), meta)?;
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::write_csv`] together with its sidecar.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let meta_text = std::fs::read_to_string(Self::sidecar_path(path))?;
        let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(|e| Error::ConfigInvalid {
            path: Self::sidecar_path(path).display().to_string(),
            message: e.to_string(),
        })?;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
        let header = rdr.headers().map_err(csv_err)?.clone();
        let nz = header.iter().filter(|h| h.starts_with("z_")).count();
        let nx = header.iter().filter(|h| h.starts_with("xnext_")).count();
        if header.len() != 1 + nz + nx || header.get(0) != Some("i") {
            return Err(Error::ConfigInvalid {
                path: path.display().to_string(),
                message: "header must be i,z_0..,xnext_0..".into(),
            });
        }
        let mut transitions = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().skip(1).map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::ConfigInvalid { path: path.display().to_string(), message: e.to_string() })?;
            transitions.push(Transition {
                z: DVector::from_column_slice(&vals[..nz]),
                x_next: DVector::from_column_slice(&vals[nz..]),
            });
        }
        Dataset::new(transitions, meta)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Confidence radii for a structured model (mean and covariance of `w̃`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredAmbiguity {
    /// Estimated mean `μ̂`.
    pub mu_hat: Vec<f64>,
    /// Estimated covariance `Σ̂ = Ŵ̃ − μ̂μ̂ᵀ`.
    pub sigma_hat: SymMat,
    /// Mean radius `β_μ`.
    pub beta_mu: f64,
    /// Covariance radius `β_Σ = β_W + β_μ(β_μ + 2‖μ̂‖)`.
    pub beta_sigma: f64,
    /// `ζ_μ`.
    pub zeta_mu: f64,
    /// Failure probability assigned to the mean.
    pub delta_mu: f64,
    /// Failure probability assigned to the second moment.
    pub delta_w: f64,
}

/// Estimated second moment with its radius, `[Ŵ − β_W I, Ŵ + β_W I]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySet {
    /// Estimate `Ŵ` (of `E[w̃ w̃ᵀ]` for structured models).
    pub w_hat: SymMat,
    /// Radius `β_W`.
    pub beta_w: f64,
    /// Overall failure probability.
    pub delta: f64,
    /// `ζ_W`.
    pub zeta_w: f64,
    /// False when the data violate the independence assumption of the radius.
    pub certified: bool,
    /// Mean and covariance radii for structured models.
    #[serde(default)]
    pub structured: Option<StructuredAmbiguity>,
}

impl AmbiguitySet {
    /// Lower end `W̲ = Ŵ − β_W I`.
    pub fn w_lower(&self) -> SymMat {
        &self.w_hat - &SymMat::identity(self.w_hat.dim()).scale(self.beta_w)
    }

    /// Upper end `W̄ = Ŵ + β_W I`.
    pub fn w_upper(&self) -> SymMat {
        &self.w_hat + &SymMat::identity(self.w_hat.dim()).scale(self.beta_w)
    }

    /// Same set with a different radius (used for certainty-equivalent and trivial sets).
    pub fn with_beta(&self, beta_w: f64) -> AmbiguitySet {
        AmbiguitySet { beta_w, ..self.clone() }
    }

    /// Prior-only set `Ŵ = 0`, `β_W = r_w²` implied by the norm bound alone.
    pub fn trivial(nw: usize, r_w: f64, delta: f64) -> AmbiguitySet {
        AmbiguitySet {
            w_hat: SymMat::zeros(nw),
            beta_w: r_w * r_w,
            delta,
            zeta_w: 0.0,
            certified: true,
            structured: None,
        }
    }

    /// Full second moment `E[w wᵀ]` with `w = (1, w̃)` estimated from a structured set:
    /// `[[1, μ̂ᵀ], [μ̂, Ŵ̃]]`. For unstructured sets this is `Ŵ`.
    pub fn full_moment_estimate(&self) -> SymMat {
        match &self.structured {
            None => self.w_hat.clone(),
            Some(s) => {
                let mu = DVector::from_column_slice(&s.mu_hat);
                assemble_structured(&mu, self.w_hat.as_matrix())
            }
        }
    }

    /// A PSD upper bound on every full moment `E[w wᵀ]` compatible with a structured set.
    ///
    /// For `‖μ − μ̂‖ ≤ β_μ` and `‖Σ − Σ̂‖₂ ≤ β_Σ`, writing
    /// `a = (1, μ̂)` and using `(a + b)(a + b)ᵀ ⪯ (1 + ε) a aᵀ + (1 + 1/ε) b bᵀ`,
    /// the matrix `(1 + ε) a aᵀ + diag(0, Σ̂ + (β_Σ + (1 + 1/ε) β_μ²) I)`
    /// dominates `diag(0, Σ) + (1, μ)(1, μ)ᵀ`. `ε = β_μ / ‖a‖` is used.
    pub fn structured_upper_moment(&self) -> Result<SymMat> {
        let s = self.structured.as_ref().ok_or(Error::NotStructured)?;
        let mu = DVector::from_column_slice(&s.mu_hat);
        let a_norm = (1.0 + mu.norm_squared()).sqrt();
        let (eps, extra) = if s.beta_mu > 0.0 {
            let eps = s.beta_mu / a_norm;
            (eps, (1.0 + 1.0 / eps) * s.beta_mu * s.beta_mu)
        } else {
            (0.0, 0.0)
        };
        let n = mu.len();
        let mut a = DVector::zeros(n + 1);
        a[0] = 1.0;
        a.rows_mut(1, n).copy_from(&mu);
        let mut out = &a * a.transpose() * (1.0 + eps);
        let block = s.sigma_hat.as_matrix() + DMatrix::identity(n, n) * (s.beta_sigma + extra);
        let mut tail = out.view_mut((1, 1), (n, n));
        tail += block;
        Ok(SymMat::symmetrize(out))
    }
}

fn assemble_structured(mu: &DVector<f64>, second: &DMatrix<f64>) -> SymMat {
    let n = mu.len();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out[(0, 0)] = 1.0;
    out.view_mut((1, 0), (n, 1)).copy_from(mu);
    out.view_mut((0, 1), (1, n)).copy_from(&mu.transpose());
    out.view_mut((1, 1), (n, n)).copy_from(second);
    SymMat::symmetrize(out)
}

/// The model and targets the second-moment regression acts on.
///
/// Unstructured models regress `x_{i+1}` on `𝓜`. Structured models regress
/// `y_{i+1} = x_{i+1} − [A₁, B₁] z_i` on the stochastic part `𝓜̃`.
pub fn regression_problem(m: &ModeTensor, data: &Dataset) -> Result<(ModeTensor, Vec<(DVector<f64>, DVector<f64>)>)> {
    check_dims(m, data)?;
    if m.is_structured() {
        let det = m.deterministic_mode()?;
        let pairs = data.transitions.iter().map(|t| (t.z.clone(), &t.x_next - &det * &t.z)).collect();
        Ok((m.truncated()?, pairs))
    } else {
        Ok((m.clone(), data.transitions.iter().map(|t| (t.z.clone(), t.x_next.clone())).collect()))
    }
}

fn check_dims(m: &ModeTensor, data: &Dataset) -> Result<()> {
    if let Some(t) = data.transitions.first() {
        if t.z.len() != m.nz() || t.x_next.len() != m.nx() {
            return Err(Error::DimensionMismatch(format!(
                "data has (nz, nx) = ({}, {}), model has ({}, {})",
                t.z.len(),
                t.x_next.len(),
                m.nz(),
                m.nx()
            )));
        }
    }
    Ok(())
}

/// Explicit stacked regression `(Z_N, Y_N)` with blocks `𝓦 ×̄₂ (z_i ⊛ z_i)` and `x_{i+1} ⊛ x_{i+1}`.
///
/// Memory grows with `N`; the estimators use the accumulated normal
/// equations instead.
pub fn build_regression(m: &ModeTensor, data: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if data.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let (mm, pairs) = regression_problem(m, data)?;
    let w = tensor_skron(mm.tensor());
    let (sx, sw) = (sd(mm.nx()), sd(mm.nw()));
    let n = pairs.len();
    let mut zn = DMatrix::zeros(n * sx, sw);
    let mut yn = DVector::zeros(n * sx);
    for (i, (z, y)) in pairs.iter().enumerate() {
        let block = mode_vec_product(&w, &skron_vec(z), 2)?;
        zn.view_mut((i * sx, 0), (sx, sw)).copy_from(&block);
        yn.rows_mut(i * sx, sx).copy_from(&skron_vec(y));
    }
    Ok((zn, yn))
}

/// Stacked form `Z_N = ([z₁⊛z₁, …]ᵀ ⊗ I_{sd(n_x)}) 𝓦_(3)ᵀ`, an independent assembly path.
pub fn build_regression_stacked(m: &ModeTensor, data: &Dataset) -> Result<DMatrix<f64>> {
    let (mm, pairs) = regression_problem(m, data)?;
    let w3 = matricize(&tensor_skron(mm.tensor()), 3)?;
    let sz = sd(mm.nz());
    let mut s = DMatrix::zeros(pairs.len(), sz);
    for (i, (z, _)) in pairs.iter().enumerate() {
        s.set_row(i, &skron_vec(z).transpose());
    }
    let ix = DMatrix::identity(sd(mm.nx()), sd(mm.nx()));
    Ok(linalg::kron(&s, &ix) * w3.transpose())
}

/// Accumulated normal equations of the second-moment regression.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    /// Model the regression acts on (the stochastic part for structured models).
    pub model: ModeTensor,
    /// `𝓦 = 𝓜 ⊛ 𝓜` of that model.
    pub w_tensor: Tensor3,
    /// `𝓦_(3)`.
    pub w3: DMatrix<f64>,
    /// `Σ (z_i⊛z_i)(z_i⊛z_i)ᵀ`.
    pub szz: DMatrix<f64>,
    /// Gram matrix `Z_Nᵀ Z_N`.
    pub gram: DMatrix<f64>,
    /// `Z_Nᵀ Y_N`.
    pub rhs: DVector<f64>,
    /// Number of samples.
    pub n: usize,
    /// The `z ⊛ z` vectors, kept for the per-sample radius terms.
    pub zz: Vec<DVector<f64>>,
}

/// Accumulates the normal equations and checks the excitation rank.
pub fn normal_equations(m: &ModeTensor, data: &Dataset) -> Result<NormalEquations> {
    let (mm, pairs) = regression_problem(m, data)?;
    let sz = sd(mm.nz());
    if pairs.len() < sz {
        return Err(Error::InsufficientSamples { needed: sz, got: pairs.len() });
    }
    let w_tensor = tensor_skron(mm.tensor());
    let w3 = matricize(&w_tensor, 3)?;
    let mut szz = DMatrix::zeros(sz, sz);
    let mut rhs = DVector::zeros(sd(mm.nw()));
    let mut zz = Vec::with_capacity(pairs.len());
    for (z, y) in &pairs {
        let s = skron_vec(z);
        szz.ger(1.0, &s, &s, 1.0);
        let block = mode_vec_product(&w_tensor, &s, 2)?;
        rhs += block.transpose() * skron_vec(y);
        zz.push(s);
    }
    let r = rank(&szz, SVD_TOL);
    if r < sz {
        return Err(Error::RankDeficientData { rank: r, required: sz });
    }
    let ix = DMatrix::identity(sd(mm.nx()), sd(mm.nx()));
    let gram = &w3 * linalg::kron(&szz, &ix) * w3.transpose();
    Ok(NormalEquations { model: mm, w_tensor, w3, szz, gram, rhs, n: pairs.len(), zz })
}

/// Least-squares estimate `svec(Ŵ) = Z_N⁺ Y_N`, computed as `(Z_NᵀZ_N)⁺ Z_NᵀY_N`.
///
/// The estimate is not projected onto the PSD cone.
pub fn ls_second_moment(m: &ModeTensor, data: &Dataset) -> Result<SymMat> {
    let ne = normal_equations(m, data)?;
    Ok(solve_normal(&ne))
}

fn solve_normal(ne: &NormalEquations) -> SymMat {
    let sol = pinv_psd(&ne.gram, SVD_TOL) * &ne.rhs;
    SymMat::symmetrize(unsvec_dim(&sol, ne.model.nw()))
}

/// Spectral norm of `G⁺ BᵀB` computed through the thin factor of `B`.
fn projector_term_norm(gram_pinv: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // B = Rᵀ Qᵀ from a thin QR of Bᵀ, so ‖G⁺BᵀB‖ = ‖G⁺Bᵀ Rᵀ‖.
    let qr = b.transpose().qr();
    let r = qr.r();
    let x = gram_pinv * b.transpose() * r.transpose();
    linalg::spectral_norm(&x)
}

/// `ζ_W = √(Σᵢ (√n_w ‖𝑯ᵢ‖₂)²)` with `𝑯ᵢ = (Σⱼ 𝒲(zⱼzⱼᵀ))⁺ 𝒲(zᵢzᵢᵀ)`.
pub fn zeta_w(m: &ModeTensor, data: &Dataset) -> Result<f64> {
    let ne = normal_equations(m, data)?;
    Ok(zeta_from_normal(&ne))
}

fn zeta_from_normal(ne: &NormalEquations) -> f64 {
    let gp = pinv_psd(&ne.gram, SVD_TOL);
    let sum_sq: f64 = ne
        .zz
        .iter()
        .map(|s| {
            let b = mode_vec_product(&ne.w_tensor, s, 2).expect("length sd(nz)");
            projector_term_norm(&gp, &b).powi(2)
        })
        .sum();
    (ne.model.nw() as f64 * sum_sq).sqrt()
}

/// Per-sample matrices `𝑯ᵢ`; memory grows with `N`, intended for checks.
pub fn h_matrices(m: &ModeTensor, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
    let ne = normal_equations(m, data)?;
    let gp = pinv_psd(&ne.gram, SVD_TOL);
    Ok(ne
        .zz
        .iter()
        .map(|s| {
            let b = mode_vec_product(&ne.w_tensor, s, 2).expect("length sd(nz)");
            &gp * b.transpose() * b
        })
        .collect())
}

/// Radius `β_W = r_w² ζ_W √(2 ln(2 n_w/δ))`.
pub fn beta_w_from_zeta(r_w: f64, zeta: f64, nw: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(r_w * r_w * zeta * (2.0 * (2.0 * nw as f64 / delta).ln()).sqrt())
}

/// Estimate `Ŵ` with radius `β_W`; with probability at least `1 − δ`,
/// `𝓔(Ŵ − β_W I; Z) ⪯ 𝓔⋆(Z) ⪯ 𝓔(Ŵ + β_W I; Z)` for all `Z ⪰ 0`.
///
/// Single-trajectory data yield an estimate whose radius is marked as not certified.
pub fn second_moment_ambiguity(m: &ModeTensor, data: &Dataset, delta: f64) -> Result<AmbiguitySet> {
    check_delta(delta)?;
    let ne = normal_equations(m, data)?;
    let w_hat = solve_normal(&ne);
    let zeta = zeta_from_normal(&ne);
    let beta_w = beta_w_from_zeta(data.r_w(), zeta, ne.model.nw(), delta)?;
    Ok(AmbiguitySet {
        w_hat,
        beta_w,
        delta,
        zeta_w: zeta,
        certified: data.generation() != Generation::SingleTrajectory,
        structured: None,
    })
}

/// Empirical normalized kurtosis `(1/N) Σ (z⊛z)(z⊛z)ᵀ / r_z⁴`.
pub fn empirical_kurtosis(zs: &[DVector<f64>], r_z: f64) -> Result<SymMat> {
    let first = zs.first().ok_or(Error::EmptyInput)?;
    let sz = sd(first.len());
    let mut acc = DMatrix::zeros(sz, sz);
    for z in zs {
        let s = skron_vec(z);
        acc.ger(1.0, &s, &s, 1.0);
    }
    Ok(SymMat::symmetrize(acc / (zs.len() as f64 * r_z.powi(4))))
}

/// Components of the sample-complexity prediction for `ζ_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaPrediction {
    /// Predicted upper bound on `ζ_W`.
    pub bound: f64,
    /// `γ_W`, the `d_W`-th largest eigenvalue of `𝓦_(3)(kurtosis ⊗ I)𝓦_(3)ᵀ`.
    pub gamma_w: f64,
    /// `τ_W = √(2 ln(2 d_W/δ))`.
    pub tau_w: f64,
    /// `d_W = rk(𝓦_(3))`.
    pub d_w: usize,
    /// Upper bound used for the tensor spectral norm `‖𝓦‖₂`.
    pub w_norm: f64,
    /// Smallest `N` for which the bound applies.
    pub threshold: f64,
}

/// Predicted bound `√n_w ‖𝓦‖₂² / (√N γ_W − ‖𝓦‖₂² τ_W)` on `ζ_W`.
///
/// `‖𝓦‖₂` is replaced by the smallest flattening norm `min_n ‖𝓦_(n)‖₂`,
/// an upper bound that keeps the prediction conservative. The factor
/// `√n_w` makes the prediction comparable with [`zeta_w`], which carries
/// the same factor from the operator-norm bound.
pub fn predicted_zeta_w(m: &ModeTensor, kurtosis: &SymMat, n: usize, delta: f64) -> Result<ZetaPrediction> {
    check_delta(delta)?;
    kurtosis.require_psd("kurtosis")?;
    let mm = if m.is_structured() { m.truncated()? } else { m.clone() };
    if kurtosis.dim() != sd(mm.nz()) {
        return Err(Error::DimensionMismatch(format!("kurtosis is {}, expected {}", kurtosis.dim(), sd(mm.nz()))));
    }
    let w = tensor_skron(mm.tensor());
    let w3 = matricize(&w, 3)?;
    let d_w = rank(&w3, SVD_TOL);
    let ix = DMatrix::identity(sd(mm.nx()), sd(mm.nx()));
    let mat = &w3 * linalg::kron(kurtosis.as_matrix(), &ix) * w3.transpose();
    let mut eig = linalg::sym_eigenvalues(&mat);
    eig.reverse();
    let gamma_w = eig.get(d_w.saturating_sub(1)).copied().unwrap_or(0.0);
    let tau_w = (2.0 * (2.0 * d_w as f64 / delta).ln()).sqrt();
    let w_norm = tensor_spectral_norm_ub(&w);
    let w2 = w_norm * w_norm;
    let threshold = if gamma_w > 0.0 { (w2 * tau_w / gamma_w).powi(2) } else { f64::INFINITY };
    let denom = (n as f64).sqrt() * gamma_w - w2 * tau_w;
    if !(denom > 0.0) {
        return Err(Error::SampleCountBelowThreshold { n, threshold });
    }
    Ok(ZetaPrediction {
        bound: (mm.nw() as f64).sqrt() * w2 / denom,
        gamma_w,
        tau_w,
        d_w,
        w_norm,
        threshold,
    })
}

/// Tests whether `𝓜 ×̄₂ z` has full column rank `n_w` at `z_probe` and at
/// `reps` random points of the unit ball. Structured models are tested on
/// their stochastic part.
pub fn noise_observable<R: Rng + ?Sized>(m: &ModeTensor, z_probe: &DVector<f64>, reps: usize, rng: &mut R) -> Result<bool> {
    let mm = if m.is_structured() { m.truncated()? } else { m.clone() };
    if mm.nx() < mm.nw() {
        return Ok(false);
    }
    let full = |z: &DVector<f64>| -> Result<bool> { Ok(rank(&mm.contract_z(z)?, SVD_TOL) == mm.nw()) };
    if !full(z_probe)? {
        return Ok(false);
    }
    for _ in 0..reps {
        let z = sample_unit_ball(mm.nz(), rng);
        if !full(&z)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Recovers `w_i = (𝓜 ×̄₂ z_i)⁺ x_{i+1}` from noise-observable data.
///
/// Structured models return the stochastic part `w̃_i`.
pub fn recover_disturbances(m: &ModeTensor, data: &Dataset) -> Result<Vec<DVector<f64>>> {
    let (mm, pairs) = regression_problem(m, data)?;
    let mut out = Vec::with_capacity(pairs.len());
    for (i, (z, y)) in pairs.iter().enumerate() {
        let c = mm.contract_z(z)?;
        let w = pinv(&c, SVD_TOL) * y;
        let residual = (&c * &w - y).norm();
        if residual > RECOVERY_TOL * y.norm().max(f64::MIN_POSITIVE) {
            return Err(Error::InconsistentMeasurement { index: i, residual });
        }
        if rank(&c, SVD_TOL) < mm.nw() {
            return Err(Error::NotObservable(i));
        }
        out.push(w);
    }
    Ok(out)
}

/// Mean estimate of a structured model together with its radius.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEstimate {
    /// `μ̂ = (Z^μ_N)⁺ Y^μ_N`.
    pub mu_hat: DVector<f64>,
    /// `β_μ = r_w ζ_μ (2 + √(2 ln(1/δ)))`.
    pub beta_mu: f64,
    /// `ζ_μ = √(Σ ‖Gᵢ‖₂²)`.
    pub zeta_mu: f64,
}

struct MeanNormal {
    mm: ModeTensor,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    zs: Vec<DVector<f64>>,
}

fn mean_normal(m: &ModeTensor, data: &Dataset) -> Result<MeanNormal> {
    if !m.is_structured() {
        return Err(Error::NotStructured);
    }
    let (mm, pairs) = regression_problem(m, data)?;
    let nz = mm.nz();
    if pairs.len() < nz {
        return Err(Error::InsufficientSamples { needed: nz, got: pairs.len() });
    }
    let mut szz = DMatrix::zeros(nz, nz);
    let mut rhs = DVector::zeros(mm.nw());
    let mut zs = Vec::with_capacity(pairs.len());
    for (z, y) in &pairs {
        szz.ger(1.0, z, z, 1.0);
        rhs += mm.contract_z(z)?.transpose() * y;
        zs.push(z.clone());
    }
    let r = rank(&szz, SVD_TOL);
    if r < nz {
        return Err(Error::RankDeficientData { rank: r, required: nz });
    }
    let m3 = mm.mode3_matrix();
    let ix = DMatrix::identity(mm.nx(), mm.nx());
    let gram = &m3 * linalg::kron(&szz, &ix) * m3.transpose();
    Ok(MeanNormal { mm, gram, rhs, zs })
}

/// Least-squares mean `μ̂` of `w̃` for a structured model.
pub fn ls_mean(m: &ModeTensor, data: &Dataset) -> Result<DVector<f64>> {
    let mn = mean_normal(m, data)?;
    Ok(pinv_psd(&mn.gram, SVD_TOL) * &mn.rhs)
}

/// `μ̂` with `β_μ` and `ζ_μ`, where `Gᵢ = (Σⱼ 𝓜(zⱼzⱼᵀ))⁺ 𝓜(zᵢzᵢᵀ)` and
/// `𝓜(Z) = 𝓜̃_(3)(Z ⊗ I)𝓜̃_(3)ᵀ`.
pub fn mean_ambiguity(m: &ModeTensor, data: &Dataset, delta: f64) -> Result<MeanEstimate> {
    check_delta(delta)?;
    let mn = mean_normal(m, data)?;
    let gp = pinv_psd(&mn.gram, SVD_TOL);
    let mu_hat = &gp * &mn.rhs;
    let norms: Vec<f64> = mn
        .zs
        .iter()
        .map(|z| {
            let c = mn.mm.contract_z(z).expect("length nz");
            projector_term_norm(&gp, &c)
        })
        .collect();
    let zeta_mu = norms.iter().map(|g| g * g).sum::<f64>().sqrt();
    let gammas: Vec<f64> = norms.iter().map(|g| g * data.r_w()).collect();
    let beta_mu = vector_hoeffding_radius(&gammas, delta)?;
    Ok(MeanEstimate { mu_hat, beta_mu, zeta_mu })
}

/// Structured ambiguity set: `μ̂, β_μ` at confidence `δ_μ` and `Ŵ̃, β_W` at `δ_W`,
/// with `Σ̂ = Ŵ̃ − μ̂μ̂ᵀ` and `β_Σ = β_W + β_μ(β_μ + 2‖μ̂‖)`.
/// The combined failure probability is `δ_μ + δ_W`.
pub fn structured_ambiguity(m: &ModeTensor, data: &Dataset, delta_mu: f64, delta_w: f64) -> Result<AmbiguitySet> {
    check_delta(delta_mu)?;
    check_delta(delta_w)?;
    let mean = mean_ambiguity(m, data, delta_mu)?;
    let second = second_moment_ambiguity(m, data, delta_w)?;
    let mu = &mean.mu_hat;
    let sigma_hat = &second.w_hat - &SymMat::outer(mu);
    let beta_sigma = second.beta_w + mean.beta_mu * (mean.beta_mu + 2.0 * mu.norm());
    Ok(AmbiguitySet {
        delta: delta_mu + delta_w,
        structured: Some(StructuredAmbiguity {
            mu_hat: mu.iter().copied().collect(),
            sigma_hat,
            beta_mu: mean.beta_mu,
            beta_sigma,
            zeta_mu: mean.zeta_mu,
            delta_mu,
            delta_w,
        }),
        ..second
    })
}

/// [`structured_ambiguity`] with the even split `δ_μ = δ_W = δ/2`.
pub fn structured_ambiguity_split(m: &ModeTensor, data: &Dataset, delta: f64) -> Result<AmbiguitySet> {
    check_delta(delta)?;
    structured_ambiguity(m, data, delta / 2.0, delta / 2.0)
}

/// `svec` of a symmetric matrix; re-exported for estimator checks.
pub fn svec_of(w: &SymMat) -> DVector<f64> {
    svec_matrix(w.as_matrix())
}
