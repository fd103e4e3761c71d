//! Hoeffding-type concentration radii.
//!
//! * Matrix Hoeffding: for independent zero-mean symmetric `d × d` matrices
//!   `Yᵢ` with `Yᵢ² ⪯ γᵢ² I`, `P[‖Σ Yᵢ‖₂ ≥ β] ≤ 2d exp(-β²/(2‖γ‖₂²))`.
//! * Vector Hoeffding: for independent zero-mean vectors with `‖yᵢ‖ ≤ γᵢ`,
//!   `P[‖Σ yᵢ‖ ≥ 2‖γ‖₂ + β] ≤ exp(-β²/(2‖γ‖₂²))`.
//! * Direct samples: the empirical second moment of `N` vectors with norm
//!   at most `r_w` lies within `r_w² √(2 ln(2 n_w/δ)/N)` of the truth.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::symm::SymMat;

/// Confidence level together with the ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    delta: f64,
    dimension: usize,
}

impl ConfidenceSpec {
    /// Validates `0 < delta < 1`.
    pub fn new(delta: f64, dimension: usize) -> Result<Self> {
        check_delta(delta)?;
        Ok(ConfidenceSpec { delta, dimension })
    }

    /// Failure probability.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Dimension.
    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Rejects probabilities outside the open unit interval.
pub fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

fn gamma_norm(gammas: &[f64]) -> Result<f64> {
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidArgument("per-term bounds must be nonnegative".into()));
    }
    Ok(gammas.iter().map(|g| g * g).sum::<f64>().sqrt())
}

/// Two-sided matrix Hoeffding radius `‖γ‖₂ √(2 ln(2d/δ))`.
pub fn matrix_hoeffding_radius(gammas: &[f64], d: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    Ok(gamma_norm(gammas)? * (2.0 * (2.0 * d as f64 / delta).ln()).sqrt())
}

/// Vector Hoeffding radius `‖γ‖₂ (2 + √(2 ln(1/δ)))`.
pub fn vector_hoeffding_radius(gammas: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(gamma_norm(gammas)? * (2.0 + (2.0 * (1.0 / delta).ln()).sqrt()))
}

/// Empirical second moment of direct disturbance samples and its radius.
///
/// Returns `(Ŵ, β)` with `Ŵ = (1/N) Σ wᵢ wᵢᵀ` and
/// `β = r_w² √(2 ln(2 n_w/δ)/N)`. Every sample must satisfy `‖wᵢ‖ ≤ r_w`.
pub fn direct_moment_bound(samples: &[DVector<f64>], r_w: f64, delta: f64) -> Result<(SymMat, f64)> {
    check_delta(delta)?;
    let first = samples.first().ok_or(Error::EmptyInput)?;
    let nw = first.len();
    let mut acc = DMatrix::zeros(nw, nw);
    for (i, w) in samples.iter().enumerate() {
        if w.len() != nw {
            return Err(Error::DimensionMismatch(format!("sample {i} has length {}, expected {nw}", w.len())));
        }
        let norm = w.norm();
        if norm > r_w * (1.0 + 1e-12) {
            return Err(Error::NormBoundViolated { index: i, norm, bound: r_w });
        }
        acc.ger(1.0, w, w, 1.0);
    }
    let n = samples.len() as f64;
    let w_hat = SymMat::symmetrize(acc / n);
    let beta = r_w * r_w * (2.0 * (2.0 * nw as f64 / delta).ln() / n).sqrt();
    Ok((w_hat, beta))
}
