//! Browser demo bindings.
//!
//! Each exported function takes plain numbers and returns a JSON string, so
//! the page needs no bundler or generated type definitions. The pure Rust
//! functions behind the exports are public for native testing.

use mnlqr::cpop::cp_from_modes;
use mnlqr::identify::{second_moment_ambiguity, AmbiguitySet};
use mnlqr::linalg::spectral_norm;
use mnlqr::simulate::{gen_repeated_init, SeededRng};
use mnlqr::symm::SymMat;
use mnlqr::synthesis::{dr_synthesize, relative_suboptimality, LqrSpec, RiccatiOptions};
use mnlqr::systems::{toy_modes, toy_moment, toy_sampler};
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Outcome of a robust synthesis on the toy system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    /// Whether a stabilizing controller was found.
    pub feasible: bool,
    /// Gain `K̄` (empty when infeasible).
    pub gain: Vec<f64>,
    /// Robust value `tr[P̄ X₀]`.
    pub value: f64,
    /// Relative suboptimality of `K̄` on the true system.
    pub rel_subopt: f64,
    /// Error message when infeasible.
    pub message: String,
}

/// Robust synthesis for the toy system with `Ŵ = W⋆`, radius `beta` and input weight `r`.
pub fn toy_synthesis(beta: f64, r: f64) -> SynthesisReport {
    let infeasible = |message: String| SynthesisReport { feasible: false, gain: Vec::new(), value: f64::NAN, rel_subopt: f64::NAN, message };
    let spec = match LqrSpec::new(SymMat::identity(2), SymMat::from_diagonal(&[r]), SymMat::identity(2)) {
        Ok(s) => s,
        Err(e) => return infeasible(e.to_string()),
    };
    let (m, w) = (toy_modes(), toy_moment());
    let amb = AmbiguitySet { w_hat: w.clone(), beta_w: beta, delta: 0.05, zeta_w: 0.0, certified: true, structured: None };
    let opts = RiccatiOptions::default();
    match dr_synthesize(&m, &amb, &spec, opts) {
        Ok(res) => {
            let rel_subopt = relative_suboptimality(&m, &w, &res.k, &spec, opts).unwrap_or(f64::INFINITY);
            SynthesisReport { feasible: true, gain: res.k.iter().copied().collect(), value: res.value, rel_subopt, message: String::new() }
        }
        Err(e) => infeasible(e.to_string()),
    }
}

/// Identification errors of the toy system at one sample count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationReport {
    /// Sample count.
    pub n: usize,
    /// `‖Ŵ − W⋆‖₂` per repeat.
    pub errors: Vec<f64>,
    /// Certified radius `β_W` per repeat.
    pub radii: Vec<f64>,
    /// Median error.
    pub median_error: f64,
    /// Median radius.
    pub median_radius: f64,
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Repeated-initialization identification of the toy system, `repeats` times with `n` samples.
pub fn toy_identification(n: usize, repeats: usize, seed: u64, delta: f64) -> Result<IdentificationReport, String> {
    let (m, w) = (toy_modes(), toy_moment());
    let sampler = toy_sampler();
    let mut errors = Vec::with_capacity(repeats);
    let mut radii = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let mut rng = SeededRng::new(seed, rep as u64);
        let data = gen_repeated_init(&m, &sampler, 1.0, n, &mut rng).map_err(|e| e.to_string())?;
        let amb = second_moment_ambiguity(&m, &data, delta).map_err(|e| e.to_string())?;
        errors.push(spectral_norm(&(amb.w_hat.as_matrix() - w.as_matrix())));
        radii.push(amb.beta_w);
    }
    Ok(IdentificationReport { n, median_error: median(&errors), median_radius: median(&radii), errors, radii })
}

/// Mean-square stability radius `ρ(𝓔)` of `x⁺ = Σᵢ wᵢ Aᵢ x` with unit-variance
/// independent `wᵢ`; `entries` lists the 2×2 modes row by row.
pub fn mode_spectral_radius(entries: &[f64]) -> Result<f64, String> {
    if entries.is_empty() || entries.len() % 4 != 0 {
        return Err("expected a nonempty list of 2x2 matrices (4 entries each)".into());
    }
    let modes: Vec<DMatrix<f64>> = entries.chunks(4).map(|c| DMatrix::from_row_slice(2, 2, c)).collect();
    cp_from_modes(&modes).and_then(|op| op.spectral_radius()).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(value: &Result<T, String>) -> String {
    match value {
        Ok(v) => serde_json::json!({ "ok": true, "result": v }).to_string(),
        Err(e) => serde_json::json!({ "ok": false, "error": e }).to_string(),
    }
}

/// JSON form of [`toy_synthesis`].
#[wasm_bindgen(js_name = toySynthesis)]
pub fn toy_synthesis_json(beta: f64, r: f64) -> String {
    to_json(&Ok(toy_synthesis(beta, r)))
}

/// JSON form of [`toy_identification`] with `δ = 0.05`.
#[wasm_bindgen(js_name = toyIdentification)]
pub fn toy_identification_json(n: u32, repeats: u32, seed: u32) -> String {
    to_json(&toy_identification(n as usize, repeats as usize, u64::from(seed), 0.05))
}

/// JSON form of [`mode_spectral_radius`].
#[wasm_bindgen(js_name = modeSpectralRadius)]
pub fn mode_spectral_radius_json(entries: &[f64]) -> String {
    to_json(&mode_spectral_radius(entries))
}
