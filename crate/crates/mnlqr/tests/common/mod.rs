//! Shared helpers for the integration tests.
#![allow(dead_code)]

use mnlqr::symm::SymMat;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for fixed-seed checks.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with entries uniform on `[-1, 1]`.
pub fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Vector with entries uniform on `[-1, 1]`.
pub fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random symmetric matrix.
pub fn rand_sym(d: usize, rng: &mut ChaCha8Rng) -> SymMat {
    SymMat::symmetrize(rand_mat(d, d, rng))
}

/// Random PSD matrix `G Gᵀ`.
pub fn rand_psd(d: usize, rng: &mut ChaCha8Rng) -> SymMat {
    let g = rand_mat(d, d, rng);
    SymMat::symmetrize(&g * g.transpose())
}

/// Largest absolute entrywise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    (a - b).amax()
}

/// Proptest strategy for an `r × c` matrix with entries in `[-2, 2]`.
pub fn mat_strategy(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

/// Proptest strategy for a symmetric `d × d` matrix.
pub fn sym_strategy(d: usize) -> impl Strategy<Value = SymMat> {
    mat_strategy(d, d).prop_map(SymMat::symmetrize)
}

/// Proptest strategy for a PSD `d × d` matrix.
pub fn psd_strategy(d: usize) -> impl Strategy<Value = SymMat> {
    mat_strategy(d, d).prop_map(|g| SymMat::symmetrize(&g * g.transpose()))
}

/// Proptest strategy for a vector of length `n`.
pub fn vec_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-2.0f64..2.0, n).prop_map(DVector::from_vec)
}
