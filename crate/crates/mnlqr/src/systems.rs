//! Reference systems used by the experiments, tests and demos.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::model::ModeTensor;
use crate::simulate::DisturbanceSampler;
use crate::symm::SymMat;
use crate::synthesis::LqrSpec;

/// Three-mode system with `n_x = 2`, `n_u = 1`:
/// `A₁ = e₁e₁ᵀ`, `A₂ = e₁e₂ᵀ`, `A₃ = e₂e₂ᵀ`, `B₃ = e₂`, `B₁ = B₂ = 0`.
pub fn toy_modes() -> ModeTensor {
    let a = [
        dmatrix![1.0, 0.0; 0.0, 0.0],
        dmatrix![0.0, 1.0; 0.0, 0.0],
        dmatrix![0.0, 0.0; 0.0, 1.0],
    ];
    let b = [dmatrix![0.0; 0.0], dmatrix![0.0; 0.0], dmatrix![0.0; 1.0]];
    ModeTensor::from_modes(&a, &b, false).expect("consistent shapes")
}

/// Disturbance of the toy system: uniform on the ball of radius 0.25 around `(0, 0, 0.1)`.
pub fn toy_sampler() -> DisturbanceSampler {
    DisturbanceSampler::uniform_ball(dvector![0.0, 0.0, 0.1], 0.25).expect("valid radius")
}

/// `W⋆ = 0.0125 I + μμᵀ = diag(0.0125, 0.0125, 0.0225)` of the toy system.
pub fn toy_moment() -> SymMat {
    toy_sampler().second_moment()
}

/// Norm bound `r_w = ‖μ‖ + r = 0.35` of the toy disturbance.
pub const TOY_R_W: f64 = 0.35;

/// LQR weights `Q = I₂`, `R = 10`, `X₀ = I₂` used with the toy system.
pub fn toy_lqr() -> LqrSpec {
    LqrSpec::new(SymMat::identity(2), SymMat::from_diagonal(&[10.0]), SymMat::identity(2)).expect("valid weights")
}

/// Initial state of the toy rollouts.
pub fn toy_rollout_x0() -> DVector<f64> {
    dvector![1.0, 1.0]
}

/// Excitation gain `[−0.5, −0.2]` of the toy rollouts.
pub fn toy_rollout_gain() -> DMatrix<f64> {
    dmatrix![-0.5, -0.2]
}

/// Worked example with `A₁ = [[2,0],[1,0]]`, `A₂ = [[0,3],[0,0]]`,
/// `A₃ = [[0,0],[0,1]]`, `B₃ = (0, 2)`, `B₁ = B₂ = 0`.
pub fn example_modes() -> ModeTensor {
    let a = [
        dmatrix![2.0, 0.0; 1.0, 0.0],
        dmatrix![0.0, 3.0; 0.0, 0.0],
        dmatrix![0.0, 0.0; 0.0, 1.0],
    ];
    let b = [dmatrix![0.0; 0.0], dmatrix![0.0; 0.0], dmatrix![0.0; 2.0]];
    ModeTensor::from_modes(&a, &b, false).expect("consistent shapes")
}

/// The worked example with the top-left entry of `A₁` set to zero, which
/// no longer spans the true modes.
pub fn example_modes_corrupted() -> ModeTensor {
    let mut m3 = example_modes().mode3_matrix();
    m3[(0, 0)] = 0.0;
    ModeTensor::from_mode3_matrix(2, 1, &m3, false).expect("consistent shapes")
}

/// Structured example: known `A₁ = [[1, 0.02], [0, 0.992]]`, `B₁ = (0, 0.02)`
/// and stochastic modes `A₂ = [[0,0],[0,−0.03]]`, `A₃ = [[0,−0.03],[0,0]]`,
/// `B₄ = (0, 0.01)`; all other blocks are zero.
pub fn structured_modes() -> ModeTensor {
    let z2 = DMatrix::zeros(2, 2);
    let z1 = DMatrix::zeros(2, 1);
    let a = [
        dmatrix![1.0, 0.02; 0.0, 0.992],
        dmatrix![0.0, 0.0; 0.0, -0.03],
        dmatrix![0.0, -0.03; 0.0, 0.0],
        z2,
    ];
    let b = [dmatrix![0.0; 0.02], z1.clone(), z1, dmatrix![0.0; 0.01]];
    ModeTensor::from_modes(&a, &b, true).expect("consistent shapes")
}

/// Disturbance `w̃` of the structured example: uniform on the ball of radius 0.05 around 0.
pub fn structured_sampler() -> DisturbanceSampler {
    DisturbanceSampler::uniform_ball(DVector::zeros(3), 0.05).expect("valid radius")
}

/// Full second moment `E[w wᵀ]`, `w = (1, w̃)`, of the structured example.
pub fn structured_moment() -> SymMat {
    let s = structured_sampler();
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = 1.0;
    m.view_mut((1, 1), (3, 3)).copy_from(s.second_moment().as_matrix());
    SymMat::symmetrize(m)
}

/// Deterministic double integrator `A = [[1, 0.1], [0, 1]]`, `B = (0, 0.1)`.
pub fn double_integrator() -> ModeTensor {
    ModeTensor::from_modes(&[dmatrix![1.0, 0.1; 0.0, 1.0]], &[dmatrix![0.0; 0.1]], false).expect("consistent shapes")
}

/// Weights `H = diag(1, 1, 0.1)` of the double integrator example.
pub fn double_integrator_lqr() -> LqrSpec {
    LqrSpec::new(SymMat::identity(2), SymMat::from_diagonal(&[0.1]), SymMat::identity(2)).expect("valid weights")
}
