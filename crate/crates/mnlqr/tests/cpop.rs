mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use common::*;
use mnlqr::cpop::*;
use mnlqr::linalg::spectral_radius as mat_spectral_radius;
use mnlqr::symm::{svec, SymMat};
use mnlqr::systems::example_modes;
use mnlqr::tensor::{mode_product, Tensor3};
use mnlqr::Error;
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use rand::Rng;

/// Symmetrization matrix built entry by entry from the `svec` layout
/// (column-major lower triangle, off-diagonals weighted by `1/√2`).
fn q_oracle(d: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(d * (d + 1) / 2, d * d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            if i == j {
                q[(k, i + d * i)] = 1.0;
            } else {
                q[(k, i + d * j)] = FRAC_1_SQRT_2;
                q[(k, j + d * i)] = FRAC_1_SQRT_2;
            }
            k += 1;
        }
    }
    q
}

fn direct_sum(modes: &[DMatrix<f64>], x: &SymMat) -> DMatrix<f64> {
    modes.iter().map(|a| a * x.as_matrix() * a.transpose()).fold(DMatrix::zeros(modes[0].nrows(), modes[0].nrows()), |s, t| s + t)
}

fn random_tensor(q: [usize; 3], seed: u64) -> Tensor3 {
    let mut r = rng(seed);
    Tensor3::from_fn(q[0], q[1], q[2], |_, _, _| r.random_range(-1.0..1.0))
}

/// Random square modes scaled so that the induced operator has spectral radius `target`.
fn stable_modes(n: usize, count: usize, target: f64, seed: u64) -> Vec<DMatrix<f64>> {
    let mut r = rng(seed);
    let modes: Vec<_> = (0..count).map(|_| rand_mat(n, n, &mut r)).collect();
    let rho = cp_from_modes(&modes).unwrap().spectral_radius().unwrap();
    let s = (target / rho).sqrt();
    modes.into_iter().map(|a| a * s).collect()
}

#[test]
fn single_identity_mode_is_identity() {
    let op = cp_from_modes(&[DMatrix::identity(3, 3)]).unwrap();
    assert!(max_abs_diff(op.op_matrix(), &DMatrix::identity(6, 6)) <= 1e-15);
    assert_eq!(cp_from_modes(&[]).unwrap_err(), Error::EmptyModeList);
    assert!(matches!(cp_from_modes(&[DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]), Err(Error::ShapeMismatch(_))));
}

#[test]
fn example_modes_with_zero_input() {
    let a = [dmatrix![2.0, 0.0; 1.0, 0.0], dmatrix![0.0, 3.0; 0.0, 0.0], dmatrix![0.0, 0.0; 0.0, 1.0]];
    let op = cp_from_modes(&a).unwrap();
    let x = SymMat::outer(&nalgebra::dvector![0.7, -1.3]);
    assert!(max_abs_diff(op.apply(&x).unwrap().as_matrix(), &direct_sum(&a, &x)) <= 1e-12);
}

#[test]
fn modes_agree_with_direct_summation() {
    let mut r = rng(11);
    for _ in 0..20 {
        let modes: Vec<_> = (0..3).map(|_| rand_mat(3, 4, &mut r)).collect();
        let x = rand_sym(4, &mut r);
        let op = cp_from_modes(&modes).unwrap();
        assert!(max_abs_diff(op.apply(&x).unwrap().as_matrix(), &direct_sum(&modes, &x)) <= 1e-12);
    }
}

#[test]
fn tensor_with_one_slice_matches_modes() {
    let mut r = rng(12);
    let a = rand_mat(2, 3, &mut r);
    let t = Tensor3::from_frontal_slices(&[a.clone()]).unwrap();
    let from_t = cp_from_tensor(&t, &SymMat::identity(1)).unwrap();
    let from_m = cp_from_modes(&[a]).unwrap();
    assert!(max_abs_diff(from_t.op_matrix(), from_m.op_matrix()) <= 1e-15);
}

#[test]
fn example_operator_matrix() {
    let kron_sum = dmatrix![
        4.0, 0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0;
        2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
        2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
        1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 2.0, 4.0
    ];
    let expected = q_oracle(2) * kron_sum * q_oracle(3).transpose();
    let op = cp_from_tensor(example_modes().tensor(), &SymMat::identity(3)).unwrap();
    assert!(max_abs_diff(op.op_matrix(), &expected) <= 1e-12);
}

#[test]
fn factorized_parameter_check() {
    let mut r = rng(13);
    for seed in 0..10 {
        let t = random_tensor([3, 2, 4], 100 + seed);
        let c = rand_mat(4, 4, &mut r);
        let w = SymMat::symmetrize(&c * c.transpose());
        let reduced = mode_product(&t, &c.transpose(), 3).unwrap();
        let op = cp_from_tensor(&t, &w).unwrap();
        let via_modes = cp_from_modes(&reduced.frontal_slices()).unwrap();
        let x = rand_sym(2, &mut r);
        let diff = max_abs_diff(op.apply(&x).unwrap().as_matrix(), via_modes.apply(&x).unwrap().as_matrix());
        assert!(diff <= 1e-11);
    }
}

#[test]
fn cp_from_tensor_rejects_indefinite_parameter() {
    let t = random_tensor([2, 2, 2], 1);
    let w = SymMat::from_diagonal(&[1.0, -0.1]);
    assert!(matches!(cp_from_tensor(&t, &w), Err(Error::NotPsd { .. })));
    assert!(matches!(cp_from_tensor(&t, &SymMat::identity(3)), Err(Error::ShapeMismatch(_))));
}

#[test]
fn identity_operator_examples() {
    let mut r = rng(14);
    let id = CpOperator::identity(3);
    let x = rand_sym(3, &mut r);
    assert!(max_abs_diff(id.apply(&x).unwrap().as_matrix(), x.as_matrix()) <= 1e-15);
    assert!(max_abs_diff(id.adjoint_apply(&x).unwrap().as_matrix(), x.as_matrix()) <= 1e-15);
    assert!((id.op_norm().unwrap() - 1.0).abs() <= 1e-15);
    assert!((id.op_norm_bound() - 3f64.sqrt()).abs() <= 1e-12);
    assert!((id.spectral_radius().unwrap() - 1.0).abs() <= 1e-12);
    assert!(!is_mss(&id, STAB_TOL).unwrap());
    assert!(matches!(id.apply(&SymMat::identity(2)), Err(Error::ShapeMismatch(_))));
}

#[test]
fn tensor_adjoint_matches_second_matricization() {
    let mut r = rng(15);
    for seed in 0..5 {
        let t = random_tensor([3, 2, 3], 200 + seed);
        let w = rand_psd(3, &mut r);
        let p = rand_sym(3, &mut r);
        let op = cp_from_tensor(&t, &w).unwrap();
        let direct = tensor_adjoint_direct(&t, &w, &p).unwrap();
        assert!(max_abs_diff(op.adjoint_apply(&p).unwrap().as_matrix(), direct.as_matrix()) <= 1e-12);
        let x = rand_sym(2, &mut r);
        let fwd = tensor_apply_direct(&t, &w, &x).unwrap();
        assert!(max_abs_diff(op.apply(&x).unwrap().as_matrix(), fwd.as_matrix()) <= 1e-12);
    }
}

#[test]
fn op_norm_examples() {
    let op = cp_from_modes(&[dmatrix![2.0, 0.0; 0.0, 1.0]]).unwrap();
    assert!((op.op_norm().unwrap() - 4.0).abs() <= 1e-12);
    let raw = CpOperator::from_matrix(2, 2, DMatrix::identity(3, 3)).unwrap();
    assert_eq!(raw.op_norm().unwrap_err(), Error::NotCpConstructed);
    assert!(matches!(CpOperator::from_matrix(2, 2, DMatrix::identity(4, 4)), Err(Error::ShapeMismatch(_))));
}

#[test]
fn op_norm_bounds_sampled_gains() {
    let mut r = rng(16);
    let t = random_tensor([3, 3, 3], 17);
    let op = cp_from_tensor(&t, &rand_psd(3, &mut r)).unwrap();
    let norm = op.op_norm().unwrap();
    assert!(norm <= op.op_norm_bound() + 1e-12);
    for _ in 0..100 {
        let x = rand_sym(3, &mut r);
        let x = x.scale(1.0 / x.norm2());
        assert!(op.apply(&x).unwrap().norm2() <= norm * (1.0 + 1e-12));
    }
}

#[test]
fn spectral_radius_examples() {
    let op = cp_from_modes(&[dmatrix![0.5]]).unwrap();
    assert!((op.spectral_radius().unwrap() - 0.25).abs() <= 1e-15);
    let rect = cp_from_modes(&[DMatrix::zeros(2, 3)]).unwrap();
    assert_eq!(rect.spectral_radius().unwrap_err(), Error::NotSquare { in_dim: 3, out_dim: 2 });
    assert!(is_mss(&cp_from_modes(&[dmatrix![0.9]]).unwrap(), STAB_TOL).unwrap());
}

#[test]
fn stable_operator_iterates_decay() {
    let mut r = rng(18);
    for seed in 0..5 {
        let op = cp_from_modes(&stable_modes(3, 3, 0.7, 300 + seed)).unwrap();
        let x0 = rand_psd(3, &mut r);
        let mut x = x0.clone();
        for _ in 0..50 {
            x = op.apply(&x).unwrap();
        }
        assert!(x.norm_fro() <= 1e-6 * x0.norm_fro());
    }
}

#[test]
fn outer_spectral_radius_examples() {
    let a = dmatrix![0.5, 1.0; 0.0, -0.8];
    assert!((outer_spectral_radius(&[a.clone()]).unwrap() - mat_spectral_radius(&a)).abs() <= 1e-10);
    let mut r = rng(19);
    for _ in 0..10 {
        let modes: Vec<_> = (0..3).map(|_| rand_mat(3, 3, &mut r)).collect();
        let rho_hat = outer_spectral_radius(&modes).unwrap();
        let rho_op = cp_from_modes(&modes).unwrap().spectral_radius().unwrap();
        assert!((rho_hat * rho_hat - rho_op).abs() <= 1e-10 * (1.0 + rho_op));
    }
    assert!(matches!(outer_spectral_radius(&[DMatrix::zeros(2, 3)]), Err(Error::ShapeMismatch(_))));
}

#[test]
fn switching_products_grow_no_faster_than_outer_radius() {
    let mut r = rng(20);
    for seed in 0..3 {
        let modes: Vec<_> = (0..3).map(|_| rand_mat(3, 3, &mut r)).collect();
        let rho_hat = outer_spectral_radius(&modes).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let mut prod = DMatrix::identity(3, 3);
            for _ in 0..20 {
                prod = &modes[r.random_range(0..modes.len())] * prod;
            }
            worst = worst.max(mat_spectral_radius(&prod).powf(1.0 / 20.0));
        }
        assert!(worst <= rho_hat + 1e-9, "seed {seed}: {worst} > {rho_hat}");
    }
}

#[test]
fn lyapunov_examples() {
    let zero = CpOperator::zero(2, 2);
    let h = SymMat::from_diagonal(&[2.0, 3.0]);
    assert!(max_abs_diff(lyapunov_solve(&zero, &h).unwrap().as_matrix(), h.as_matrix()) <= 1e-15);
    let scalar = cp_from_modes(&[dmatrix![0.5]]).unwrap();
    let p = lyapunov_solve(&scalar, &SymMat::identity(1)).unwrap();
    assert!((p.get(0, 0) - 4.0 / 3.0).abs() <= 1e-14);
    let unstable = cp_from_modes(&[dmatrix![1.1]]).unwrap();
    assert!(matches!(lyapunov_solve(&unstable, &SymMat::identity(1)), Err(Error::Unstable(_))));
    assert!(matches!(lyapunov_solve(&scalar, &SymMat::zeros(1)), Err(Error::NotPd { .. })));
}

#[test]
fn lyapunov_trace_identity_against_truncated_series() {
    let mut r = rng(21);
    for seed in 0..5 {
        let op = cp_from_modes(&stable_modes(3, 2, 0.8, 400 + seed)).unwrap();
        let h = SymMat::symmetrize(rand_psd(3, &mut r).into_matrix() + DMatrix::identity(3, 3));
        let p = lyapunov_solve(&op, &h).unwrap();
        let x = rand_psd(3, &mut r);
        let mut series = 0.0;
        let mut xt = x.clone();
        for _ in 0..200 {
            series += h.inner(&xt);
            xt = op.apply(&xt).unwrap();
        }
        let lhs = p.inner(&x);
        assert!((lhs - series).abs() <= 1e-8 * lhs.abs());
        assert!(p.is_psd(0.0));
    }
}

#[test]
fn mean_square_decay_of_simulated_trajectories() {
    let modes = stable_modes(2, 3, 0.8, 500);
    let op = cp_from_modes(&modes).unwrap();
    assert!(op.spectral_radius().unwrap() <= 0.8 + 1e-12);
    assert!(is_mss(&op, STAB_TOL).unwrap());
    let mut r = rng(22);
    let x0 = nalgebra::dvector![1.0, -1.0];
    let mut second = DMatrix::zeros(2, 2);
    for _ in 0..1000 {
        let mut x = x0.clone();
        for _ in 0..50 {
            let mut next = nalgebra::DVector::zeros(2);
            for a in &modes {
                let s = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                next += a * &x * s;
            }
            x = next;
        }
        second += &x * x.transpose() / 1000.0;
    }
    assert!(second.norm() <= 1e-2 * (&x0 * x0.transpose()).norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_duality(modes in prop::collection::vec(mat_strategy(3, 2), 1..4), x in sym_strategy(2), p in sym_strategy(3)) {
        let op = cp_from_modes(&modes).unwrap();
        let lhs = op.apply(&x).unwrap().inner(&p);
        let rhs = x.inner(&op.adjoint_apply(&p).unwrap());
        let scale = 1.0 + op.op_matrix().norm() * x.norm_fro() * p.norm_fro();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn cp_monotone_in_parameter(g in mat_strategy(3, 3), d in mat_strategy(3, 3), seed in 0u64..1000, x in psd_strategy(2)) {
        let t = random_tensor([2, 2, 3], seed);
        let w = SymMat::symmetrize(&g * g.transpose());
        let w_bar = SymMat::symmetrize(w.as_matrix() + &d * d.transpose());
        let lo = cp_from_tensor(&t, &w).unwrap().apply(&x).unwrap();
        let hi = cp_from_tensor(&t, &w_bar).unwrap().apply(&x).unwrap();
        let gap = SymMat::symmetrize(hi.as_matrix() - lo.as_matrix());
        prop_assert!(gap.eigmin() >= -1e-10 * (1.0 + hi.norm2()));
    }

    #[test]
    fn cp_preserves_psd(modes in prop::collection::vec(mat_strategy(3, 3), 1..4), x in psd_strategy(3)) {
        let y = cp_from_modes(&modes).unwrap().apply(&x).unwrap();
        prop_assert!(y.eigmin() >= -1e-10 * (1.0 + y.norm2()));
    }

    #[test]
    fn lyapunov_residual(seed in 0u64..10_000, h in psd_strategy(3)) {
        let op = cp_from_modes(&stable_modes(3, 3, 0.9, seed)).unwrap();
        let h = SymMat::symmetrize(h.into_matrix() + DMatrix::identity(3, 3));
        let p = lyapunov_solve(&op, &h).unwrap();
        let resid = p.as_matrix() - op.adjoint_apply(&p).unwrap().as_matrix() - h.as_matrix();
        prop_assert!(resid.norm() <= 1e-9 * h.norm_fro());
    }

    #[test]
    fn apply_matches_svec_representation(modes in prop::collection::vec(mat_strategy(2, 3), 1..3), x in sym_strategy(3)) {
        let op = cp_from_modes(&modes).unwrap();
        let via = op.op_matrix() * svec(&x).into_data();
        let direct = svec(&op.apply(&x).unwrap()).into_data();
        prop_assert!((via - direct).amax() <= 1e-12 * (1.0 + x.norm_fro()));
    }
}
