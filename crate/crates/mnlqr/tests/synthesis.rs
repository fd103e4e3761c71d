mod common;

use common::*;
use mnlqr::identify::AmbiguitySet;
use mnlqr::model::{adjoint_blocks, closed_loop, pi_k_adjoint, ModeTensor};
use mnlqr::symm::SymMat;
use mnlqr::synthesis::*;
use mnlqr::systems::*;
use mnlqr::tensor::Tensor3;
use mnlqr::Error;
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use rand::Rng;

/// Relative suboptimality of the controller synthesized from `Ŵ = 0`, `β = r_w²`.
const TOY_TRIVIAL_SUBOPT: f64 = 8.84899e-4;

fn opts() -> RiccatiOptions {
    RiccatiOptions::default()
}

fn amb(w_hat: SymMat, beta_w: f64) -> AmbiguitySet {
    AmbiguitySet { w_hat, beta_w, delta: 0.05, zeta_w: 0.0, certified: true, structured: None }
}

fn random_model(nx: usize, nu: usize, nw: usize, scale: f64, seed: u64) -> ModeTensor {
    let mut r = rng(seed);
    let t = Tensor3::from_fn(nx, nx + nu, nw, |_, _, _| scale * r.random_range(-1.0..1.0));
    ModeTensor::new(nx, nu, t, false).unwrap()
}

fn classical_riccati(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let inner = r + b.transpose() * p * b;
    let gain = inner.try_inverse().unwrap() * b.transpose() * p * a;
    q + a.transpose() * p * a - a.transpose() * p * b * gain
}

#[test]
fn riccati_map_reduces_to_classical_form() {
    let mut r = rng(1);
    let (a, b) = (rand_mat(3, 3, &mut r), rand_mat(3, 2, &mut r));
    let m = ModeTensor::from_modes(&[a.clone()], &[b.clone()], false).unwrap();
    let spec = LqrSpec::new(SymMat::identity(3), SymMat::from_diagonal(&[0.5, 2.0]), SymMat::identity(3)).unwrap();
    let p = rand_psd(3, &mut r);
    let ours = riccati_apply(&m, &SymMat::identity(1), &spec, &p).unwrap();
    let expected = classical_riccati(&a, &b, spec.q().as_matrix(), spec.r().as_matrix(), p.as_matrix());
    assert!(max_abs_diff(ours.as_matrix(), &expected) <= 1e-11);
    let at_zero = riccati_apply(&m, &SymMat::identity(1), &spec, &SymMat::zeros(3)).unwrap();
    assert!(max_abs_diff(at_zero.as_matrix(), spec.q().as_matrix()) <= 1e-15);
}

/// Gain of the double integrator from a discrete algebraic Riccati solver
/// (Schur method), frozen to ten digits.
const DOUBLE_INTEGRATOR_GAIN: [f64; 2] = [-2.585_307_258_2, -3.574_717_100_4];

#[test]
fn double_integrator_gain() {
    let res = riccati_fixed_point(&double_integrator(), &SymMat::identity(1), &double_integrator_lqr(), opts()).unwrap();
    let (a, b) = (dmatrix![1.0, 0.1; 0.0, 1.0], dmatrix![0.0; 0.1]);
    let (q, r) = (DMatrix::identity(2, 2), dmatrix![0.1]);
    let mut p = q.clone();
    for _ in 0..5000 {
        p = classical_riccati(&a, &b, &q, &r, &p);
    }
    let k_oracle = -(&r + b.transpose() * &p * &b).try_inverse().unwrap() * b.transpose() * &p * &a;
    assert!((&res.k - &k_oracle).amax() <= 1e-8, "K = {}", res.k);
    assert!((&res.k - dmatrix![DOUBLE_INTEGRATOR_GAIN[0], DOUBLE_INTEGRATOR_GAIN[1]]).amax() <= 1e-9);
    assert!(res.rho_closed_loop < 1.0);
    assert!(res.p.eigmin() > 0.0);
}

#[test]
fn zero_moment_gives_stage_cost() {
    let spec = toy_lqr();
    let res = riccati_fixed_point(&toy_modes(), &SymMat::zeros(3), &spec, opts()).unwrap();
    assert!(max_abs_diff(res.p.as_matrix(), spec.q().as_matrix()) <= 1e-14);
    assert!(res.k.amax() <= 1e-14);
}

#[test]
fn fixed_point_residual_and_first_order_condition() {
    let spec = toy_lqr();
    let w = toy_moment();
    let m = toy_modes();
    let res = riccati_fixed_point(&m, &w, &spec, opts()).unwrap();
    let again = riccati_apply(&m, &w, &spec, &res.p).unwrap();
    assert!((again.as_matrix() - res.p.as_matrix()).norm() <= 10.0 * opts().tol * res.p.norm_fro());
    let b = adjoint_blocks(&m, &w, &res.p).unwrap();
    let foc = (spec.r().as_matrix() + b.g.as_matrix()) * &res.k + &b.h;
    assert!(foc.norm() <= 1e-9 * (1.0 + b.h.norm()));
    assert!((res.value - res.p.inner(spec.x0())).abs() <= 1e-15);
}

#[test]
fn value_iteration_is_nondecreasing() {
    let spec = toy_lqr();
    let (m, w) = (toy_modes(), toy_moment());
    let mut p = SymMat::zeros(2);
    for _ in 0..200 {
        let next = riccati_apply(&m, &w, &spec, &p).unwrap();
        let gap = SymMat::symmetrize(next.as_matrix() - p.as_matrix());
        assert!(gap.eigmin() >= -1e-10 * (1.0 + next.norm2()));
        p = next;
    }
}

#[test]
fn dr_with_zero_radius_is_certainty_equivalent() {
    let (m, spec) = (toy_modes(), toy_lqr());
    let w_hat = SymMat::from_diagonal(&[0.013, 0.012, 0.021]);
    let dr = dr_synthesize(&m, &amb(w_hat.clone(), 0.0), &spec, opts()).unwrap();
    let ce = riccati_fixed_point(&m, &w_hat, &spec, opts()).unwrap();
    assert_eq!(dr, ce);
    let ce2 = ce_synthesize(&m, &amb(w_hat, 0.3), &spec, opts()).unwrap();
    assert_eq!(ce2, ce);
}

#[test]
fn trivial_ambiguity_controller() {
    let (m, spec) = (toy_modes(), toy_lqr());
    let trivial = AmbiguitySet::trivial(3, TOY_R_W, 0.05);
    let res = dr_synthesize(&m, &trivial, &spec, opts()).unwrap();
    let subopt = relative_suboptimality(&m, &toy_moment(), &res.k, &spec, opts()).unwrap();
    assert!((subopt - TOY_TRIVIAL_SUBOPT).abs() <= 1e-8, "suboptimality {subopt:e}");
}

#[test]
fn dr_gain_stabilizes_the_whole_interval() {
    let (m, spec) = (toy_modes(), toy_lqr());
    let set = amb(toy_moment(), 0.05);
    let res = dr_synthesize(&m, &set, &spec, opts()).unwrap();
    let mut r = rng(2);
    let (lo, hi) = (set.w_lower(), set.w_upper());
    let mut checked = 0;
    while checked < 20 {
        let t: f64 = r.random_range(0.0..1.0);
        let noise = rand_sym(3, &mut r).scale(0.02);
        let w = SymMat::symmetrize(lo.as_matrix() * (1.0 - t) + hi.as_matrix() * t + noise.as_matrix());
        let inside = SymMat::symmetrize(hi.as_matrix() - w.as_matrix()).eigmin() >= 0.0
            && SymMat::symmetrize(w.as_matrix() - lo.as_matrix()).eigmin() >= 0.0;
        if !inside || !w.is_psd(0.0) {
            continue;
        }
        checked += 1;
        assert!(closed_loop(&m, &w, &res.k).unwrap().spectral_radius().unwrap() < 1.0);
        let cost = closed_loop_cost(&m, &w, &res.k, &spec).unwrap();
        assert!(cost <= res.value * (1.0 + 1e-9));
    }
    let nominal = riccati_fixed_point(&m, &toy_moment(), &spec, opts()).unwrap();
    assert!(res.value >= nominal.value);
}

#[test]
fn dr_synthesis_errors() {
    let (m, spec) = (toy_modes(), toy_lqr());
    let indefinite = amb(SymMat::from_diagonal(&[0.01, 0.01, -0.5]), 0.1);
    assert!(matches!(dr_synthesize(&m, &indefinite, &spec, opts()), Err(Error::WBarNotPsd(_))));
    let huge = amb(SymMat::zeros(3), 5.0);
    assert!(matches!(dr_synthesize(&m, &huge, &spec, opts()), Err(Error::Diverged { .. })));
    let few = RiccatiOptions { max_iter: 2, ..opts() };
    assert!(matches!(riccati_fixed_point(&m, &toy_moment(), &spec, few), Err(Error::NotConverged { max_iter: 2, .. })));
    assert!(matches!(dr_synthesize(&m, &amb(SymMat::zeros(2), 0.1), &spec, opts()), Err(Error::DimensionMismatch(_))));
}

#[test]
fn cost_of_optimal_gain_equals_value() {
    let (m, spec, w) = (toy_modes(), toy_lqr(), toy_moment());
    let res = riccati_fixed_point(&m, &w, &spec, opts()).unwrap();
    let cost = closed_loop_cost(&m, &w, &res.k, &spec).unwrap();
    assert!((cost - res.value).abs() <= 1e-8 * res.value);
    assert!(relative_suboptimality_to(&m, &w, &res.k, &spec, &res).unwrap().abs() <= 1e-9);
}

#[test]
fn cost_with_vanishing_dynamics() {
    let spec = toy_lqr();
    let k = dmatrix![0.3, -0.7];
    let cost = closed_loop_cost(&toy_modes(), &SymMat::zeros(3), &k, &spec).unwrap();
    let expected = pi_k_adjoint(&spec.h(), &k).inner(spec.x0());
    assert!((cost - expected).abs() <= 1e-12 * expected);
}

#[test]
fn cost_matches_truncated_series() {
    let (m, spec, w) = (toy_modes(), toy_lqr(), toy_moment());
    let k = riccati_fixed_point(&m, &w, &spec, opts()).unwrap().k;
    let op = closed_loop(&m, &w, &k).unwrap();
    assert!(op.spectral_radius().unwrap() <= 0.9, "rho {}", op.spectral_radius().unwrap());
    let stage = pi_k_adjoint(&spec.h(), &k);
    let mut x = spec.x0().clone();
    let mut series = 0.0;
    for _ in 0..=300 {
        series += stage.inner(&x);
        x = op.apply(&x).unwrap();
    }
    let cost = closed_loop_cost(&m, &w, &k, &spec).unwrap();
    assert!((cost - series).abs() <= 1e-6 * cost);
    let unstable = dmatrix![200.0, 200.0];
    assert!(closed_loop(&m, &w, &unstable).unwrap().spectral_radius().unwrap() >= 1.0);
    assert!(matches!(closed_loop_cost(&m, &w, &unstable, &spec), Err(Error::UnstableClosedLoop(_))));
}

#[test]
fn lqr_spec_validation_and_json() {
    assert!(matches!(
        LqrSpec::new(SymMat::zeros(2), SymMat::identity(1), SymMat::identity(2)),
        Err(Error::NotPd { .. })
    ));
    assert!(matches!(
        LqrSpec::new(SymMat::identity(2), SymMat::identity(1), SymMat::identity(3)),
        Err(Error::DimensionMismatch(_))
    ));
    let spec = toy_lqr();
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<LqrSpec>(&text).unwrap(), spec);
    assert!(serde_json::from_str::<LqrSpec>(r#"{"Q":[[1]],"R":[[1]],"X0":[[1]],"S":[[1]]}"#).is_err());
    let res = riccati_fixed_point(&toy_modes(), &toy_moment(), &spec, opts()).unwrap();
    let text = serde_json::to_string(&res).unwrap();
    for key in ["\"P\"", "\"K\"", "\"value\"", "\"iterations\"", "\"residual\"", "\"rho_closed_loop\""] {
        assert!(text.contains(key));
    }
    let back: SynthesisResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back.k, res.k);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn riccati_map_is_monotone(seed in 0u64..10_000, p in psd_strategy(2), d in psd_strategy(2), g in mat_strategy(3, 3)) {
        let m = random_model(2, 1, 3, 0.5, seed);
        let w = SymMat::symmetrize(&g * g.transpose());
        let spec = toy_lqr();
        let hi = SymMat::symmetrize(p.as_matrix() + d.as_matrix());
        let rp = riccati_apply(&m, &w, &spec, &p).unwrap();
        let rh = riccati_apply(&m, &w, &spec, &hi).unwrap();
        let gap = SymMat::symmetrize(rh.as_matrix() - rp.as_matrix());
        prop_assert!(gap.eigmin() >= -1e-9 * (1.0 + rh.norm2()));
    }

    #[test]
    fn suboptimality_is_nonnegative(k0 in -0.3f64..0.3, k1 in -0.3f64..0.3) {
        let (m, spec, w) = (toy_modes(), toy_lqr(), toy_moment());
        let opt = riccati_fixed_point(&m, &w, &spec, opts()).unwrap();
        let k = &opt.k + dmatrix![k0, k1];
        if let Ok(s) = relative_suboptimality_to(&m, &w, &k, &spec, &opt) {
            prop_assert!(s >= -1e-9);
        }
    }
}
