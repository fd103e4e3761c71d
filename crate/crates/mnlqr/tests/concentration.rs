mod common;

use common::*;
use mnlqr::concentration::*;
use mnlqr::simulate::sample_unit_ball;
use mnlqr::symm::SymMat;
use mnlqr::systems::{toy_moment, toy_sampler, TOY_R_W};
use mnlqr::Error;
use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// `√(2 ln 120)` evaluated to 30 digits.
const SQRT_2_LN_120: f64 = 3.094_347_020_869_523;
/// `0.35² √(2 ln 120 / 10⁴)` evaluated to 30 digits.
const DIRECT_BETA_TOY: f64 = 3.790_575_100_565_166e-3;

fn rademacher<R: Rng>(r: &mut R) -> f64 {
    if r.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

#[test]
fn matrix_radius_examples() {
    assert_eq!(matrix_hoeffding_radius(&[0.0; 5], 3, 0.05).unwrap(), 0.0);
    let gammas = vec![0.1; 100];
    let beta = matrix_hoeffding_radius(&gammas, 3, 0.05).unwrap();
    assert!((beta - SQRT_2_LN_120).abs() <= 1e-12);
    assert_eq!(matrix_hoeffding_radius(&gammas, 3, 0.0).unwrap_err(), Error::InvalidDelta(0.0));
    assert_eq!(matrix_hoeffding_radius(&gammas, 3, 1.0).unwrap_err(), Error::InvalidDelta(1.0));
    assert!(matrix_hoeffding_radius(&[-1.0], 3, 0.1).is_err());
}

#[test]
fn vector_radius_examples() {
    assert_eq!(vector_hoeffding_radius(&[0.0, 0.0], 0.1).unwrap(), 0.0);
    let r = vector_hoeffding_radius(&[1.0], (-2.0f64).exp()).unwrap();
    assert!((r - 4.0).abs() <= 1e-12);
    assert!(matches!(vector_hoeffding_radius(&[1.0], f64::NAN), Err(Error::InvalidDelta(_))));
}

#[test]
fn direct_bound_examples() {
    let w = dvector![0.1, -0.2, 0.05];
    let (w_hat, _) = direct_moment_bound(&vec![w.clone(); 7], 1.0, 0.1).unwrap();
    assert!(max_abs_diff(w_hat.as_matrix(), &(&w * w.transpose())) <= 1e-15);
    let samples = vec![DVector::zeros(3); 10_000];
    let (_, beta) = direct_moment_bound(&samples, 0.35, 0.05).unwrap();
    assert!((beta - DIRECT_BETA_TOY).abs() <= 1e-15);
    let bad = vec![dvector![0.1, 0.0], dvector![2.0, 0.0]];
    assert!(matches!(direct_moment_bound(&bad, 1.0, 0.1), Err(Error::NormBoundViolated { index: 1, .. })));
    assert_eq!(direct_moment_bound(&[], 1.0, 0.1).unwrap_err(), Error::EmptyInput);
}

#[test]
fn confidence_spec_validates() {
    assert!(ConfidenceSpec::new(0.05, 3).is_ok());
    assert!(ConfidenceSpec::new(1.5, 3).is_err());
}

#[test]
fn matrix_hoeffding_coverage() {
    let (d, n, repeats, delta) = (3, 50, 2000, 0.1);
    let mut r = rng(1);
    let terms: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let s = rand_sym(d, &mut r);
            s.scale(1.0 / s.norm2()).into_matrix()
        })
        .collect();
    let gammas = vec![1.0; n];
    let beta = matrix_hoeffding_radius(&gammas, d, delta).unwrap();
    let mut fails = 0;
    for _ in 0..repeats {
        let mut sum = DMatrix::zeros(d, d);
        for t in &terms {
            sum += t * rademacher(&mut r);
        }
        if SymMat::symmetrize(sum).norm2() > beta {
            fails += 1;
        }
    }
    assert!(fails as f64 / repeats as f64 <= delta + 0.02);
}

#[test]
fn vector_hoeffding_coverage() {
    let (d, n, repeats, delta) = (4, 50, 2000, 0.1);
    let mut r = rng(2);
    let terms: Vec<DVector<f64>> = (0..n).map(|_| sample_unit_ball(d, &mut r)).collect();
    let gammas: Vec<f64> = terms.iter().map(|t| t.norm()).collect();
    let radius = vector_hoeffding_radius(&gammas, delta).unwrap();
    let mut fails = 0;
    for _ in 0..repeats {
        let mut sum = DVector::zeros(d);
        for t in &terms {
            sum += t * rademacher(&mut r);
        }
        if sum.norm() > radius {
            fails += 1;
        }
    }
    assert!(fails as f64 / repeats as f64 <= delta + 0.02);
}

#[test]
fn direct_bound_coverage_on_toy_disturbance() {
    let (n, repeats, delta) = (1000, 500, 0.05);
    let sampler = toy_sampler();
    let truth = toy_moment();
    let mut r = rng(3);
    let mut fails = 0;
    for _ in 0..repeats {
        let samples: Vec<_> = (0..n).map(|_| sampler.sample(&mut r)).collect();
        let (w_hat, beta) = direct_moment_bound(&samples, TOY_R_W, delta).unwrap();
        if SymMat::symmetrize(w_hat.as_matrix() - truth.as_matrix()).norm2() > beta {
            fails += 1;
        }
    }
    assert!(fails as f64 / repeats as f64 <= delta + 0.02);
}

proptest! {
    #[test]
    fn radii_are_homogeneous(gammas in prop::collection::vec(0.0f64..1.0, 1..20), scale in 0.1f64..10.0, delta in 0.01f64..0.5) {
        let scaled: Vec<f64> = gammas.iter().map(|g| g * scale).collect();
        let m = matrix_hoeffding_radius(&gammas, 3, delta).unwrap();
        let ms = matrix_hoeffding_radius(&scaled, 3, delta).unwrap();
        prop_assert!((ms - scale * m).abs() <= 1e-12 * (1.0 + ms));
        let v = vector_hoeffding_radius(&gammas, delta).unwrap();
        let vs = vector_hoeffding_radius(&scaled, delta).unwrap();
        prop_assert!((vs - scale * v).abs() <= 1e-12 * (1.0 + vs));
    }

    #[test]
    fn direct_radius_is_monotone(n in 1usize..500, delta in 0.01f64..0.5) {
        let beta = |n: usize, delta: f64| direct_moment_bound(&vec![DVector::zeros(3); n], 1.0, delta).unwrap().1;
        prop_assert!(beta(n + 1, delta) < beta(n, delta));
        prop_assert!(beta(n, delta * 0.5) > beta(n, delta));
    }
}
