mod common;

use std::f64::consts::SQRT_2;

use approx::assert_abs_diff_eq;
use common::*;
use mnlqr::linalg::kron;
use mnlqr::symm::*;
use mnlqr::Error;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use proptest::prelude::*;

fn vec_col_major(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

#[test]
fn svec_identity_and_small_example() {
    assert_eq!(svec(&SymMat::identity(2)).into_data(), dvector![1.0, 0.0, 1.0]);
    let x = SymMat::new(dmatrix![1.0, 2.0; 2.0, 3.0]).unwrap();
    assert_abs_diff_eq!(svec(&x).into_data(), dvector![1.0, 2.0 * SQRT_2, 3.0], epsilon = 1e-15);
}

#[test]
fn svec_index_matches_layout() {
    for d in 1..6 {
        let mut k = 0;
        for j in 0..d {
            for i in j..d {
                assert_eq!(svec_index(d, i, j), k);
                assert_eq!(svec_index(d, j, i), k);
                k += 1;
            }
        }
        assert_eq!(k, sd(d));
        assert_eq!(sd_inverse(sd(d)), Some(d));
    }
    assert_eq!(sd_inverse(4), None);
}

#[test]
fn unsvec_examples() {
    assert_eq!(unsvec(&dvector![1.0, 0.0, 1.0]).unwrap(), SymMat::identity(2));
    assert_eq!(unsvec(&DVector::zeros(4)).unwrap_err(), Error::LengthNotTriangular(4));
}

#[test]
fn qd_matrix_examples() {
    let h = 1.0 / SQRT_2;
    let expected = dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, h, h, 0.0; 0.0, 0.0, 0.0, 1.0];
    assert_abs_diff_eq!(qd_matrix(2), expected, epsilon = 1e-15);
    assert_eq!(qd_matrix(1), dmatrix![1.0]);
    for d in 1..=8 {
        let q = qd_matrix(d);
        assert!(max_abs_diff(&(&q * q.transpose()), &DMatrix::identity(sd(d), sd(d))) <= 1e-14);
    }
}

#[test]
fn skron_examples() {
    assert_abs_diff_eq!(skron(&DMatrix::identity(2, 2), &DMatrix::identity(2, 2)).unwrap(), DMatrix::identity(3, 3), epsilon = 1e-15);
    let z = dmatrix![2.0, 0.0; 0.0, 1.0];
    let out = skron(&z, &z).unwrap() * svec(&SymMat::identity(2)).into_data();
    assert_abs_diff_eq!(out, dvector![4.0, 0.0, 1.0], epsilon = 1e-15);
    assert!(matches!(skron(&DMatrix::zeros(2, 3), &DMatrix::zeros(3, 2)), Err(Error::ShapeMismatch(_))));
}

#[test]
fn skron_matches_dense_kronecker_definition() {
    let mut r = rng(7);
    for _ in 0..20 {
        let v = rand_mat(3, 2, &mut r);
        let u = rand_mat(3, 2, &mut r);
        let dense = (qd_matrix(3) * (kron(&u, &v) + kron(&v, &u)) * qd_matrix(2).transpose()) * 0.5;
        assert!(max_abs_diff(&skron(&v, &u).unwrap(), &dense) <= 1e-13);
    }
}

#[test]
fn skron_vec_is_svec_of_outer_product() {
    let mut r = rng(3);
    let z = rand_vec(4, &mut r);
    assert_abs_diff_eq!(skron_vec(&z), svec(&SymMat::outer(&z)).into_data(), epsilon = 1e-15);
}

#[test]
fn symmat_construction_checks_asymmetry() {
    assert!(matches!(SymMat::new(dmatrix![1.0, 2.0; 0.0, 1.0]), Err(Error::Asymmetric { .. })));
    let s = SymMat::new(dmatrix![1.0, 2.0 + 1e-13; 2.0, 1.0]).unwrap();
    assert_eq!(s.get(0, 1), s.get(1, 0));
    assert!(SymMat::with_tolerance(dmatrix![1.0, 2.0; 2.5, 1.0], 0.5).is_ok());
}

#[test]
fn symmat_psd_checks() {
    assert!(SymMat::identity(3).is_psd(1e-9));
    let m = SymMat::from_diagonal(&[1.0, -0.5]);
    assert!(matches!(m.require_psd("M"), Err(Error::NotPsd { .. })));
    assert!(m.clip_psd().is_psd(0.0));
    assert!(matches!(SymMat::zeros(2).require_pd("M"), Err(Error::NotPd { .. })));
}

#[test]
fn symmat_json_round_trip() {
    let s = SymMat::new(dmatrix![1.0, 0.5; 0.5, 2.0]).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    assert_eq!(text, "[[1.0,0.5],[0.5,2.0]]");
    let back: SymMat = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
    assert!(serde_json::from_str::<SymMat>("[[1.0,0.0],[1.0,1.0]]").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svec_is_an_isometry(x in sym_strategy(4), y in sym_strategy(4)) {
        let (sx, sy) = (svec(&x).into_data(), svec(&y).into_data());
        prop_assert!((sx.norm() - x.norm_fro()).abs() <= 1e-12 * (1.0 + x.norm_fro()));
        prop_assert!((sx.dot(&sy) - x.inner(&y)).abs() <= 1e-12 * (1.0 + x.norm_fro() * y.norm_fro()));
    }

    #[test]
    fn unsvec_inverts_svec(x in sym_strategy(5)) {
        let back = unsvec(&svec(&x).into_data()).unwrap();
        prop_assert!(max_abs_diff(back.as_matrix(), x.as_matrix()) <= 1e-14);
    }

    #[test]
    fn qd_maps_vec_to_svec(x in sym_strategy(3)) {
        let via_q = qd_matrix(3) * vec_col_major(x.as_matrix());
        prop_assert!((via_q - svec(&x).into_data()).amax() <= 1e-14);
    }

    #[test]
    fn skron_fundamental_identity(z in mat_strategy(3, 2), x in sym_strategy(2)) {
        let lhs = skron(&z, &z).unwrap() * svec(&x).into_data();
        let rhs = svec(&x.congruence(&z)).into_data();
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * (1.0 + rhs.amax()));
    }

    #[test]
    fn skron_general_identity(v in mat_strategy(2, 3), u in mat_strategy(2, 3), x in sym_strategy(3)) {
        let xm = x.as_matrix();
        let expected = SymMat::symmetrize((&v * xm * u.transpose() + &u * xm * v.transpose()) * 0.5);
        let lhs = skron(&v, &u).unwrap() * svec(&x).into_data();
        prop_assert!((lhs - svec(&expected).into_data()).amax() <= 1e-12 * (1.0 + expected.norm_fro()));
    }
}
