use mnlqr_wasm::*;
use serde_json::Value;

#[test]
fn synthesis_matches_trivial_controller() {
    let rep = toy_synthesis(0.35 * 0.35, 10.0);
    assert!(rep.feasible);
    assert_eq!(rep.gain.len(), 2);
    assert!(rep.rel_subopt >= -1e-9);
    let nominal = toy_synthesis(0.0, 10.0);
    assert!(nominal.rel_subopt.abs() <= 1e-9);
    assert!(rep.value >= nominal.value);
}

#[test]
fn oversized_radius_is_infeasible() {
    let rep = toy_synthesis(5.0, 10.0);
    assert!(!rep.feasible);
    assert!(!rep.message.is_empty());
    let bad = toy_synthesis(0.1, -1.0);
    assert!(!bad.feasible);
}

#[test]
fn identification_report() {
    let rep = toy_identification(500, 5, 3, 0.05).unwrap();
    assert_eq!(rep.errors.len(), 5);
    assert!(rep.errors.iter().zip(&rep.radii).all(|(e, b)| e <= b));
    assert!(rep.median_error > 0.0);
    assert!(toy_identification(2, 1, 3, 0.05).is_err());
    assert_eq!(toy_identification(500, 5, 3, 0.05).unwrap(), rep);
}

#[test]
fn spectral_radius_of_modes() {
    let rho = mode_spectral_radius(&[0.5, 0.0, 0.0, 0.5]).unwrap();
    assert!((rho - 0.25).abs() <= 1e-12);
    let two = mode_spectral_radius(&[0.5, 0.0, 0.0, 0.5, 0.0, 0.5, 0.5, 0.0]).unwrap();
    assert!((two - 0.5).abs() <= 1e-12);
    assert!(mode_spectral_radius(&[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn json_wrappers() {
    let v: Value = serde_json::from_str(&mode_spectral_radius_json(&[0.5, 0.0, 0.0, 0.5])).unwrap();
    assert_eq!(v["ok"], true);
    assert!((v["result"].as_f64().unwrap() - 0.25).abs() <= 1e-12);
    let v: Value = serde_json::from_str(&mode_spectral_radius_json(&[])).unwrap();
    assert_eq!(v["ok"], false);
    let v: Value = serde_json::from_str(&toy_synthesis_json(0.05, 10.0)).unwrap();
    assert_eq!(v["result"]["feasible"], true);
    let v: Value = serde_json::from_str(&toy_identification_json(200, 2, 1)).unwrap();
    assert_eq!(v["result"]["errors"].as_array().unwrap().len(), 2);
}
