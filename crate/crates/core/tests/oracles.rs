//! Cross-checks of the geometry oracles against independent brute-force references.

mod support;

use support::oracle;

#[test]
fn signed_distance_matches_brute_force_scan() {
    let err = oracle::signed_distance_scan_error();
    assert!(err <= 1e-9, "max deviation {err}");
}

#[test]
fn occupancy_agrees_with_distance_sign() {
    let frac = oracle::occupancy_sign_agreement();
    assert!(frac >= 0.999, "agreement {frac}");
}

#[test]
fn marching_cubes_on_analytic_sphere() {
    let (err, boundary) = oracle::marching_cubes_sphere();
    assert!(err <= 0.02, "relative radius error {err}");
    assert_eq!(boundary, 0);
}
