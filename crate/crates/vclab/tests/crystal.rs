//! Ring-crystal construction: the central-intensity table, the closed
//! form vs. the trigonometric sum, equilibrium residuals, and the strain
//! certificate with its detuning response.

use vclab::crystal::{
    build_crystal, build_crystal_with_gamma, central_gamma_closed, central_gamma_rational,
    central_gamma_sum, relative_equilibrium_velocity, strain_profile,
    strain_reflection_coefficient, strain_tensor, CrystalSpec,
};
use vclab::dynamics::VortexConfiguration;
use vclab::{Error, PhaseVector, Vec2, TWO_PI};

#[test]
fn central_gamma_table_is_exact() {
    // Independently tabulated values of (N−2)(N−6)/12.
    let table = [
        (4u32, (-1i64, 3i64)),
        (5, (-1, 4)),
        (6, (0, 1)),
        (7, (5, 12)),
        (8, (1, 1)),
        (9, (7, 4)),
        (10, (8, 3)),
        (12, (5, 1)),
    ];
    for (n, (num, den)) in table {
        assert_eq!(central_gamma_rational(n).unwrap(), (num, den), "N = {n}");
        assert_eq!(
            central_gamma_closed(n).unwrap(),
            num as f64 / den as f64,
            "N = {n}"
        );
    }
}

#[test]
fn closed_form_matches_trigonometric_sum_to_n_200() {
    for n in 4..=200 {
        let closed = central_gamma_closed(n).unwrap();
        let summed = central_gamma_sum(n).unwrap();
        assert!(
            (closed - summed).abs() <= 1e-10 * closed.abs().max(1.0),
            "N = {n}: closed {closed} vs sum {summed}"
        );
    }
}

#[test]
fn small_n_rejected() {
    for n in 0..4 {
        assert!(matches!(central_gamma_closed(n), Err(Error::InvalidOrder { .. })));
        assert!(build_crystal(n).is_err());
    }
}

#[test]
fn hexagon_case_is_a_plain_pentagon() {
    // γ_6 = 0: the center is dropped, leaving the (N−1)-ring alone.
    let spec = build_crystal(6).unwrap();
    assert_eq!(spec.n(), 6);
    assert!(!spec.has_center());
    assert_eq!(spec.effective_n(), 5);
    assert_eq!(spec.positions().len(), 5);
    assert!(spec.intensities().iter().all(|&g| g == 1.0));
    assert_eq!(spec.gamma_center(), 0.0);
}

#[test]
fn ring_geometry_is_unit_circle_with_exact_seed_vertex() {
    // N counts all vortices: an (N−1)-ring (indices 0..N−2, the last ring
    // vertex exactly at (1,0)) plus the center as the final block.
    for n in [4usize, 5, 7, 9] {
        let spec = build_crystal(n as u32).unwrap();
        let z = spec.positions();
        assert_eq!(z.len(), n);
        for i in 0..n - 1 {
            assert!((z.block(i).norm() - 1.0).abs() <= 1e-15, "N = {n} site {i}");
        }
        assert_eq!(z.block(n - 2), Vec2::new(1.0, 0.0));
        assert_eq!(z.block(n - 1), Vec2::ZERO);
        assert_eq!(spec.intensities()[n - 1], spec.gamma_center());
    }
}

#[test]
fn crystals_are_equilibria() {
    for n in 4..=12 {
        let spec = build_crystal(n).unwrap();
        assert!(
            spec.equilibrium_residual() <= 1e-12,
            "N = {n}: residual {}",
            spec.equilibrium_residual()
        );
    }
}

#[test]
fn angular_velocity_matches_closed_form() {
    for n in 4..=12u32 {
        let spec = build_crystal(n).unwrap();
        let expected = (n as f64 - 2.0) / 2.0 + central_gamma_closed(n).unwrap();
        assert!(
            (spec.nu_paper_units() - expected).abs() <= 1e-10,
            "N = {n}: 2πν = {} vs {expected}",
            spec.nu_paper_units()
        );
        assert!((spec.nu_physical() * TWO_PI - spec.nu_paper_units()).abs() <= 1e-15);
    }
}

#[test]
fn fitted_rotation_rate_agrees_with_spec() {
    for n in [4u32, 6, 8] {
        let spec = build_crystal(n).unwrap();
        let (nu, residual) = relative_equilibrium_velocity(&spec.configuration()).unwrap();
        assert!((nu - spec.nu_physical()).abs() <= 1e-12, "N = {n}");
        assert!(residual <= 1e-12, "N = {n}: residual {residual}");
    }
}

#[test]
fn zero_angular_impulse_has_no_fitted_rate() {
    // Mirror dipole: L = Σ γ|z|² = 0, so no rotation rate is defined.
    let c = VortexConfiguration::new(
        PhaseVector::new(vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)]),
        vec![1.0, -1.0],
    )
    .unwrap();
    assert!(matches!(
        relative_equilibrium_velocity(&c),
        Err(Error::ZeroAngularImpulse)
    ));
}

#[test]
fn shadow_is_rigid_rotation() {
    let spec = build_crystal(5).unwrap();
    let t = 1.37;
    let shadow = spec.shadow_at(t);
    let manual = spec.positions().rotated(spec.nu_physical() * t);
    for i in 0..shadow.len() {
        assert!((shadow.block(i) - manual.block(i)).norm() <= 1e-15);
    }
}

#[test]
fn tuned_strain_vanishes() {
    for n in 4..=12 {
        let spec = build_crystal(n).unwrap();
        assert!(
            spec.max_strain_norm() <= 1e-12,
            "N = {n}: strain {}",
            spec.max_strain_norm()
        );
    }
}

#[test]
fn detuned_strain_is_linear_reflection() {
    // Perturbing the central intensity by d leaves the pure reflection
    // −(d/2π)·[[0,1],[1,0]] at the seed vertex: strain(γ* + d) is linear
    // in d and the extracted coefficient is d/(2π).
    for n in [4u32, 5, 8] {
        let tuned = central_gamma_closed(n).unwrap();
        let seed_site = n as usize - 2;
        for d in [0.1, -0.3, 0.5] {
            let spec = build_crystal_with_gamma(n, tuned + d).unwrap();
            let a = strain_tensor(&spec.configuration(), seed_site).unwrap();
            let expected = d / TWO_PI;
            let tol = 1e-12 * expected.abs().max(1.0);
            assert!(
                (a.value.m[1] + expected).abs() <= tol,
                "N = {n}, d = {d}: {:?}",
                a.value
            );
            assert!((a.value.m[2] + expected).abs() <= tol);
            assert!(a.value.m[0].abs() <= tol);
            assert!(a.value.m[3].abs() <= tol);
            let coeff = strain_reflection_coefficient(a.value);
            assert!((coeff - expected).abs() <= tol);
        }
    }
}

#[test]
fn strain_profile_covers_ring_sites_uniformly() {
    let spec = build_crystal_with_gamma(7, 1.0).unwrap();
    let profile = strain_profile(&spec.configuration()).unwrap();
    assert_eq!(profile.tensors.len(), 7);
    let norms: Vec<f64> = profile.tensors.iter().map(|t| t.frobenius_norm()).collect();
    // The six ring sites see the same strain magnitude by symmetry; the
    // center feels none (the symmetric ring cancels there).
    for i in 1..6 {
        assert!((norms[i] - norms[0]).abs() <= 1e-12, "site {i}");
    }
    assert!(norms[6] <= 1e-12);
    assert!((profile.max_frobenius - norms[0]).abs() <= 1e-13 * norms[0].max(1.0));
}

#[test]
fn strain_rotates_equivariantly() {
    let spec = build_crystal_with_gamma(5, 2.0).unwrap();
    let theta = 0.83;
    let rotated = spec.rotated(theta);
    let a0 = strain_tensor(&spec.configuration(), 0).unwrap().value;
    let a1 = strain_tensor(&rotated.configuration(), 0).unwrap().value;
    let r = vclab::Mat2::rotation(theta);
    let expected = r.matmul(a0).matmul(r.transpose());
    for k in 0..4 {
        assert!(
            (a1.m[k] - expected.m[k]).abs() <= 1e-13,
            "entry {k}: {} vs {}",
            a1.m[k],
            expected.m[k]
        );
    }
}

#[test]
fn single_vortex_spec() {
    let spec = CrystalSpec::single_vortex(2.5).unwrap();
    assert_eq!(spec.effective_n(), 1);
    assert_eq!(spec.nu_physical(), 0.0);
    assert_eq!(spec.positions().block(0), Vec2::ZERO);
    assert_eq!(spec.intensities(), &[2.5]);
    assert!(CrystalSpec::single_vortex(0.0).is_err());
}

#[test]
fn json_report_carries_the_headline_fields() {
    let spec = build_crystal(8).unwrap();
    let j = spec.to_json();
    assert_eq!(j["n"], 8);
    assert_eq!(j["gamma_center"].as_f64().unwrap(), 1.0);
    assert_eq!(j["positions"].as_array().unwrap().len(), 8);
    assert!(j["nu_paper_units"].as_f64().unwrap() > 0.0);
    assert!(j["equilibrium_residual"].as_f64().unwrap() <= 1e-12);
    assert!(j["max_strain_norm"].as_f64().unwrap() <= 1e-12);
}
