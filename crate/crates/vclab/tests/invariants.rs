//! Property-based checks of the algebraic identities the library is built
//! on: kernel symmetries, phase-space algebra, flow equivariances, strain
//! linearity, discretization guarantees, and diagnostics monotonicity.

use proptest::prelude::*;
use vclab::crystal::{
    build_crystal, build_crystal_with_gamma, central_gamma_closed, strain_profile, strain_tensor,
    strain_reflection_coefficient,
};
use vclab::dynamics::{
    gradient_h, hamiltonian, impulses, integrate, pvs_velocity, IntegrateOptions,
    VortexConfiguration,
};
use vclab::eulerblob::{blob_moments, confinement_time, make_initial_blobs, mass_tail};
use vclab::kernel::{biot_savart_kernel, conjugate_pair_sum, kernel_jacobian};
use vclab::{Mat2, PhaseVector, Vec2, TWO_PI};

const MIN_SEPARATION: f64 = 0.3;

/// Nonzero plane vector with log-uniform magnitude over six decades.
fn nonzero_vec2() -> impl Strategy<Value = Vec2> {
    (-3.0f64..3.0, 0.0f64..TWO_PI).prop_map(|(e, th)| Vec2::from_angle(th) * 10f64.powf(e))
}

/// Vector with magnitude of order one (for absolute-tolerance statements).
fn unit_scale_vec2() -> impl Strategy<Value = Vec2> {
    (0.2f64..5.0, 0.0f64..TWO_PI).prop_map(|(r, th)| Vec2::from_angle(th) * r)
}

fn intensity() -> impl Strategy<Value = f64> {
    // Nonzero, both signs, order one.
    (0.2f64..2.0, prop::bool::ANY).prop_map(|(g, neg)| if neg { -g } else { g })
}

/// Well-separated configuration of `n` vortices in `[−2, 2]²`.
fn separated_config(n: usize) -> impl Strategy<Value = VortexConfiguration> {
    let positions = prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n);
    let intensities = prop::collection::vec(intensity(), n);
    (positions, intensities).prop_filter_map("positions too close", |(pos, gam)| {
        let blocks: Vec<Vec2> = pos.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let ok = blocks.iter().enumerate().all(|(i, a)| {
            blocks[i + 1..].iter().all(|b| (*a - *b).norm() >= MIN_SEPARATION)
        });
        if ok {
            Some(VortexConfiguration::new(PhaseVector::new(blocks), gam).unwrap())
        } else {
            None
        }
    })
}

fn max_block_norm(v: &PhaseVector) -> f64 {
    v.block_max_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// K is odd, tangential, and has magnitude 1/(2π|x|).
    #[test]
    fn kernel_antisymmetry_orthogonality_magnitude(x in nonzero_vec2()) {
        let k = biot_savart_kernel(x).unwrap();
        let k_neg = biot_savart_kernel(-x).unwrap();
        // Antisymmetry is exact in floating point: negation commutes with
        // every arithmetic step of the kernel.
        prop_assert_eq!(k_neg, -k);
        // Orthogonality holds to rounding (two independently rounded
        // products), at the natural scale |x||K| = 1/(2π).
        prop_assert!(x.dot(k).abs() <= 1e-15 * x.norm() * k.norm());
        let mag = 1.0 / (TWO_PI * x.norm());
        prop_assert!((k.norm() - mag).abs() <= 1e-13 * mag);
    }

    /// The kernel Jacobian is symmetric, trace-free, and rotation covariant.
    #[test]
    fn kernel_jacobian_symmetries(y in nonzero_vec2(), theta in 0.0f64..TWO_PI) {
        let j = kernel_jacobian(y).unwrap();
        let scale = j.max_abs();
        prop_assert!((j.m[1] - j.m[2]).abs() <= 1e-15 * scale);
        prop_assert!(j.trace().abs() <= 1e-15 * scale);
        // Rotation covariance: J_K(R y) = R·J_K(y)·Rᵀ (the differentiated
        // form of K(R x) = R K(x)).
        let r = Mat2::rotation(theta);
        let at_rotated = kernel_jacobian(r.apply(y)).unwrap();
        let transported = r.matmul(j).matmul(r.transpose());
        prop_assert!((at_rotated - transported).max_abs() <= 1e-12 * scale.max(1e-300));
    }

    /// Central finite differences of K reproduce its Jacobian to O(h²).
    #[test]
    fn kernel_jacobian_matches_finite_differences(y in unit_scale_vec2()) {
        let y = y * (1.0 / y.norm()); // |y| ≈ 1 so the O(h²) constant applies
        let j = kernel_jacobian(y).unwrap();
        for h in [1e-4, 1e-5] {
            let dx = (biot_savart_kernel(y + Vec2::new(h, 0.0)).unwrap()
                - biot_savart_kernel(y - Vec2::new(h, 0.0)).unwrap())
                * (0.5 / h);
            let dy = (biot_savart_kernel(y + Vec2::new(0.0, h)).unwrap()
                - biot_savart_kernel(y - Vec2::new(0.0, h)).unwrap())
                * (0.5 / h);
            let fd = Mat2::new(dx.x, dy.x, dx.y, dy.y);
            prop_assert!((fd - j).max_abs() <= 10.0 * h * h);
        }
    }

    /// J_K(y) + J_K(ȳ) is always a multiple of the reflection [[0,1],[1,0]].
    #[test]
    fn conjugate_pair_sum_is_reflection_multiple(y in unit_scale_vec2()) {
        let s = conjugate_pair_sum(y).unwrap();
        let scale = s.max_abs().max(1.0);
        prop_assert!(s.m[0].abs() <= 1e-14 * scale);
        prop_assert!(s.m[3].abs() <= 1e-14 * scale);
        let n4 = y.norm_sq() * y.norm_sq();
        let coeff = 2.0 * (y.y * y.y - y.x * y.x) / (TWO_PI * n4);
        prop_assert!((s.m[1] - coeff).abs() <= 1e-12 * scale);
        prop_assert!((s.m[2] - coeff).abs() <= 1e-12 * scale);
    }

    /// Phase-space algebra: J² = −I and rotations are isometries that
    /// commute with J.
    #[test]
    fn phase_vector_algebra(
        blocks in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..8),
        theta in 0.0f64..TWO_PI,
    ) {
        let z = PhaseVector::new(blocks.iter().map(|&(x, y)| Vec2::new(x, y)).collect());
        let jjz = z.j_apply().j_apply();
        prop_assert_eq!(jjz, z.scaled(-1.0));
        let rot = z.rotated(theta);
        prop_assert!((rot.block_max_norm() - z.block_max_norm()).abs()
            <= 1e-13 * z.block_max_norm().max(1e-300));
        // J (R z) = R (J z): J is rotation by π/2, rotations commute.
        let a = rot.j_apply();
        let b = z.j_apply().rotated(theta);
        prop_assert!(a.sub(&b).block_max_norm() <= 1e-13 * z.block_max_norm().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// H depends only on pairwise distances: rigid motions leave it fixed.
    #[test]
    fn hamiltonian_euclidean_invariance(
        c in separated_config(5),
        theta in 0.0f64..TWO_PI,
        shift in (-1.0f64..1.0, -1.0f64..1.0),
    ) {
        let h0 = hamiltonian(&c).unwrap();
        let a = Vec2::new(shift.0, shift.1);
        let moved: Vec<Vec2> = c.positions().iter().map(|z| z.rotated(theta) + a).collect();
        let cm = VortexConfiguration::new(PhaseVector::new(moved), c.intensities().to_vec())
            .unwrap();
        let h1 = hamiltonian(&cm).unwrap();
        prop_assert!((h1 - h0).abs() <= 1e-10 * (1.0 + h0.abs()));
    }

    /// The velocity field is rotation equivariant and scales as 1/λ.
    #[test]
    fn velocity_equivariance_and_scaling(
        c in separated_config(4),
        theta in 0.0f64..TWO_PI,
        lambda in 0.5f64..2.0,
    ) {
        let v = pvs_velocity(&c).unwrap();
        let scale = max_block_norm(&v).max(1e-300);

        let rotated: Vec<Vec2> = c.positions().iter().map(|z| z.rotated(theta)).collect();
        let cr = VortexConfiguration::new(PhaseVector::new(rotated), c.intensities().to_vec())
            .unwrap();
        let vr = pvs_velocity(&cr).unwrap();
        prop_assert!(vr.sub(&v.rotated(theta)).block_max_norm() <= 1e-12 * scale);

        let scaled: Vec<Vec2> = c.positions().iter().map(|&z| z * lambda).collect();
        let cs = VortexConfiguration::new(PhaseVector::new(scaled), c.intensities().to_vec())
            .unwrap();
        let vs = pvs_velocity(&cs).unwrap();
        prop_assert!(vs.sub(&v.scaled(1.0 / lambda)).block_max_norm() <= 1e-12 * scale);
    }

    /// ∇H sums to zero over blocks, and Γ⁻¹J∇H is the flow field.
    #[test]
    fn gradient_identities(c in separated_config(5)) {
        let g = gradient_h(&c).unwrap();
        let total: Vec2 = g.iter().fold(Vec2::ZERO, |acc, b| acc + *b);
        let gscale = max_block_norm(&g).max(1e-300);
        prop_assert!(total.norm() <= 1e-12 * gscale);

        let v = pvs_velocity(&c).unwrap();
        let vscale = max_block_norm(&v).max(1e-300);
        for (i, gamma) in c.intensities().iter().enumerate() {
            let from_gradient = g.block(i).perp() * (1.0 / gamma);
            prop_assert!((from_gradient - v.block(i)).norm() <= 1e-13 * vscale);
        }
    }

    /// Translation rules of the first integrals:
    /// P(Z+a) = P + (Σγ)a and L(Z+a) = L + 2P·a + (Σγ)|a|².
    #[test]
    fn impulse_translation_rules(
        c in separated_config(4),
        shift in (-1.0f64..1.0, -1.0f64..1.0),
    ) {
        let a = Vec2::new(shift.0, shift.1);
        let (p, l) = impulses(&c);
        let total_gamma: f64 = c.intensities().iter().sum();
        let moved: Vec<Vec2> = c.positions().iter().map(|&z| z + a).collect();
        let cm = VortexConfiguration::new(PhaseVector::new(moved), c.intensities().to_vec())
            .unwrap();
        let (pm, lm) = impulses(&cm);
        let pref = p + a * total_gamma;
        let lref = l + 2.0 * p.dot(a) + total_gamma * a.norm_sq();
        prop_assert!((pm - pref).norm() <= 1e-12 * (1.0 + pref.norm()));
        prop_assert!((lm - lref).abs() <= 1e-12 * (1.0 + lref.abs()));
    }

    /// Detuning the central intensity by d adds exactly
    /// d·(−1/(2π))·[[0,1],[1,0]] to the seed-vertex strain: linear, with a
    /// single zero at the tuned value (the reflection coefficient changes
    /// sign with d).
    #[test]
    fn strain_linearity_in_central_detuning(
        n in 4u32..=10,
        d in (-1.0f64..1.0).prop_filter("detuning away from zero", |d| d.abs() >= 1e-3),
    ) {
        let gamma_star = central_gamma_closed(n).unwrap();
        let spec = build_crystal_with_gamma(n, gamma_star + d).unwrap();
        let c = spec.configuration();
        let site = spec.effective_n() - 2; // ring seed vertex (1, 0)
        let a = strain_tensor(&c, site).unwrap().value;
        let expect = Mat2::new(0.0, -d / TWO_PI, -d / TWO_PI, 0.0);
        prop_assert!((a - expect).max_abs() <= 1e-12 * (1.0 + d.abs()));
        let coeff = strain_reflection_coefficient(a);
        prop_assert!(coeff * d > 0.0);
        prop_assert!((coeff - d / TWO_PI).abs() <= 1e-12 * (1.0 + d.abs()));
        // The central site stays strain-free for every central intensity.
        if spec.has_center() {
            let center = strain_tensor(&c, spec.effective_n() - 1).unwrap().value;
            prop_assert!(center.max_abs() <= 1e-12);
        }
        // Tuned crystals have no strain anywhere.
        let tuned = build_crystal(n).unwrap();
        prop_assert!(strain_profile(&tuned.configuration()).unwrap().max_frobenius <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Blob discretization guarantees: exact per-blob circulation, sign
    /// coherence, support inside D(z_i, ε), nonnegative moments, and mass
    /// tails non-increasing in the radius.
    #[test]
    fn discretization_guarantees(
        n in prop::sample::select(vec![4u32, 5, 7]),
        ppb in 50usize..150,
        seed in 0u64..1000,
        eps in 0.02f64..0.1,
    ) {
        let spec = build_crystal(n).unwrap();
        let f = make_initial_blobs(&spec, eps, ppb, seed).unwrap();
        let gammas = spec.intensities();

        for (i, total) in f.blob_circulations().iter().enumerate() {
            prop_assert!((total - gammas[i]).abs() <= 1e-12 * gammas[i].abs());
        }
        for (pos, w, blob) in f.particles() {
            prop_assert!(w * gammas[blob] > 0.0);
            let center = spec.positions().block(blob);
            prop_assert!((pos - center).norm() <= eps + 1e-12);
        }
        for m in blob_moments(&f) {
            prop_assert!(m.second_moment >= 0.0);
            prop_assert!(m.support_radius >= 0.0);
            prop_assert!(m.support_radius * m.support_radius + 1e-15 >= m.second_moment);
        }
        let radii = [0.0, eps / 4.0, eps / 2.0, eps, 2.0 * eps];
        for i in 0..f.n_blobs() {
            let tails: Vec<f64> =
                radii.iter().map(|&r| mass_tail(&f, i, r).unwrap()).collect();
            for pair in tails.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-15);
            }
            prop_assert_eq!(tails[0], 1.0);
            prop_assert_eq!(*tails.last().unwrap(), 0.0);
        }
    }

    /// Trajectories sample strictly increasing times from 0 and never
    /// record a touching pair.
    #[test]
    fn trajectory_time_grid_and_separation(c in separated_config(3), every in 1usize..4) {
        let opts = IntegrateOptions::new(0.02, 0.1).sampling(every);
        let traj = integrate(&c, &opts).unwrap();
        prop_assert_eq!(traj.times[0], 0.0);
        for pair in traj.times.windows(2) {
            prop_assert!(pair[1] > pair[0]);
        }
        for s in &traj.conserved {
            prop_assert!(s.min_distance > 0.0);
        }
        prop_assert!(traj.final_time() >= 0.1);
    }

    /// The confinement verdict never reports an exit after the horizon, and
    /// an exit verdict points at the first offending sample.
    #[test]
    fn confinement_tau_bounded_by_horizon(
        devs in prop::collection::vec(prop::collection::vec(0.0f64..0.6, 3), 2..20),
        beta in 0.05f64..0.45,
    ) {
        let eps = 0.05;
        let n_samples = devs.len();
        let times: Vec<f64> = (0..n_samples).map(|s| 0.1 * s as f64).collect();
        let series = vclab::eulerblob::DiagnosticsSeries {
            times: times.clone(),
            centers: vec![vec![Vec2::ZERO; 3]; n_samples],
            second_moments: vec![vec![0.0; 3]; n_samples],
            support_radii: vec![vec![0.0; 3]; n_samples],
            tails: vec![vec![[0.0, 0.0]; 3]; n_samples],
            tail_radii: (eps / 2.0, eps),
            max_center_dev: vec![0.0; n_samples],
            support_dev: devs.clone(),
            lipschitz_probe: None,
            circulation_total: vec![0.0; n_samples],
            linear_impulse: vec![Vec2::ZERO; n_samples],
            angular_impulse: vec![0.0; n_samples],
            epsilon: eps,
        };
        let verdict = confinement_time(&series, eps, beta).unwrap();
        let horizon = *times.last().unwrap();
        prop_assert!(verdict.tau_estimate <= horizon);
        let threshold = eps.powf(beta);
        let first_exit = (0..n_samples)
            .find(|&s| devs[s].iter().any(|&d| d > threshold));
        match first_exit {
            Some(s) => {
                prop_assert_eq!(verdict.tau_estimate, times[s]);
                prop_assert!(!verdict.confined());
            }
            None => {
                prop_assert_eq!(verdict.tau_estimate, horizon);
                prop_assert!(verdict.confined());
            }
        }
    }
}
