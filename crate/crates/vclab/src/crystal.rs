//! Polygonal vortex crystals: the regular (N−1)-gon of unit vortices with a
//! central vortex whose intensity is tuned so every site sees zero exterior
//! strain.
//!
//! ## The configuration
//!
//! Ring vertices `z_k = ζ^k` (`ζ = e^{2πi/(N−1)}`, unit radius, intensity 1,
//! `k = 1 … N−1`) plus a central vortex at the origin with intensity
//!
//! ```text
//! γ_N = (N−2)(N−6)/12,
//! ```
//!
//! equivalently the trigonometric sum `γ_N = c_N − σ(N)/4` (σ = 1 for odd N,
//! 0 for even). For `N = 6` the tuned central intensity is zero and the
//! crystal is the plain regular pentagon — a vanishing intensity means the
//! vortex is removed, so the built configuration carries 5 vortices.
//!
//! The configuration rigidly rotates counterclockwise; in paper units the
//! rate is `2πν = (N−2)/2 + γ_N`.

use crate::dynamics::{gradient_h, impulses, VortexConfiguration};
use crate::error::{Error, Result};
use crate::geom::{Mat2, PhaseVector, Vec2};
use crate::kernel::{kernel_jacobian_unchecked, TWO_PI};
use serde::{Deserialize, Serialize};

/// A polygonal crystal: geometry, intensities, rotation rate, and its two
/// certificates (equilibrium residual, max strain norm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    n: u32,
    gamma_center: f64,
    /// False when the central intensity is zero and the center is dropped.
    has_center: bool,
    positions: PhaseVector,
    intensities: Vec<f64>,
    nu_physical: f64,
    equilibrium_residual: f64,
    max_strain_norm: f64,
}

impl CrystalSpec {
    /// Nominal order N (ring size + 1, independent of whether the center is
    /// carried).
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of vortices actually present (N, or N−1 when the center is
    /// dropped).
    pub fn effective_n(&self) -> usize {
        self.intensities.len()
    }

    pub fn gamma_center(&self) -> f64 {
        self.gamma_center
    }

    pub fn has_center(&self) -> bool {
        self.has_center
    }

    pub fn positions(&self) -> &PhaseVector {
        &self.positions
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Physical counterclockwise angular velocity.
    pub fn nu_physical(&self) -> f64 {
        self.nu_physical
    }

    /// Paper-unit angular velocity `2πν`; equals `(N−2)/2 + γ_N` for tuned
    /// crystals.
    pub fn nu_paper_units(&self) -> f64 {
        TWO_PI * self.nu_physical
    }

    /// Euclidean norm of `∇H(Z*) − ν Γ Z*` (the rest-point certificate).
    pub fn equilibrium_residual(&self) -> f64 {
        self.equilibrium_residual
    }

    /// Max Frobenius norm of the per-site strain tensors.
    pub fn max_strain_norm(&self) -> f64 {
        self.max_strain_norm
    }

    /// The crystal as a point-vortex configuration.
    pub fn configuration(&self) -> VortexConfiguration {
        VortexConfiguration::new(self.positions.clone(), self.intensities.clone())
            .expect("crystal geometry is always a valid configuration")
    }

    /// The same crystal rotated rigidly by `theta` (still an equilibrium).
    pub fn rotated(&self, theta: f64) -> CrystalSpec {
        let mut out = self.clone();
        out.positions = self.positions.rotated(theta);
        out
    }

    /// Exact rigid-rotation shadow `z_i*(t) = e^{iνt} z_i*(0)`.
    pub fn shadow_at(&self, t: f64) -> PhaseVector {
        self.positions.rotated(self.nu_physical * t)
    }

    /// Degenerate one-vortex "crystal": a single vortex of intensity `gamma`
    /// at the origin. It is a trivially stationary configuration (`ν = 0`,
    /// zero residual and strain) whose shadow trajectory is the origin
    /// itself — the reference case for radially symmetric blob benchmarks.
    pub fn single_vortex(gamma: f64) -> Result<CrystalSpec> {
        if gamma == 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("{gamma} (must be finite and nonzero)"),
            });
        }
        Ok(CrystalSpec {
            n: 1,
            gamma_center: gamma,
            has_center: true,
            positions: PhaseVector::new(vec![Vec2::ZERO]),
            intensities: vec![gamma],
            nu_physical: 0.0,
            equilibrium_residual: 0.0,
            max_strain_norm: 0.0,
        })
    }

    /// Schema-stable JSON document.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "gamma_center": self.gamma_center,
            "nu_paper_units": self.nu_paper_units(),
            "nu_physical": self.nu_physical,
            "equilibrium_residual": self.equilibrium_residual,
            "max_strain_norm": self.max_strain_norm,
            "positions": self.positions.iter().map(|z| vec![z.x, z.y]).collect::<Vec<_>>(),
            "intensities": self.intensities,
        })
    }
}

fn check_order(n: u32) -> Result<()> {
    if n < 4 {
        return Err(Error::InvalidOrder { n: n as i64 });
    }
    Ok(())
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a.max(1)
}

/// The tuned central intensity as an exact reduced fraction
/// `(numerator, denominator)` of `(N−2)(N−6)/12`, denominator > 0.
pub fn central_gamma_rational(n: u32) -> Result<(i64, i64)> {
    check_order(n)?;
    let num = (n as i128 - 2) * (n as i128 - 6);
    let den = 12i128;
    let g = gcd(num, den);
    Ok(((num / g) as i64, (den / g) as i64))
}

/// Closed-form central intensity `γ_N = (N−2)(N−6)/12`.
pub fn central_gamma_closed(n: u32) -> Result<f64> {
    let (num, den) = central_gamma_rational(n)?;
    Ok(num as f64 / den as f64)
}

/// Central intensity from the trigonometric sum:
/// `γ_N = c_N − σ(N)/4` with
/// `c_N = 2 Σ_{j=1}^{⌊(N−2)/2⌋} (Im(ζ^j)² − (1−Re(ζ^j))²)/|1−ζ^j|⁴`,
/// `ζ = e^{2πi/(N−1)}`, σ = 1 for odd N and 0 for even N.
///
/// Independent of the closed form; the two agree to 1e−10 for N ≤ 200.
pub fn central_gamma_sum(n: u32) -> Result<f64> {
    check_order(n)?;
    let m = (n - 1) as f64;
    let terms = (n - 2) / 2;
    let mut c = 0.0;
    for j in 1..=terms {
        let theta = TWO_PI * j as f64 / m;
        let (s, co) = theta.sin_cos();
        let im2 = s * s;
        let re_def = 1.0 - co;
        let denom = re_def * re_def + s * s; // |1 − ζ^j|²
        c += (im2 - re_def * re_def) / (denom * denom);
    }
    let sigma = if n % 2 == 1 { 1.0 } else { 0.0 };
    Ok(2.0 * c - sigma / 4.0)
}

/// Ring positions `ζ^k`, `k = 1 … N−1`, with the last vertex landing exactly
/// on `(1, 0)` (the angle is reduced mod 2π before evaluation).
fn ring_positions(n: u32) -> Vec<Vec2> {
    let m = n - 1;
    (1..=m)
        .map(|k| Vec2::from_angle(TWO_PI * ((k % m) as f64) / m as f64))
        .collect()
}

/// Builds the tuned crystal of order N: ring of N−1 unit vortices plus the
/// central vortex with `γ_N = (N−2)(N−6)/12`. For N = 6 (where the tuned
/// intensity vanishes) the returned spec carries only the 5 ring vortices.
pub fn build_crystal(n: u32) -> Result<CrystalSpec> {
    build_crystal_with_gamma(n, central_gamma_closed(n)?)
}

/// Builds the ring-plus-center configuration of order N with an arbitrary
/// central intensity (the ring is an equilibrium for every central γ; only
/// the tuned value also kills the strain). A zero central intensity drops
/// the center vortex.
pub fn build_crystal_with_gamma(n: u32, gamma_center: f64) -> Result<CrystalSpec> {
    check_order(n)?;
    if !gamma_center.is_finite() {
        return Err(Error::InvalidParameter {
            name: "gamma_center",
            reason: format!("{gamma_center} (must be finite)"),
        });
    }
    let mut positions = ring_positions(n);
    let mut intensities = vec![1.0; (n - 1) as usize];
    let has_center = gamma_center != 0.0;
    if has_center {
        positions.push(Vec2::ZERO);
        intensities.push(gamma_center);
    }
    let positions = PhaseVector::new(positions);
    let config = VortexConfiguration::new(positions.clone(), intensities.clone())?;
    let (nu_physical, equilibrium_residual) = relative_equilibrium_velocity(&config)?;
    let max_strain_norm = strain_profile(&config)?.max_frobenius;
    Ok(CrystalSpec {
        n,
        gamma_center,
        has_center,
        positions,
        intensities,
        nu_physical,
        equilibrium_residual,
        max_strain_norm,
    })
}

/// Fits the counterclockwise rotation rate by one-dimensional least squares
/// on the rest-point relation `∇H(Z) = ν Γ Z`, returning `(ν, residual)`
/// where the residual is the Euclidean norm of `∇H − ν Γ Z`.
///
/// The residual doubles as the relative-equilibrium certificate: exact
/// crystals sit at ~1e−15, generic configurations well above 1e−3.
///
/// # Errors
/// [`Error::ZeroAngularImpulse`] when `Σ γ_i |z_i|²` vanishes (no rotation
/// rate can be defined).
pub fn relative_equilibrium_velocity(c: &VortexConfiguration) -> Result<(f64, f64)> {
    let (_, angular) = impulses(c);
    let scale: f64 = c
        .positions()
        .iter()
        .zip(c.intensities())
        .map(|(z, g)| g.abs() * z.norm_sq())
        .sum();
    if angular.abs() <= 1e-12 * scale.max(1e-30) {
        return Err(Error::ZeroAngularImpulse);
    }
    let grad = gradient_h(c)?;
    // Γ Z, blockwise.
    let gz = PhaseVector::new(
        c.positions()
            .iter()
            .zip(c.intensities())
            .map(|(z, g)| *z * *g)
            .collect(),
    );
    let denom = gz.dot(&gz);
    let nu = grad.dot(&gz) / denom;
    let residual = grad.sub(&gz.scaled(nu)).euclidean_norm();
    Ok((nu, residual))
}

/// The exterior strain tensor at one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrainTensor {
    pub site: usize,
    pub value: Mat2,
}

impl StrainTensor {
    pub fn frobenius_norm(&self) -> f64 {
        self.value.frobenius_norm()
    }
}

/// `𝒜(i) = Σ_{j≠i} γ_j J_K(z_i − z_j)`: the Jacobian of the exterior field
/// felt by vortex i. Its vanishing kills the leading-order deformation of a
/// blob riding on that vortex.
pub fn strain_tensor(c: &VortexConfiguration, i: usize) -> Result<StrainTensor> {
    let z = c.positions();
    let gamma = c.intensities();
    if i >= z.len() {
        return Err(Error::InvalidParameter {
            name: "site",
            reason: format!("{i} out of range for {} vortices", z.len()),
        });
    }
    let zi = z.block(i);
    let mut a = Mat2::ZERO;
    for j in 0..z.len() {
        if j == i {
            continue;
        }
        let d = zi - z.block(j);
        if d.norm_sq() == 0.0 {
            return Err(Error::CoincidentVortices {
                i,
                j,
                separation: 0.0,
            });
        }
        a = a + kernel_jacobian_unchecked(d) * gamma[j];
    }
    Ok(StrainTensor { site: i, value: a })
}

/// All per-site strain tensors plus the max Frobenius norm (the certificate
/// that the whole configuration is strain-free).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainProfile {
    pub tensors: Vec<StrainTensor>,
    pub max_frobenius: f64,
}

pub fn strain_profile(c: &VortexConfiguration) -> Result<StrainProfile> {
    let mut tensors = Vec::with_capacity(c.n());
    let mut max_frobenius = 0.0f64;
    for i in 0..c.n() {
        let t = strain_tensor(c, i)?;
        max_frobenius = max_frobenius.max(t.frobenius_norm());
        tensors.push(t);
    }
    Ok(StrainProfile {
        tensors,
        max_frobenius,
    })
}

/// Extracts the coefficient `c` of a strain tensor of the reflection form
/// `c · [[0,−1],[−1,0]]` — the shape the strain takes at the mirror
/// vertex `(1,0)` when the central intensity is detuned by `+c·2π` — as
/// the negated mean off-diagonal entry.
pub fn strain_reflection_coefficient(m: Mat2) -> f64 {
    -0.5 * (m.m[1] + m.m[2])
}
