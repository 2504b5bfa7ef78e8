//! Spectral stability machinery for crystal equilibria: the Hamiltonian
//! Hessian, the stability matrix of the rotating-frame linearization, the
//! invariant splitting `V ⊕ V⊥`, the spectrum of `S|_{V⊥}`, and the
//! admissible central-intensity range.
//!
//! ## The objects
//!
//! At a relative equilibrium `Z*` rotating counterclockwise at `ν`, the
//! rotating-frame field is `F(Z) = Γ⁻¹J∇H(Z) − νJZ` and its linearization is
//!
//! ```text
//! S = Γ⁻¹ J D²H(Z*) − ν J .
//! ```
//!
//! `V = span{Z*, JZ*}` carries the rotation/scaling degeneracy; its
//! Γ-orthogonal complement `V⊥ = {Y : YᵀΓZ* = YᵀΓJZ* = 0}` is S-invariant
//! whenever `Σ_{i≠j} γ_iγ_j ≠ 0`, and linear stability is judged by the
//! spectrum of `S|_{V⊥}`: marginally stable means purely imaginary and
//! semisimple (block-diagonalizable into 2×2 antisymmetric blocks).
//!
//! Numerically, semisimplicity is certified by an eigenvector-matrix
//! condition number below [`EIGENBASIS_CONDITION_LIMIT`]; exact Jordan
//! structure is not decidable in floating point and a defective spectrum
//! surfaces as a blown-up condition number.

use crate::crystal::{central_gamma_rational, CrystalSpec};
use crate::dynamics::VortexConfiguration;
use crate::error::{Error, Result};
use crate::geom::{Mat2, PhaseVector};
use crate::kernel::INV_TWO_PI;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

type C64 = Complex<f64>;

/// Relative real-part tolerance under which a spectrum counts as purely
/// imaginary (certified stable), scaled by the spectral radius.
pub const STABLE_REAL_TOL: f64 = 1e-8;

/// Relative real-part threshold above which growth is treated as genuine
/// exponential instability. Between the two tolerances the verdict is
/// "degenerate": real parts at the level of defective-eigenvalue noise.
pub const UNSTABLE_REAL_TOL: f64 = 1e-6;

/// Eigenvector-matrix condition number above which the spectrum is treated
/// as non-semisimple (degenerate) even if it is purely imaginary.
pub const EIGENBASIS_CONDITION_LIMIT: f64 = 1e6;

/// Equilibrium-residual bound required of inputs to the stability pipeline.
pub const EQUILIBRIUM_RESIDUAL_TOL: f64 = 1e-8;

/// `Σ_{i≠j} γ_i γ_j = (Σγ)² − Σγ²`: the quantity whose vanishing breaks the
/// invariant splitting.
pub fn gamma_product_sum(intensities: &[f64]) -> f64 {
    let s: f64 = intensities.iter().sum();
    let s2: f64 = intensities.iter().map(|g| g * g).sum();
    s * s - s2
}

/// The 2N×2N Hessian `D²H(Z)`.
///
/// With `G(y) = (|y|²I − 2yyᵀ)/|y|⁴`, the blocks are
/// `(i,j) ↦ −(γ_iγ_j/2π) G(z_i−z_j)` off the diagonal and
/// `(i,i) ↦ Σ_{j≠i} (γ_iγ_j/2π) G(z_i−z_j)`; the matrix is symmetric and its
/// block rows sum to zero (translation invariance of H).
pub fn hessian_h(c: &VortexConfiguration) -> Result<DMatrix<f64>> {
    let n = c.n();
    let z = c.positions();
    let gamma = c.intensities();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = z.block(i) - z.block(j);
            let r2 = d.norm_sq();
            if r2 == 0.0 {
                return Err(Error::CoincidentVortices {
                    i,
                    j,
                    separation: 0.0,
                });
            }
            let g = (Mat2::IDENTITY * r2 - Mat2::outer(d, d) * 2.0) * (1.0 / (r2 * r2));
            let w = gamma[i] * gamma[j] * INV_TWO_PI;
            // Off-diagonal block −w·G; the same term accumulates +w·G on the
            // diagonal block, so block rows sum to zero by construction.
            for (r, rowg) in [(0, [g.m[0], g.m[1]]), (1, [g.m[2], g.m[3]])] {
                for (s, gv) in rowg.iter().enumerate() {
                    h[(2 * i + r, 2 * j + s)] = -w * gv;
                    h[(2 * i + r, 2 * i + s)] += w * gv;
                }
            }
        }
    }
    Ok(h)
}

/// Applies the blockwise quarter-turn `J` on the left of a tall matrix:
/// rows (2i, 2i+1) become (−row_{2i+1}, row_{2i}).
fn j_left(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    debug_assert!(rows % 2 == 0);
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows / 2 {
        for c in 0..cols {
            out[(2 * i, c)] = -m[(2 * i + 1, c)];
            out[(2 * i + 1, c)] = m[(2 * i, c)];
        }
    }
    out
}

/// The stability matrix at an arbitrary state and frame rate:
/// `S = Γ⁻¹ J D²H(Z) − ν J`, the exact Jacobian of the rotating-frame field
/// `Γ⁻¹J∇H − νJZ`.
pub fn stability_matrix_at(c: &VortexConfiguration, nu: f64) -> Result<DMatrix<f64>> {
    let n = c.n();
    let gamma = c.intensities();
    let mut s = j_left(&hessian_h(c)?);
    for i in 0..n {
        let inv_g = 1.0 / gamma[i];
        for col in 0..2 * n {
            s[(2 * i, col)] *= inv_g;
            s[(2 * i + 1, col)] *= inv_g;
        }
        // −νJ contribution on the diagonal block.
        s[(2 * i, 2 * i + 1)] += nu;
        s[(2 * i + 1, 2 * i)] -= nu;
    }
    Ok(s)
}

/// The stability matrix of a crystal equilibrium, with the frame rate taken
/// from the spec itself.
///
/// # Errors
/// [`Error::NotAnEquilibrium`] when the spec's rest-point residual exceeds
/// [`EQUILIBRIUM_RESIDUAL_TOL`].
pub fn stability_matrix(spec: &CrystalSpec) -> Result<DMatrix<f64>> {
    if spec.equilibrium_residual() > EQUILIBRIUM_RESIDUAL_TOL {
        return Err(Error::NotAnEquilibrium {
            residual: spec.equilibrium_residual(),
            tolerance: EQUILIBRIUM_RESIDUAL_TOL,
        });
    }
    stability_matrix_at(&spec.configuration(), spec.nu_physical())
}

/// The invariant splitting `ℝ^{2M} = V ⊕ V⊥` at an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSplit {
    /// `(Z*, JZ*)`.
    pub v_basis: [PhaseVector; 2],
    /// Euclidean-orthonormal basis of `V⊥`, each vector Γ-orthogonal to both
    /// `Z*` and `JZ*`.
    pub v_perp_basis: Vec<PhaseVector>,
    /// Angular impulse `L = Σγ|z|²` (the Γ-Gram diagonal of V, used by the
    /// oblique projector onto V⊥ along V).
    pub angular_impulse: f64,
}

impl SubspaceSplit {
    pub fn dim_v(&self) -> usize {
        2
    }

    pub fn dim_v_perp(&self) -> usize {
        self.v_perp_basis.len()
    }

    /// Oblique projection onto V⊥ along V:
    /// `P x = x − a Z* − b JZ*` with `a = ⟨x, ΓZ*⟩/L`, `b = ⟨x, ΓJZ*⟩/L`.
    pub fn project_v_perp(&self, x: &PhaseVector, gamma: &[f64]) -> PhaseVector {
        let (a, b) = self.v_coordinates(x, gamma);
        let mut out = x.clone();
        out.axpy(-a, &self.v_basis[0]);
        out.axpy(-b, &self.v_basis[1]);
        out
    }

    /// Coordinates of the V-component of `x` in the basis `(Z*, JZ*)`.
    pub fn v_coordinates(&self, x: &PhaseVector, gamma: &[f64]) -> (f64, f64) {
        let gz = gamma_weighted(&self.v_basis[0], gamma);
        let gjz = gamma_weighted(&self.v_basis[1], gamma);
        (x.dot(&gz) / self.angular_impulse, x.dot(&gjz) / self.angular_impulse)
    }
}

fn gamma_weighted(z: &PhaseVector, gamma: &[f64]) -> PhaseVector {
    PhaseVector::new(
        z.iter()
            .zip(gamma)
            .map(|(zi, g)| *zi * *g)
            .collect::<Vec<_>>(),
    )
}

/// Builds the splitting: `V = span{Z*, JZ*}`, and `V⊥` as the Euclidean
/// orthogonal complement of `span{ΓZ*, ΓJZ*}` (which is exactly the set of
/// Γ-orthogonality constraints), orthonormalized by a two-pass Gram–Schmidt
/// sweep over the standard basis.
///
/// # Errors
/// [`Error::DegenerateSplitting`] when the angular impulse `L = Σγ|z*|²`
/// (the Γ-Gram diagonal of V, which the oblique projector divides by)
/// vanishes.
pub fn subspace_split(spec: &CrystalSpec) -> Result<SubspaceSplit> {
    let gamma = spec.intensities();
    let z_star = spec.positions().clone();
    let (_, angular_impulse) = crate::dynamics::impulses(&spec.configuration());
    let scale: f64 = z_star
        .iter()
        .zip(gamma)
        .map(|(z, g)| g.abs() * z.norm_sq())
        .sum();
    if angular_impulse.abs() <= 1e-12 * scale.max(1.0) {
        return Err(Error::DegenerateSplitting { angular_impulse });
    }
    let jz_star = z_star.j_apply();
    let m2 = 2 * z_star.len();

    // Constraint directions: Y must be Euclidean-orthogonal to ΓZ* and ΓJZ*.
    // These two are automatically orthogonal to each other (⟨z, z⊥⟩ = 0
    // blockwise), so normalizing suffices.
    let w1 = gamma_weighted(&z_star, gamma);
    let w2 = gamma_weighted(&jz_star, gamma);
    let w1 = w1.scaled(1.0 / w1.euclidean_norm());
    let w2 = w2.scaled(1.0 / w2.euclidean_norm());

    let mut basis: Vec<PhaseVector> = Vec::with_capacity(m2 - 2);
    for k in 0..m2 {
        if basis.len() == m2 - 2 {
            break;
        }
        let mut flat = vec![0.0; m2];
        flat[k] = 1.0;
        let mut y = PhaseVector::from_flat(&flat);
        // Two Gram–Schmidt passes for orthogonality at the 1e−15 level.
        for _ in 0..2 {
            y.axpy(-y.dot(&w1), &w1);
            y.axpy(-y.dot(&w2), &w2);
            for b in &basis {
                y.axpy(-y.dot(b), b);
            }
        }
        let norm = y.euclidean_norm();
        if norm > 1e-6 {
            basis.push(y.scaled(1.0 / norm));
        }
    }
    debug_assert_eq!(basis.len(), m2 - 2, "orthogonal complement dimension");

    Ok(SubspaceSplit {
        v_basis: [z_star, jz_star],
        v_perp_basis: basis,
        angular_impulse,
    })
}

/// Stability verdict on `V⊥`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    /// Purely imaginary spectrum (within [`STABLE_REAL_TOL`] relative) with a
    /// well-conditioned eigenbasis: certified marginal/linear stability.
    Stable,
    /// Some eigenvalue with a genuinely positive real part
    /// (above [`UNSTABLE_REAL_TOL`] relative).
    Unstable,
    /// Neither: borderline real parts or a near-defective eigenbasis.
    Degenerate,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Degenerate => "degenerate",
        }
    }
}

/// Full output of the restricted-spectrum pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n: u32,
    pub effective_n: usize,
    pub gamma_center: f64,
    pub intensities: Vec<f64>,
    /// Physical counterclockwise rotation rate.
    pub nu_physical: f64,
    /// The parameter entering the matrix in the orientation
    /// `S = Γ⁻¹JD²H + ν_S J` (equal to `−nu_physical` in this crate's
    /// counterclockwise convention); `S|_V = [[0,0],[2ν_S,0]]`.
    pub nu_s: f64,
    /// Eigenvalues of `S|_{V⊥}` as `[re, im]`, sorted by imaginary part.
    pub spectrum: Vec<[f64; 2]>,
    pub max_real_part: f64,
    pub spectral_radius: f64,
    pub eigenbasis_condition: f64,
    /// `S|_V` in the basis `(Z*, JZ*)`.
    pub s_on_v: [[f64; 2]; 2],
    /// Max over V⊥ basis vectors of the V-component norm of `S·Y`
    /// (invariance certificate).
    pub invariance_residual: f64,
    pub gamma_sum: f64,
    pub range_lo: f64,
    pub range_hi: f64,
    pub in_range: bool,
    pub dim_v: usize,
    pub dim_v_perp: usize,
    pub classification: Classification,
}

impl StabilityReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Admissible central-intensity range `(lo, hi)`:
/// `lo = (N²−10N+17)/16` for odd N, `(N²−10N+16)/16` for even N;
/// `hi = (N−2)²/4`.
pub fn central_gamma_stability_range(n: u32) -> Result<(f64, f64)> {
    let ((ln, ld), (hn, hd)) = central_gamma_stability_range_rational(n)?;
    Ok((ln as f64 / ld as f64, hn as f64 / hd as f64))
}

/// The range endpoints as exact fractions `((lo_num, lo_den), (hi_num, hi_den))`.
pub fn central_gamma_stability_range_rational(n: u32) -> Result<((i64, i64), (i64, i64))> {
    if n < 4 {
        return Err(Error::InvalidOrder { n: n as i64 });
    }
    let n = n as i64;
    let c = if n % 2 == 1 { 17 } else { 16 };
    Ok(((n * n - 10 * n + c, 16), ((n - 2) * (n - 2), 4)))
}

/// Exact-arithmetic membership test `lo < γ_N < hi` for the tuned central
/// intensity (i128 cross-multiplication; no rounding anywhere).
pub fn tuned_gamma_in_range(n: u32) -> Result<bool> {
    let (gn, gd) = central_gamma_rational(n)?;
    let ((ln, ld), (hn, hd)) = central_gamma_stability_range_rational(n)?;
    let (gn, gd, ln, ld, hn, hd) = (
        gn as i128, gd as i128, ln as i128, ld as i128, hn as i128, hd as i128,
    );
    // Denominators are positive, so the inequalities cross-multiply directly.
    Ok(ln * gd < gn * ld && gn * hd < hn * gd)
}

/// Eigen-decomposition with eigenvectors by shifted inverse iteration.
///
/// Returns `(eigenvalues, eigenvector condition number)`. Repeated
/// eigenvalues are handled by re-orthogonalizing each iterate against the
/// vectors already found in its cluster; a defective cluster then shows up
/// as a huge condition number, which is precisely the degeneracy signal the
/// classification consumes.
fn eigen_analysis(m: &DMatrix<f64>) -> (Vec<C64>, f64) {
    let dim = m.nrows();
    let mut eigs: Vec<C64> = m.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| {
        (a.im, a.re)
            .partial_cmp(&(b.im, b.re))
            .expect("finite eigenvalues")
    });
    let rho = eigs.iter().fold(0.0f64, |acc, l| acc.max(l.norm()));
    let scale = if rho > 0.0 { rho } else { 1.0 };

    let mc: DMatrix<C64> = m.map(|x| C64::new(x, 0.0));
    let mut vectors: Vec<DVector<C64>> = Vec::with_capacity(dim);
    for (k, lam) in eigs.iter().enumerate() {
        // Members of the same eigenvalue cluster, found so far.
        let cluster: Vec<usize> = (0..k)
            .filter(|&j| (eigs[j] - lam).norm() <= 1e-6 * scale)
            .collect();
        let v = inverse_iteration(&mc, *lam, scale, &cluster, &vectors);
        vectors.push(v);
    }

    let mut vmat = DMatrix::<C64>::zeros(dim, dim);
    for (k, v) in vectors.iter().enumerate() {
        vmat.set_column(k, v);
    }
    (eigs, hermitian_gram_condition(&vmat))
}

/// One eigenvector by inverse iteration with the shift jittered off exact
/// singularity, re-orthogonalized against its cluster every sweep.
fn inverse_iteration(
    mc: &DMatrix<C64>,
    lam: C64,
    scale: f64,
    cluster: &[usize],
    found: &[DVector<C64>],
) -> DVector<C64> {
    let dim = mc.nrows();
    // Deterministic start vector, decorrelated across calls by the shift.
    let mut v = DVector::<C64>::from_fn(dim, |i, _| {
        let t = (i as f64 + 1.0) * 0.7390851332151607 + lam.im * 13.0 + lam.re * 7.0;
        C64::new(t.sin(), (1.3 * t).cos())
    });
    normalize(&mut v);

    for jitter in 0..4 {
        let shift = lam + C64::new(1e-12 * scale * (1 << jitter) as f64, 0.0);
        let mut a = mc.clone();
        for i in 0..dim {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut ok = true;
        for _ in 0..4 {
            let Some(mut w) = lu.solve(&v) else {
                ok = false;
                break;
            };
            for &j in cluster {
                let proj = found[j].dotc(&w);
                w -= &found[j] * proj;
            }
            let n = w.norm();
            if !(n.is_finite() && n > 0.0) {
                ok = false;
                break;
            }
            w /= C64::new(n, 0.0);
            v = w;
        }
        if ok {
            return v;
        }
    }
    v
}

fn normalize(v: &mut DVector<C64>) {
    let n = v.norm();
    if n > 0.0 {
        *v /= C64::new(n, 0.0);
    }
}

/// Condition number of a complex matrix via its Hermitian Gram matrix,
/// embedded as a real symmetric matrix (eigenvalues of `VᴴV` are the squared
/// singular values of `V`).
fn hermitian_gram_condition(v: &DMatrix<C64>) -> f64 {
    let g = v.adjoint() * v;
    let dim = g.nrows();
    let mut real = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        for j in 0..dim {
            let e = g[(i, j)];
            real[(i, j)] = e.re;
            real[(i, j + dim)] = -e.im;
            real[(i + dim, j)] = e.im;
            real[(i + dim, j + dim)] = e.re;
        }
    }
    let eig = real.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for l in eig.eigenvalues.iter() {
        lo = lo.min(*l);
        hi = hi.max(*l);
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).sqrt()
    }
}

/// Runs the whole pipeline: stability matrix, splitting, restriction,
/// spectrum, condition, classification, and the 2×2 `S|_V` block.
pub fn restricted_spectrum(spec: &CrystalSpec) -> Result<StabilityReport> {
    let s = stability_matrix(spec)?;
    let split = subspace_split(spec)?;
    let gamma = spec.intensities().to_vec();
    let m2 = 2 * spec.effective_n();
    let dim = split.dim_v_perp();

    // Restricted matrix M = Bᵀ S B in the orthonormal V⊥ basis, plus the
    // invariance certificate (V-component of S·Y must vanish).
    let mut b = DMatrix::<f64>::zeros(m2, dim);
    for (k, y) in split.v_perp_basis.iter().enumerate() {
        let flat = y.to_flat();
        for r in 0..m2 {
            b[(r, k)] = flat[r];
        }
    }
    let sb = &s * &b;
    let m = b.transpose() * &sb;

    let mut invariance_residual = 0.0f64;
    for k in 0..dim {
        let sy = PhaseVector::from_flat(sb.column(k).as_slice());
        let (a, bb) = split.v_coordinates(&sy, &gamma);
        let mut vpart = split.v_basis[0].scaled(a);
        vpart.axpy(bb, &split.v_basis[1]);
        invariance_residual = invariance_residual.max(vpart.euclidean_norm());
    }

    // S restricted to V in the basis (Z*, JZ*).
    let mut s_on_v = [[0.0; 2]; 2];
    for (col, basis_vec) in split.v_basis.iter().enumerate() {
        let flat = basis_vec.to_flat();
        let sx = &s * DVector::from_vec(flat);
        let sx = PhaseVector::from_flat(sx.as_slice());
        let (a, bb) = split.v_coordinates(&sx, &gamma);
        s_on_v[0][col] = a;
        s_on_v[1][col] = bb;
    }

    let (eigs, eigenbasis_condition) = eigen_analysis(&m);
    let spectral_radius = eigs.iter().fold(0.0f64, |acc, l| acc.max(l.norm()));
    let max_real_part = eigs.iter().fold(f64::NEG_INFINITY, |acc, l| acc.max(l.re));
    let scale = if spectral_radius > 0.0 {
        spectral_radius
    } else {
        1.0
    };

    let classification = if max_real_part > UNSTABLE_REAL_TOL * scale {
        Classification::Unstable
    } else if max_real_part.abs() <= STABLE_REAL_TOL * scale
        && eigenbasis_condition <= EIGENBASIS_CONDITION_LIMIT
    {
        Classification::Stable
    } else {
        Classification::Degenerate
    };

    let (range_lo, range_hi) = central_gamma_stability_range(spec.n())?;
    let gc = spec.gamma_center();
    Ok(StabilityReport {
        n: spec.n(),
        effective_n: spec.effective_n(),
        gamma_center: gc,
        intensities: gamma,
        nu_physical: spec.nu_physical(),
        nu_s: -spec.nu_physical(),
        spectrum: eigs.iter().map(|l| [l.re, l.im]).collect(),
        max_real_part,
        spectral_radius,
        eigenbasis_condition,
        s_on_v,
        invariance_residual,
        gamma_sum: gamma_product_sum(spec.intensities()),
        range_lo,
        range_hi,
        in_range: gc > range_lo && gc < range_hi,
        dim_v: split.dim_v(),
        dim_v_perp: split.dim_v_perp(),
        classification,
    })
}
