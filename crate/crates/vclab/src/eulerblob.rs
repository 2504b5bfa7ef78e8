//! Desk-scale 2D Euler solver by the regularized vortex-particle method.
//!
//! A [`ParticleField`] carries point particles grouped into blobs, one blob
//! per vortex of a [`CrystalSpec`]. Each blob starts as a uniform vortex
//! patch of radius ε discretized on a seeded sunflower point set; particles
//! are advected in the field
//!
//! ```text
//! u(x) = Σ_p w_p K_δ(x − x_p),   K_δ(x) = x⊥ / (2π (|x|² + δ²)),
//! ```
//!
//! with the Krasny-style algebraic regularization `δ = 0.5·ε/√P` (about one
//! inter-particle spacing). [`evolve`] advances the field with the classic
//! 4th-order one-step scheme and records every confinement diagnostic:
//! per-blob centers, second moments, support radii, mass tails, deviation
//! from the exact rigidly rotating point-vortex shadow, impulses, and an
//! optional exterior-field Lipschitz probe.
//!
//! ## Determinism
//!
//! Velocity evaluation parallelizes over *targets* only; the inner particle
//! sum runs in a fixed lane-blocked order independent of the worker count,
//! so reruns with the same inputs are bitwise identical.

use crate::crystal::CrystalSpec;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::kernel::INV_TWO_PI;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Golden angle `2π(1 − 1/φ)` used by the sunflower particle layout.
pub const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Safety factor of the step-size guard `dt ≤ 0.2·δ/v_max`.
pub const CFL_SAFETY: f64 = 0.2;

/// Minimum particles per blob accepted by [`make_initial_blobs`].
pub const MIN_PARTICLES_PER_BLOB: usize = 16;

/// Ratio of the regularization length to `ε/√P`.
pub const DELTA_FACTOR: f64 = 0.5;

/// One blob's bookkeeping: the point-vortex position it shadows and its
/// total circulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobMeta {
    pub center: Vec2,
    pub intensity: f64,
}

/// Particle discretization of a multi-blob vorticity field (structure of
/// arrays; particles are stored blob-contiguously).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleField {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ws: Vec<f64>,
    blob_ranges: Vec<(usize, usize)>,
    blobs: Vec<BlobMeta>,
    epsilon: f64,
    delta: f64,
}

impl ParticleField {
    /// One exact point particle per vortex: circulation `γ_i` at `z_i`,
    /// no spread (`ε = 0`) and no regularization (`δ = 0`). This is the
    /// "exact sources" limit used by kernel checks and the Lipschitz probe.
    pub fn point_vortices(spec: &CrystalSpec) -> ParticleField {
        let centers = spec.positions();
        let gammas = spec.intensities();
        let m = gammas.len();
        ParticleField {
            xs: (0..m).map(|i| centers.block(i).x).collect(),
            ys: (0..m).map(|i| centers.block(i).y).collect(),
            ws: gammas.to_vec(),
            blob_ranges: (0..m).map(|i| (i, i + 1)).collect(),
            blobs: (0..m)
                .map(|i| BlobMeta {
                    center: centers.block(i),
                    intensity: gammas[i],
                })
                .collect(),
            epsilon: 0.0,
            delta: 0.0,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.xs.len()
    }

    pub fn n_blobs(&self) -> usize {
        self.blobs.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Rigidly translates every particle and blob center.
    pub fn translate(&mut self, a: Vec2) {
        for x in self.xs.iter_mut() {
            *x += a.x;
        }
        for y in self.ys.iter_mut() {
            *y += a.y;
        }
        for b in self.blobs.iter_mut() {
            b.center += a;
        }
    }

    /// Same particles with a different regularization length (a lab knob
    /// for kernel-consistency experiments; evolution requires `δ > 0`).
    pub fn with_regularization(mut self, delta: f64) -> Result<ParticleField> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("{delta} (must be finite and nonnegative)"),
            });
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn blobs(&self) -> &[BlobMeta] {
        &self.blobs
    }

    pub fn blob_range(&self, i: usize) -> (usize, usize) {
        self.blob_ranges[i]
    }

    /// Iterates `(position, circulation, blob_index)` over all particles.
    pub fn particles(&self) -> impl Iterator<Item = (Vec2, f64, usize)> + '_ {
        (0..self.n_particles()).map(move |p| {
            let blob = self
                .blob_ranges
                .iter()
                .position(|&(s, e)| p >= s && p < e)
                .expect("particle belongs to a blob");
            (Vec2::new(self.xs[p], self.ys[p]), self.ws[p], blob)
        })
    }

    /// Per-blob circulation sums (exact by construction).
    pub fn blob_circulations(&self) -> Vec<f64> {
        self.blob_ranges
            .iter()
            .map(|&(s, e)| self.ws[s..e].iter().sum())
            .collect()
    }

    fn positions_of(&self, range: (usize, usize)) -> impl Iterator<Item = Vec2> + '_ {
        (range.0..range.1).map(move |p| Vec2::new(self.xs[p], self.ys[p]))
    }
}

/// Builds the initial data: one uniform patch `ω = γ_i/(πε²)` on `D(z_i, ε)`
/// per vortex, discretized on a seeded sunflower (golden-angle spiral) point
/// set with equal circulations, renormalized so each blob's sum is exactly
/// `γ_i`.
///
/// # Errors
/// - `ε` not in `(0, d_min/2)` where `d_min` is the minimum pairwise
///   distance of the vortex positions (blobs must stay disjoint);
/// - fewer than [`MIN_PARTICLES_PER_BLOB`] particles per blob.
pub fn make_initial_blobs(
    spec: &CrystalSpec,
    epsilon: f64,
    particles_per_blob: usize,
    seed: u64,
) -> Result<ParticleField> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be positive and finite, got {epsilon}"),
        });
    }
    if particles_per_blob < MIN_PARTICLES_PER_BLOB {
        return Err(Error::InvalidParameter {
            name: "particles_per_blob",
            reason: format!(
                "need at least {MIN_PARTICLES_PER_BLOB}, got {particles_per_blob}"
            ),
        });
    }
    let config = spec.configuration();
    if config.n() >= 2 {
        let d_min = config.min_pairwise_distance();
        if epsilon >= 0.5 * d_min {
            return Err(Error::BlobOverlap {
                eps: epsilon,
                max_eps: 0.5 * d_min,
            });
        }
    }

    let p = particles_per_blob;
    let delta = DELTA_FACTOR * epsilon / (p as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.effective_n();
    let mut xs = Vec::with_capacity(m * p);
    let mut ys = Vec::with_capacity(m * p);
    let mut ws = Vec::with_capacity(m * p);
    let mut blob_ranges = Vec::with_capacity(m);
    let mut blobs = Vec::with_capacity(m);

    for i in 0..m {
        let center = spec.positions().block(i);
        let gamma = spec.intensities()[i];
        let theta0 = rng.gen::<f64>() * TAU;
        let start = xs.len();
        for k in 0..p {
            let r = epsilon * (((k as f64) + 0.5) / p as f64).sqrt();
            let theta = theta0 + (k as f64) * GOLDEN_ANGLE;
            xs.push(center.x + r * theta.cos());
            ys.push(center.y + r * theta.sin());
        }
        // Equal weights with the last one set so the blob sum is exactly γ
        // (the partial sum is within a factor two of γ, so the subtraction
        // is exact and the running total lands on γ without rounding).
        let w = gamma / p as f64;
        let mut partial = 0.0;
        for _ in 0..p - 1 {
            ws.push(w);
            partial += w;
        }
        ws.push(gamma - partial);
        blob_ranges.push((start, xs.len()));
        blobs.push(BlobMeta {
            center,
            intensity: gamma,
        });
    }

    Ok(ParticleField {
        xs,
        ys,
        ws,
        blob_ranges,
        blobs,
        epsilon,
        delta,
    })
}

// ---------------------------------------------------------------------------
// Velocity evaluation
// ---------------------------------------------------------------------------

/// Velocity at one target from all sources, regularization strictly
/// positive. Eight independent accumulator lanes keep the sum in a fixed,
/// worker-count-independent order while letting the compiler vectorize.
#[inline]
fn velocity_at(xs: &[f64], ys: &[f64], ws: &[f64], d2: f64, xt: f64, yt: f64) -> (f64, f64) {
    debug_assert!(d2 > 0.0);
    const LANES: usize = 8;
    let n = xs.len();
    let nb = n - n % LANES;
    let mut au = [0.0f64; LANES];
    let mut av = [0.0f64; LANES];
    let (xh, xr) = xs.split_at(nb);
    let (yh, yr) = ys.split_at(nb);
    let (wh, wr) = ws.split_at(nb);
    for ((xc, yc), wc) in xh
        .chunks_exact(LANES)
        .zip(yh.chunks_exact(LANES))
        .zip(wh.chunks_exact(LANES))
    {
        for l in 0..LANES {
            let dx = xt - xc[l];
            let dy = yt - yc[l];
            let r2 = dx * dx + dy * dy + d2;
            let s = wc[l] / r2;
            au[l] -= s * dy;
            av[l] += s * dx;
        }
    }
    for l in 0..xr.len() {
        let dx = xt - xr[l];
        let dy = yt - yr[l];
        let r2 = dx * dx + dy * dy + d2;
        let s = wr[l] / r2;
        au[l] -= s * dy;
        av[l] += s * dx;
    }
    let u: f64 = au.iter().sum();
    let v: f64 = av.iter().sum();
    (u * INV_TWO_PI, v * INV_TWO_PI)
}

/// Velocity at one target with `δ = 0`: exact singular kernel, coincident
/// source-target pairs skipped (a point vortex does not advect itself).
#[inline]
fn velocity_at_singular(xs: &[f64], ys: &[f64], ws: &[f64], xt: f64, yt: f64) -> (f64, f64) {
    let mut u = 0.0;
    let mut v = 0.0;
    for p in 0..xs.len() {
        let dx = xt - xs[p];
        let dy = yt - ys[p];
        let r2 = dx * dx + dy * dy;
        if r2 > 0.0 {
            let s = ws[p] / r2;
            u -= s * dy;
            v += s * dx;
        }
    }
    (u * INV_TWO_PI, v * INV_TWO_PI)
}

fn all_velocities(
    xs: &[f64],
    ys: &[f64],
    ws: &[f64],
    delta: f64,
    tx: &[f64],
    ty: &[f64],
    out_u: &mut [f64],
    out_v: &mut [f64],
) {
    let d2 = delta * delta;
    out_u
        .par_iter_mut()
        .zip(out_v.par_iter_mut())
        .enumerate()
        .for_each(|(i, (u, v))| {
            let (a, b) = if d2 > 0.0 {
                velocity_at(xs, ys, ws, d2, tx[i], ty[i])
            } else {
                velocity_at_singular(xs, ys, ws, tx[i], ty[i])
            };
            *u = a;
            *v = b;
        });
}

/// Self-advection velocities (targets are the sources themselves) by a
/// symmetric Newton's-third-law sweep: each unordered pair is visited once
/// and its antisymmetric contribution applied to both endpoints, halving
/// the divisions relative to the per-target loop. The sweep is a single
/// fixed-order pass, so it is bitwise reproducible independent of worker
/// count by construction.
fn self_velocities(
    xs: &[f64],
    ys: &[f64],
    ws: &[f64],
    delta: f64,
    out_u: &mut [f64],
    out_v: &mut [f64],
) {
    const LANES: usize = 8;
    let d2 = delta * delta;
    debug_assert!(d2 > 0.0);
    let n = xs.len();
    out_u.fill(0.0);
    out_v.fill(0.0);
    for i in 0..n {
        let xi = xs[i];
        let yi = ys[i];
        let wi = ws[i];
        let mut au = [0.0f64; LANES];
        let mut av = [0.0f64; LANES];
        let first = i + 1;
        let (_, ut) = out_u.split_at_mut(first);
        let (_, vt) = out_v.split_at_mut(first);
        let mut cu = ut.chunks_exact_mut(LANES);
        let mut cv = vt.chunks_exact_mut(LANES);
        let mut cx = xs[first..].chunks_exact(LANES);
        let mut cy = ys[first..].chunks_exact(LANES);
        let mut cw = ws[first..].chunks_exact(LANES);
        for ((((bu, bv), bx), by), bw) in (&mut cu)
            .zip(&mut cv)
            .zip(&mut cx)
            .zip(&mut cy)
            .zip(&mut cw)
        {
            for l in 0..LANES {
                let dx = xi - bx[l];
                let dy = yi - by[l];
                let inv = 1.0 / (dx * dx + dy * dy + d2);
                let sj = bw[l] * inv;
                au[l] -= sj * dy;
                av[l] += sj * dx;
                let si = wi * inv;
                bu[l] += si * dy;
                bv[l] -= si * dx;
            }
        }
        for ((((bu, bv), &px), &py), &pw) in cu
            .into_remainder()
            .iter_mut()
            .zip(cv.into_remainder())
            .zip(cx.remainder())
            .zip(cy.remainder())
            .zip(cw.remainder())
        {
            let dx = xi - px;
            let dy = yi - py;
            let inv = 1.0 / (dx * dx + dy * dy + d2);
            let sj = pw * inv;
            au[0] -= sj * dy;
            av[0] += sj * dx;
            let si = wi * inv;
            *bu += si * dy;
            *bv -= si * dx;
        }
        let u: f64 = au.iter().sum();
        let v: f64 = av.iter().sum();
        out_u[i] += u;
        out_v[i] += v;
    }
    for x in out_u.iter_mut() {
        *x *= INV_TWO_PI;
    }
    for x in out_v.iter_mut() {
        *x *= INV_TWO_PI;
    }
}

/// Direct summation of the regularized field at arbitrary targets.
pub fn field_velocity(f: &ParticleField, targets: &[Vec2]) -> Vec<Vec2> {
    let tx: Vec<f64> = targets.iter().map(|t| t.x).collect();
    let ty: Vec<f64> = targets.iter().map(|t| t.y).collect();
    let mut u = vec![0.0; targets.len()];
    let mut v = vec![0.0; targets.len()];
    all_velocities(&f.xs, &f.ys, &f.ws, f.delta, &tx, &ty, &mut u, &mut v);
    u.into_iter().zip(v).map(|(a, b)| Vec2::new(a, b)).collect()
}

// ---------------------------------------------------------------------------
// Per-blob diagnostics
// ---------------------------------------------------------------------------

/// Discrete blob moments at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobMoments {
    /// Center `b_i = Σ w_p x_p / γ_i`.
    pub center: Vec2,
    /// Second moment `I_i = Σ w_p |x_p − b_i|² / γ_i`.
    pub second_moment: f64,
    /// Support radius `R_i = max_p |x_p − b_i|`.
    pub support_radius: f64,
}

/// Centers, second moments, and support radii of every blob.
pub fn blob_moments(f: &ParticleField) -> Vec<BlobMoments> {
    f.blob_ranges
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| {
            let gamma = f.blobs[i].intensity;
            let mut b = Vec2::ZERO;
            for p in s..e {
                b += Vec2::new(f.xs[p], f.ys[p]) * f.ws[p];
            }
            b = b * (1.0 / gamma);
            let mut second = 0.0;
            let mut radius = 0.0f64;
            for p in s..e {
                let d = Vec2::new(f.xs[p] - b.x, f.ys[p] - b.y);
                second += f.ws[p] * d.norm_sq();
                radius = radius.max(d.norm());
            }
            BlobMoments {
                center: b,
                second_moment: second / gamma,
                support_radius: radius,
            }
        })
        .collect()
}

/// Fraction of blob `i`'s (absolute) circulation farther than `r` from its
/// current center.
pub fn mass_tail(f: &ParticleField, i: usize, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "r",
            reason: format!("tail radius must be nonnegative, got {r}"),
        });
    }
    if i >= f.n_blobs() {
        return Err(Error::InvalidParameter {
            name: "i",
            reason: format!("blob index {i} out of range 0..{}", f.n_blobs()),
        });
    }
    let b = blob_moments(f)[i].center;
    let (s, e) = f.blob_ranges[i];
    let mut tail = 0.0;
    for p in s..e {
        if (Vec2::new(f.xs[p], f.ys[p]) - b).norm() > r {
            tail += f.ws[p].abs();
        }
    }
    Ok(tail / f.blobs[i].intensity.abs())
}

/// Exterior-field Lipschitz probe for blob `i`: the field
/// `F_i(x) = Σ_{p ∉ blob i} w_p K(x − x_p)` (exact kernel — arguments stay
/// far from those sources) is sampled on `n_samples` seeded antipodal pairs
/// `x, y = 2b_i − x` in `D(b_i, radius)`, and the largest difference
/// quotient `|F_i(x) − F_i(y)|/|x − y|` is returned.
///
/// Antipodal pairs cancel the even-order terms of `F_i`'s Taylor expansion
/// at `b_i`, so the quotient isolates the linear (strain) term: it vanishes
/// like `radius²` when the strain does, and reproduces the strain norm when
/// it does not.
pub fn exterior_lipschitz_probe(
    f: &ParticleField,
    spec: &CrystalSpec,
    i: usize,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    if i >= f.n_blobs() {
        return Err(Error::InvalidParameter {
            name: "i",
            reason: format!("blob index {i} out of range 0..{}", f.n_blobs()),
        });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter {
            name: "radius",
            reason: format!("must be positive, got {radius}"),
        });
    }
    let config = spec.configuration();
    if config.n() >= 2 {
        let d_min = config.min_pairwise_distance();
        if radius >= 0.5 * d_min {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!(
                    "must stay below half the minimum vortex separation {:.3e}",
                    0.5 * d_min
                ),
            });
        }
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: "need at least one sample pair".into(),
        });
    }

    // Sources: every particle outside blob i.
    let (bs, be) = f.blob_ranges[i];
    let mut sx = Vec::with_capacity(f.n_particles() - (be - bs));
    let mut sy = Vec::with_capacity(sx.capacity());
    let mut sw = Vec::with_capacity(sx.capacity());
    for p in (0..bs).chain(be..f.n_particles()) {
        sx.push(f.xs[p]);
        sy.push(f.ys[p]);
        sw.push(f.ws[p]);
    }
    if sx.is_empty() {
        return Ok(0.0);
    }
    let b = blob_moments(f)[i].center;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_samples {
        let r = radius * rng.gen::<f64>().sqrt();
        let theta = rng.gen::<f64>() * TAU;
        let offset = Vec2::from_angle(theta) * r;
        if offset.norm() == 0.0 {
            continue;
        }
        let x = b + offset;
        let y = b - offset;
        let (ux, vx) = velocity_at_singular(&sx, &sy, &sw, x.x, x.y);
        let (uy, vy) = velocity_at_singular(&sx, &sy, &sw, y.x, y.y);
        let diff = Vec2::new(ux - uy, vx - vy).norm();
        worst = worst.max(diff / (2.0 * offset.norm()));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Evolution
// ---------------------------------------------------------------------------

/// Optional per-sample Lipschitz-probe settings for [`evolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub n_samples: usize,
    pub radius: f64,
    pub seed: u64,
}

/// Evolution parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Diagnostics are recorded at step 0, every `sample_every` steps, and
    /// at the final step.
    pub sample_every: usize,
    /// Mass-tail radii `(r1, r2)`; defaults to `(ε/2, ε)` when `None`.
    pub tail_radii: Option<(f64, f64)>,
    pub probe: Option<ProbeSettings>,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_final: f64) -> EvolveOptions {
        EvolveOptions {
            dt,
            t_final,
            sample_every: 100,
            tail_radii: None,
            probe: None,
        }
    }

    pub fn sampling(mut self, every: usize) -> EvolveOptions {
        self.sample_every = every;
        self
    }

    pub fn with_probe(mut self, probe: ProbeSettings) -> EvolveOptions {
        self.probe = Some(probe);
        self
    }
}

/// Time series of every confinement diagnostic, sampled along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    /// Per sample, per blob: center `b_i`.
    pub centers: Vec<Vec<Vec2>>,
    /// Per sample, per blob: second moment `I_i`.
    pub second_moments: Vec<Vec<f64>>,
    /// Per sample, per blob: support radius `R_i`.
    pub support_radii: Vec<Vec<f64>>,
    /// Per sample, per blob: mass tails at the two configured radii.
    pub tails: Vec<Vec<[f64; 2]>>,
    pub tail_radii: (f64, f64),
    /// Per sample: `max_i |b_i(t) − z_i*(t)|` against the exact rigidly
    /// rotating shadow (block-max norm).
    pub max_center_dev: Vec<f64>,
    /// Per sample, per blob: `max_p |x_p − z_i*(t)|` — the support's
    /// distance to the shadow center, which confinement thresholds consume.
    pub support_dev: Vec<Vec<f64>>,
    /// Per sample: worst exterior Lipschitz probe over blobs, when enabled.
    pub lipschitz_probe: Option<Vec<f64>>,
    /// Per sample: total circulation `Σ w_p`.
    pub circulation_total: Vec<f64>,
    /// Per sample: linear impulse `Σ w_p x_p`.
    pub linear_impulse: Vec<Vec2>,
    /// Per sample: angular impulse `Σ w_p |x_p|²`.
    pub angular_impulse: Vec<f64>,
    pub epsilon: f64,
}

impl DiagnosticsSeries {
    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    pub fn n_blobs(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("series has samples")
    }

    /// Per-sample confinement flags: `true` when every blob's support lies
    /// inside `D(z_i*(t), ε^β)`.
    pub fn confined_flags(&self, beta: f64) -> Vec<bool> {
        let threshold = self.epsilon.powf(beta);
        self.support_dev
            .iter()
            .map(|per_blob| per_blob.iter().all(|&d| d <= threshold))
            .collect()
    }

    /// CSV export: `t`, then per blob `bx_i, by_i, I_i, R_i, tail_i@r1,
    /// tail_i@r2`, then `max_center_dev`, the optional `lipschitz_probe`,
    /// `circ_total`, `Px`, `Py`, `L`. Floats print in round-trip precision.
    pub fn to_csv(&self) -> String {
        let m = self.n_blobs();
        let mut out = String::new();
        out.push('t');
        for i in 1..=m {
            out.push_str(&format!(
                ",bx_{i},by_{i},I_{i},R_{i},tail_{i}@r1,tail_{i}@r2"
            ));
        }
        out.push_str(",max_center_dev");
        if self.lipschitz_probe.is_some() {
            out.push_str(",lipschitz_probe");
        }
        out.push_str(",circ_total,Px,Py,L\n");
        for s in 0..self.n_samples() {
            out.push_str(&format!("{}", self.times[s]));
            for i in 0..m {
                let b = self.centers[s][i];
                let tail = self.tails[s][i];
                out.push_str(&format!(
                    ",{},{},{},{},{},{}",
                    b.x,
                    b.y,
                    self.second_moments[s][i],
                    self.support_radii[s][i],
                    tail[0],
                    tail[1]
                ));
            }
            out.push_str(&format!(",{}", self.max_center_dev[s]));
            if let Some(probe) = &self.lipschitz_probe {
                out.push_str(&format!(",{}", probe[s]));
            }
            let p = self.linear_impulse[s];
            out.push_str(&format!(
                ",{},{},{},{}\n",
                self.circulation_total[s], p.x, p.y, self.angular_impulse[s]
            ));
        }
        out
    }
}

/// First-exit summary for one confinement threshold `ε^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementResult {
    pub beta: f64,
    pub horizon: f64,
    /// First sampled time at which any blob's support leaves
    /// `D(z_i*(t), ε^β)`, or the horizon if none does.
    pub tau_estimate: f64,
    pub exited_blob: Option<usize>,
}

impl ConfinementResult {
    pub fn confined(&self) -> bool {
        self.exited_blob.is_none()
    }
}

/// The step-size ceiling `0.2·δ/v_max` that [`evolve`] enforces, where
/// `v_max` is the largest blob-center speed of the regularized field in its
/// current state. Infinite for a field at rest.
///
/// # Errors
/// [`Error::InvalidParameter`] when the field has no regularization.
pub fn cfl_bound(field: &ParticleField) -> Result<f64> {
    if !(field.delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "evolution requires a positive regularization length".into(),
        });
    }
    let centers: Vec<Vec2> = blob_moments(field).iter().map(|m| m.center).collect();
    let v_max = field_velocity(field, &centers)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.norm()));
    Ok(if v_max > 0.0 {
        CFL_SAFETY * field.delta / v_max
    } else {
        f64::INFINITY
    })
}

/// Scans a diagnostics series for the first exit from the `ε^β` disks.
pub fn confinement_time(
    series: &DiagnosticsSeries,
    epsilon: f64,
    beta: f64,
) -> Result<ConfinementResult> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("confinement exponent must lie in (0, 1/2), got {beta}"),
        });
    }
    let threshold = epsilon.powf(beta);
    let horizon = series.final_time();
    for s in 0..series.n_samples() {
        for (i, &d) in series.support_dev[s].iter().enumerate() {
            if d > threshold {
                return Ok(ConfinementResult {
                    beta,
                    horizon,
                    tau_estimate: series.times[s],
                    exited_blob: Some(i),
                });
            }
        }
    }
    Ok(ConfinementResult {
        beta,
        horizon,
        tau_estimate: horizon,
        exited_blob: None,
    })
}

/// Advances the field with fixed-step 4th-order integration of the
/// regularized velocity and records diagnostics. The input is treated as
/// `t = 0` data; the comparison trajectory is the exact rigid rotation of
/// the spec's vortex positions at its angular velocity.
///
/// # Errors
/// - `dt` nonpositive, `t_final < dt`, or `sample_every = 0`;
/// - zero regularization (point fields are not evolvable);
/// - the step-size guard `dt ≤ 0.2·δ/v_max` fails, with `v_max` the largest
///   blob-center speed at `t = 0`;
/// - non-finite positions during the run.
pub fn evolve(
    field: &ParticleField,
    spec: &CrystalSpec,
    opts: &EvolveOptions,
) -> Result<(DiagnosticsSeries, ParticleField)> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive and finite, got {}", opts.dt),
        });
    }
    if !(opts.t_final >= opts.dt) {
        return Err(Error::InvalidParameter {
            name: "t_final",
            reason: format!("must be at least dt, got {}", opts.t_final),
        });
    }
    if opts.sample_every == 0 {
        return Err(Error::InvalidParameter {
            name: "sample_every",
            reason: "must be positive".into(),
        });
    }
    if !(field.delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "evolution requires a positive regularization length".into(),
        });
    }

    // Step-size guard against the macroscopic field at t = 0.
    let dt_max = cfl_bound(field)?;
    if opts.dt > dt_max {
        return Err(Error::CflViolation {
            dt: opts.dt,
            dt_max,
        });
    }

    let n = field.n_particles();
    // Round up so the horizon is actually reached (confinement verdicts
    // must not silently stop one step short of the requested time).
    let n_steps = ((opts.t_final / opts.dt - 1e-9).ceil() as usize).max(1);
    let (r1, r2) = opts
        .tail_radii
        .unwrap_or((0.5 * field.epsilon, field.epsilon));

    let mut state = field.clone();
    let mut series = DiagnosticsSeries {
        times: Vec::new(),
        centers: Vec::new(),
        second_moments: Vec::new(),
        support_radii: Vec::new(),
        tails: Vec::new(),
        tail_radii: (r1, r2),
        max_center_dev: Vec::new(),
        support_dev: Vec::new(),
        lipschitz_probe: opts.probe.as_ref().map(|_| Vec::new()),
        circulation_total: Vec::new(),
        linear_impulse: Vec::new(),
        angular_impulse: Vec::new(),
        epsilon: field.epsilon,
    };

    record_sample(&mut series, &state, spec, 0.0, (r1, r2), opts.probe.as_ref())?;

    let mut u1 = vec![0.0; n];
    let mut v1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut v2 = vec![0.0; n];
    let mut u3 = vec![0.0; n];
    let mut v3 = vec![0.0; n];
    let mut u4 = vec![0.0; n];
    let mut v4 = vec![0.0; n];
    let mut tx = vec![0.0; n];
    let mut ty = vec![0.0; n];

    let dt = opts.dt;
    for step in 0..n_steps {
        {
            let f = &state;
            self_velocities(&f.xs, &f.ys, &f.ws, f.delta, &mut u1, &mut v1);
            shift(&f.xs, &u1, 0.5 * dt, &mut tx);
            shift(&f.ys, &v1, 0.5 * dt, &mut ty);
            self_velocities(&tx, &ty, &f.ws, f.delta, &mut u2, &mut v2);
            shift(&f.xs, &u2, 0.5 * dt, &mut tx);
            shift(&f.ys, &v2, 0.5 * dt, &mut ty);
            self_velocities(&tx, &ty, &f.ws, f.delta, &mut u3, &mut v3);
            shift(&f.xs, &u3, dt, &mut tx);
            shift(&f.ys, &v3, dt, &mut ty);
            self_velocities(&tx, &ty, &f.ws, f.delta, &mut u4, &mut v4);
        }
        let w = dt / 6.0;
        for p in 0..n {
            state.xs[p] += w * (u1[p] + 2.0 * (u2[p] + u3[p]) + u4[p]);
            state.ys[p] += w * (v1[p] + 2.0 * (v2[p] + v3[p]) + v4[p]);
        }

        let t = (step + 1) as f64 * dt;
        if !state.xs.iter().chain(state.ys.iter()).all(|x| x.is_finite()) {
            return Err(Error::NumericalBlowup { time: t });
        }
        if (step + 1) % opts.sample_every == 0 || step + 1 == n_steps {
            record_sample(&mut series, &state, spec, t, (r1, r2), opts.probe.as_ref())?;
        }
    }

    Ok((series, state))
}

fn shift(base: &[f64], vel: &[f64], h: f64, out: &mut [f64]) {
    for i in 0..base.len() {
        out[i] = base[i] + h * vel[i];
    }
}

fn record_sample(
    series: &mut DiagnosticsSeries,
    state: &ParticleField,
    spec: &CrystalSpec,
    t: f64,
    tail_radii: (f64, f64),
    probe: Option<&ProbeSettings>,
) -> Result<()> {
    let moments = blob_moments(state);
    let shadow = spec.shadow_at(t);
    let m = state.n_blobs();

    let mut centers = Vec::with_capacity(m);
    let mut seconds = Vec::with_capacity(m);
    let mut radii = Vec::with_capacity(m);
    let mut tails = Vec::with_capacity(m);
    let mut support_dev = Vec::with_capacity(m);
    let mut center_dev = 0.0f64;
    for i in 0..m {
        centers.push(moments[i].center);
        seconds.push(moments[i].second_moment);
        radii.push(moments[i].support_radius);
        tails.push([
            mass_tail(state, i, tail_radii.0)?,
            mass_tail(state, i, tail_radii.1)?,
        ]);
        let z = shadow.block(i);
        center_dev = center_dev.max((moments[i].center - z).norm());
        let mut dev = 0.0f64;
        for pos in state.positions_of(state.blob_ranges[i]) {
            dev = dev.max((pos - z).norm());
        }
        support_dev.push(dev);
    }

    if let Some(cfg) = probe {
        let sample_idx = series.times.len() as u64;
        let mut worst = 0.0f64;
        for i in 0..m {
            worst = worst.max(exterior_lipschitz_probe(
                state,
                spec,
                i,
                cfg.n_samples,
                cfg.radius,
                cfg.seed ^ sample_idx.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            )?);
        }
        series
            .lipschitz_probe
            .as_mut()
            .expect("probe series allocated")
            .push(worst);
    }

    let circ: f64 = state.ws.iter().sum();
    let mut px = 0.0;
    let mut py = 0.0;
    let mut l = 0.0;
    for p in 0..state.n_particles() {
        px += state.ws[p] * state.xs[p];
        py += state.ws[p] * state.ys[p];
        l += state.ws[p] * (state.xs[p] * state.xs[p] + state.ys[p] * state.ys[p]);
    }

    series.times.push(t);
    series.centers.push(centers);
    series.second_moments.push(seconds);
    series.support_radii.push(radii);
    series.tails.push(tails);
    series.max_center_dev.push(center_dev);
    series.support_dev.push(support_dev);
    series.circulation_total.push(circ);
    series.linear_impulse.push(Vec2::new(px, py));
    series.angular_impulse.push(l);
    Ok(())
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Complete parameter record of a blob run; re-running from a manifest
/// reproduces the diagnostics bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub n: u32,
    pub gamma_center: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub dt: f64,
    pub particles_per_blob: usize,
    pub seed: u64,
    pub betas: Vec<f64>,
    pub horizon: f64,
    pub sample_every: usize,
    pub probe: Option<ProbeSettings>,
}

/// Rebuilds and re-runs the experiment a manifest describes. Returns the
/// crystal, the diagnostics, and the final particle state.
pub fn run_from_manifest(
    manifest: &RunManifest,
) -> Result<(CrystalSpec, DiagnosticsSeries, ParticleField)> {
    let spec = crate::crystal::build_crystal_with_gamma(manifest.n, manifest.gamma_center)?;
    let field = make_initial_blobs(
        &spec,
        manifest.epsilon,
        manifest.particles_per_blob,
        manifest.seed,
    )?;
    if (field.delta() - manifest.delta).abs() > 1e-15 * manifest.delta.abs().max(1.0) {
        return Err(Error::InvalidConfiguration {
            reason: format!(
                "manifest regularization {} does not match the derived value {}",
                manifest.delta,
                field.delta()
            ),
        });
    }
    let mut opts = EvolveOptions::new(manifest.dt, manifest.horizon).sampling(manifest.sample_every);
    opts.probe = manifest.probe.clone();
    let (series, final_field) = evolve(&field, &spec, &opts)?;
    Ok((spec, series, final_field))
}

// ---------------------------------------------------------------------------
// Tree-accelerated summation
// ---------------------------------------------------------------------------

/// Tree-accelerated evaluation of the regularized field: a quadtree over
/// the sources with per-node Taylor expansions of `K_δ` (via the rational
/// recurrence for `1/(|x|²+δ²)`), falling back to direct sums on near
/// leaves. Agrees with [`field_velocity`] to the expansion tolerance; used
/// as a cross-check path, not the default.
///
/// `order` is the Taylor truncation order (12–16 is ample at `theta ≤ 0.35`)
/// and `theta` the opening-angle threshold `r_cluster ≤ θ·distance`.
pub fn field_velocity_tree(
    f: &ParticleField,
    targets: &[Vec2],
    order: usize,
    theta: f64,
) -> Result<Vec<Vec2>> {
    if !(f.delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: "tree path requires a positive regularization length".into(),
        });
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("opening angle must lie in (0, 1), got {theta}"),
        });
    }
    if order < 2 || order > 24 {
        return Err(Error::InvalidParameter {
            name: "order",
            reason: format!("expansion order must lie in [2, 24], got {order}"),
        });
    }
    let tree = tree::Tree::build(&f.xs, &f.ys, &f.ws, order);
    Ok(targets
        .par_iter()
        .map(|t| tree.velocity_at(t.x, t.y, f.delta * f.delta, theta))
        .collect())
}

mod tree {
    use super::INV_TWO_PI;
    use crate::geom::Vec2;

    const LEAF_CAPACITY: usize = 24;

    /// Triangular index of `(i, j)` with `i + j ≤ L`, ordered by total
    /// degree then by `j`.
    #[inline]
    fn tri(i: usize, j: usize) -> usize {
        let s = i + j;
        s * (s + 1) / 2 + j
    }

    fn tri_len(max_degree: usize) -> usize {
        (max_degree + 1) * (max_degree + 2) / 2
    }

    struct Node {
        center: Vec2,
        radius: f64,
        start: usize,
        end: usize,
        children: Vec<usize>,
        /// Moment families `Σ w u₁^i u₂^j`, `Σ w u₁^{i+1} u₂^j`,
        /// `Σ w u₁^i u₂^{j+1}` in triangular layout up to `order + 1`.
        m0: Vec<f64>,
        mx: Vec<f64>,
        my: Vec<f64>,
    }

    pub struct Tree {
        nodes: Vec<Node>,
        px: Vec<f64>,
        py: Vec<f64>,
        pw: Vec<f64>,
        order: usize,
    }

    impl Tree {
        pub fn build(xs: &[f64], ys: &[f64], ws: &[f64], order: usize) -> Tree {
            let n = xs.len();
            let mut idx: Vec<usize> = (0..n).collect();
            let mut nodes = Vec::new();
            if n > 0 {
                build_node(xs, ys, &mut idx, 0, n, &mut nodes);
            }
            let px: Vec<f64> = idx.iter().map(|&p| xs[p]).collect();
            let py: Vec<f64> = idx.iter().map(|&p| ys[p]).collect();
            let pw: Vec<f64> = idx.iter().map(|&p| ws[p]).collect();
            let mut tree = Tree {
                nodes,
                px,
                py,
                pw,
                order,
            };
            tree.compute_moments();
            tree
        }

        fn compute_moments(&mut self) {
            let deg = self.order + 1;
            let len = tri_len(deg);
            for k in 0..self.nodes.len() {
                let (start, end, c) = {
                    let node = &self.nodes[k];
                    (node.start, node.end, node.center)
                };
                let mut m0 = vec![0.0; len];
                let mut mx = vec![0.0; len];
                let mut my = vec![0.0; len];
                let mut pu = vec![0.0; deg + 2];
                let mut pv = vec![0.0; deg + 2];
                for p in start..end {
                    let u = self.px[p] - c.x;
                    let v = self.py[p] - c.y;
                    let w = self.pw[p];
                    pu[0] = 1.0;
                    pv[0] = 1.0;
                    for d in 1..deg + 2 {
                        pu[d] = pu[d - 1] * u;
                        pv[d] = pv[d - 1] * v;
                    }
                    for s in 0..=deg {
                        for j in 0..=s {
                            let i = s - j;
                            let t = tri(i, j);
                            let base = w * pu[i] * pv[j];
                            m0[t] += base;
                            mx[t] += base * u;
                            my[t] += base * v;
                        }
                    }
                }
                self.nodes[k].m0 = m0;
                self.nodes[k].mx = mx;
                self.nodes[k].my = my;
            }
        }

        pub fn velocity_at(&self, xt: f64, yt: f64, d2: f64, theta: f64) -> Vec2 {
            if self.nodes.is_empty() {
                return Vec2::ZERO;
            }
            let deg = self.order;
            let mut coeff = vec![0.0; tri_len(deg)];
            let mut u = 0.0;
            let mut v = 0.0;
            let mut stack = vec![0usize];
            while let Some(k) = stack.pop() {
                let node = &self.nodes[k];
                let rx = xt - node.center.x;
                let ry = yt - node.center.y;
                let dist = (rx * rx + ry * ry).sqrt();
                if node.radius <= theta * dist {
                    let (du, dv) = self.far_field(node, rx, ry, d2, &mut coeff);
                    u += du;
                    v += dv;
                } else if node.children.is_empty() {
                    for p in node.start..node.end {
                        let dx = xt - self.px[p];
                        let dy = yt - self.py[p];
                        let r2 = dx * dx + dy * dy + d2;
                        let s = self.pw[p] / r2;
                        u -= s * dy;
                        v += s * dx;
                    }
                } else {
                    // Fixed child order keeps the accumulation deterministic.
                    for &c in node.children.iter().rev() {
                        stack.push(c);
                    }
                }
            }
            Vec2::new(u * INV_TWO_PI, v * INV_TWO_PI)
        }

        /// Taylor coefficients `c_{i,j}` of `G(h) = 1/(|R+h|² + δ²)` from
        /// the recurrence implied by `(|R+h|² + δ²)·G = 1`, then the three
        /// moment contractions that reassemble `Σ w K_δ(x − y_p)`.
        fn far_field(
            &self,
            node: &Node,
            rx: f64,
            ry: f64,
            d2: f64,
            coeff: &mut [f64],
        ) -> (f64, f64) {
            let deg = self.order;
            let a = rx * rx + ry * ry + d2;
            let inv_a = 1.0 / a;
            coeff[0] = inv_a;
            for s in 1..=deg {
                for j in 0..=s {
                    let i = s - j;
                    let mut acc = 0.0;
                    if i >= 1 {
                        acc += 2.0 * rx * coeff[tri(i - 1, j)];
                        if i >= 2 {
                            acc += coeff[tri(i - 2, j)];
                        }
                    }
                    if j >= 1 {
                        acc += 2.0 * ry * coeff[tri(i, j - 1)];
                        if j >= 2 {
                            acc += coeff[tri(i, j - 2)];
                        }
                    }
                    coeff[tri(i, j)] = -acc * inv_a;
                }
            }
            let mut s0 = 0.0;
            let mut sx = 0.0;
            let mut sy = 0.0;
            for s in 0..=deg {
                let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..=s {
                    let i = s - j;
                    let t = tri(i, j);
                    let c = sign * coeff[t];
                    s0 += c * node.m0[t];
                    sx += c * node.mx[t];
                    sy += c * node.my[t];
                }
            }
            (-(ry * s0 - sy), rx * s0 - sx)
        }
    }

    fn build_node(
        xs: &[f64],
        ys: &[f64],
        idx: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        debug_assert!(!idx.is_empty());
        debug_assert_eq!(idx.len(), end - start);
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &p in idx.iter() {
            min.x = min.x.min(xs[p]);
            min.y = min.y.min(ys[p]);
            max.x = max.x.max(xs[p]);
            max.y = max.y.max(ys[p]);
        }
        let center = (min + max) * 0.5;
        let radius = idx
            .iter()
            .map(|&p| (Vec2::new(xs[p], ys[p]) - center).norm())
            .fold(0.0f64, f64::max);
        let me = nodes.len();
        nodes.push(Node {
            center,
            radius,
            start,
            end,
            children: Vec::new(),
            m0: Vec::new(),
            mx: Vec::new(),
            my: Vec::new(),
        });

        let degenerate = (max.x - min.x).max(max.y - min.y) <= 0.0;
        if idx.len() > LEAF_CAPACITY && !degenerate {
            // Quadrant partition around the box center, stable within each
            // quadrant (deterministic layout).
            let quadrant = |p: usize| -> usize {
                let right = xs[p] >= center.x;
                let top = ys[p] >= center.y;
                (right as usize) | ((top as usize) << 1)
            };
            let mut buckets: [Vec<usize>; 4] = Default::default();
            for &p in idx.iter() {
                buckets[quadrant(p)].push(p);
            }
            let mut offset = 0;
            let mut children = Vec::new();
            let parts: Vec<(usize, usize)> = buckets
                .iter()
                .map(|b| {
                    let s = offset;
                    offset += b.len();
                    (s, offset)
                })
                .collect();
            let flat: Vec<usize> = buckets.concat();
            idx.copy_from_slice(&flat);
            for &(s, e) in parts.iter() {
                if e > s {
                    let child = build_node(
                        xs,
                        ys,
                        &mut idx[s..e],
                        start + s,
                        start + e,
                        nodes,
                    );
                    children.push(child);
                }
            }
            nodes[me].children = children;
        }
        me
    }
}
