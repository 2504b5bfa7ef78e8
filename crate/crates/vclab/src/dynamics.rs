//! The point-vortex system: velocity field, Hamiltonian structure, conserved
//! quantities, a fixed-step 4th-order integrator with a collapse guard, and
//! the forced perturbed-crystal experiment.
//!
//! ## The ODE
//!
//! Vortex `i` moves in the Biot–Savart field of the others:
//!
//! ```text
//! ż_i = Σ_{j≠i} γ_j K(z_i − z_j),          K(x) = x⊥/(2π|x|²).
//! ```
//!
//! With `H(Z) = (1/4π) Σ_{i≠j} γ_i γ_j ln|z_i − z_j|`, `Γ = diag(γ_i I₂)` and
//! `J` the blockwise quarter turn, the system is Hamiltonian: `Γ Ż = J ∇H(Z)`
//! exactly in this normalization.
//!
//! ## Rotating frame
//!
//! In a frame rotating counterclockwise at angular velocity `ν`, the field
//! becomes `ż = Σ γ_j K(z_i−z_j) − ν J Z`; a relative equilibrium rotating at
//! `ν` is a rest point of that field. (Published forms of the rotating-frame
//! equation differ by the sign bundled into ν; this crate fixes ν as the
//! physical counterclockwise rate and subtracts `ν J Z`.)

use crate::crystal::CrystalSpec;
use crate::error::{Error, Result};
use crate::geom::{PhaseVector, Vec2};
use crate::kernel::{kernel_unchecked, INV_TWO_PI};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Positions plus intensities: the full state of the point-vortex system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    positions: PhaseVector,
    intensities: Vec<f64>,
}

impl VortexConfiguration {
    /// Validates block counts, finiteness, nonzero intensities, and pairwise
    /// distinct positions.
    pub fn new(positions: PhaseVector, intensities: Vec<f64>) -> Result<Self> {
        if positions.len() != intensities.len() {
            return Err(Error::InvalidConfiguration {
                reason: format!(
                    "{} positions but {} intensities",
                    positions.len(),
                    intensities.len()
                ),
            });
        }
        if positions.is_empty() {
            return Err(Error::InvalidConfiguration {
                reason: "empty configuration".into(),
            });
        }
        if !positions.is_finite() {
            return Err(Error::InvalidConfiguration {
                reason: "non-finite position".into(),
            });
        }
        for (i, g) in intensities.iter().enumerate() {
            if !g.is_finite() || *g == 0.0 {
                return Err(Error::InvalidConfiguration {
                    reason: format!("intensity {i} is {g} (must be finite and nonzero)"),
                });
            }
        }
        let c = VortexConfiguration {
            positions,
            intensities,
        };
        if let Some((i, j, d)) = c.closest_pair() {
            if d == 0.0 {
                return Err(Error::CoincidentVortices {
                    i,
                    j,
                    separation: d,
                });
            }
        }
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.intensities.len()
    }

    pub fn positions(&self) -> &PhaseVector {
        &self.positions
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Same intensities, new positions (validated).
    pub fn with_positions(&self, positions: PhaseVector) -> Result<Self> {
        VortexConfiguration::new(positions, self.intensities.clone())
    }

    /// Closest pair `(i, j, distance)`, or `None` for a single vortex.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        closest_pair_of(&self.positions)
    }

    /// Minimum pairwise distance; `+∞` for a single vortex.
    pub fn min_pairwise_distance(&self) -> f64 {
        self.closest_pair().map_or(f64::INFINITY, |(_, _, d)| d)
    }
}

fn closest_pair_of(z: &PhaseVector) -> Option<(usize, usize, f64)> {
    let n = z.len();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (z.block(i) - z.block(j)).norm();
            if best.map_or(true, |(_, _, bd)| d < bd) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

/// Right-hand side of the point-vortex system:
/// block `i` is `Σ_{j≠i} γ_j K(z_i − z_j)`.
///
/// # Errors
/// [`Error::CoincidentVortices`] when two vortices sit on top of each other.
pub fn pvs_velocity(c: &VortexConfiguration) -> Result<PhaseVector> {
    pvs_velocity_at(c.positions(), c.intensities())
}

/// As [`pvs_velocity`], but for explicit positions (integrator stages).
pub fn pvs_velocity_at(z: &PhaseVector, gamma: &[f64]) -> Result<PhaseVector> {
    let n = z.len();
    let mut v = PhaseVector::zeros(n);
    for i in 0..n {
        let zi = z.block(i);
        let mut vi = Vec2::ZERO;
        for j in 0..n {
            if i == j {
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
            vi += gamma[j] * kernel_unchecked(d);
        }
        *v.block_mut(i) = vi;
    }
    Ok(v)
}

/// Rotating-frame right-hand side: `pvs_velocity(Z) − ν J Z`.
///
/// A configuration rigidly rotating counterclockwise at `ν` is a rest point.
pub fn rotating_frame_velocity(z: &PhaseVector, gamma: &[f64], nu: f64) -> Result<PhaseVector> {
    let mut v = pvs_velocity_at(z, gamma)?;
    for i in 0..z.len() {
        *v.block_mut(i) -= z.block(i).perp() * nu;
    }
    Ok(v)
}

/// The Hamiltonian `H(Z) = (1/4π) Σ_{i≠j} γ_i γ_j ln|z_i − z_j|`.
///
/// The prefactor makes `Γ Ż = J ∇H` exact for the 1/(2π)-normalized kernel.
pub fn hamiltonian(c: &VortexConfiguration) -> Result<f64> {
    hamiltonian_at(c.positions(), c.intensities())
}

pub fn hamiltonian_at(z: &PhaseVector, gamma: &[f64]) -> Result<f64> {
    let n = z.len();
    let mut h = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = (z.block(i) - z.block(j)).norm_sq();
            if d2 == 0.0 {
                return Err(Error::CoincidentVortices {
                    i,
                    j,
                    separation: 0.0,
                });
            }
            // Each unordered pair appears twice in the double sum.
            h += 2.0 * gamma[i] * gamma[j] * 0.5 * d2.ln();
        }
    }
    Ok(h * 0.5 * INV_TWO_PI)
}

/// Gradient of the Hamiltonian:
/// block `i` is `(1/2π) γ_i Σ_{j≠i} γ_j (z_i − z_j)/|z_i − z_j|²`.
pub fn gradient_h(c: &VortexConfiguration) -> Result<PhaseVector> {
    gradient_h_at(c.positions(), c.intensities())
}

pub fn gradient_h_at(z: &PhaseVector, gamma: &[f64]) -> Result<PhaseVector> {
    let n = z.len();
    let mut g = PhaseVector::zeros(n);
    for i in 0..n {
        let zi = z.block(i);
        let mut gi = Vec2::ZERO;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = zi - z.block(j);
            let d2 = d.norm_sq();
            if d2 == 0.0 {
                return Err(Error::CoincidentVortices {
                    i,
                    j,
                    separation: 0.0,
                });
            }
            gi += d * (gamma[j] / d2);
        }
        *g.block_mut(i) = gi * (gamma[i] * INV_TWO_PI);
    }
    Ok(g)
}

/// First integrals: linear impulse `Σ γ_i z_i` and angular impulse
/// `Σ γ_i |z_i|²`.
pub fn impulses(c: &VortexConfiguration) -> (Vec2, f64) {
    impulses_at(c.positions(), c.intensities())
}

pub fn impulses_at(z: &PhaseVector, gamma: &[f64]) -> (Vec2, f64) {
    let mut linear = Vec2::ZERO;
    let mut angular = 0.0;
    for (zi, gi) in z.iter().zip(gamma) {
        linear += *zi * *gi;
        angular += gi * zi.norm_sq();
    }
    (linear, angular)
}

/// Conserved-quantity record attached to each trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedSample {
    pub t: f64,
    pub hamiltonian: f64,
    pub linear_impulse: Vec2,
    pub angular_impulse: f64,
    pub min_distance: f64,
}

/// A sampled solution of the (possibly rotating-frame) point-vortex system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseVector>,
    pub conserved: Vec<ConservedSample>,
    pub intensities: Vec<f64>,
    /// Rotating-frame rate used, if any (`None` = lab frame).
    pub frame_velocity: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &PhaseVector {
        self.states.last().expect("trajectory has at least t = 0")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least t = 0")
    }

    /// CSV export: `t, x_1, y_1, …, x_N, y_N, H, Px, Py, L, dmin` with a
    /// header row and round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let n = self.intensities.len();
        let mut out = String::new();
        out.push('t');
        for i in 1..=n {
            out.push_str(&format!(",x_{i},y_{i}"));
        }
        out.push_str(",H,Px,Py,L,dmin\n");
        for (k, t) in self.times.iter().enumerate() {
            let z = &self.states[k];
            let c = &self.conserved[k];
            out.push_str(&format!("{t}"));
            for i in 0..n {
                let b = z.block(i);
                out.push_str(&format!(",{},{}", b.x, b.y));
            }
            out.push_str(&format!(
                ",{},{},{},{},{}\n",
                c.hamiltonian, c.linear_impulse.x, c.linear_impulse.y, c.angular_impulse, c.min_distance
            ));
        }
        out
    }
}

/// Collapse-guard threshold for the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CollapseThreshold {
    /// Threshold = `factor ×` the initial minimum pairwise distance
    /// (default `factor = 1e-6`).
    RelativeToInitial(f64),
    /// Fixed absolute distance.
    Absolute(f64),
}

impl Default for CollapseThreshold {
    fn default() -> Self {
        CollapseThreshold::RelativeToInitial(1e-6)
    }
}

/// Options for [`integrate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_final: f64,
    /// `Some(ν)` integrates the rotating-frame field `V(Z) − ν J Z`.
    pub frame_velocity: Option<f64>,
    /// Record every this many steps (the initial and final states are always
    /// recorded). Must be ≥ 1.
    pub sample_every: usize,
    pub collapse_threshold: CollapseThreshold,
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_final: f64) -> Self {
        IntegrateOptions {
            dt,
            t_final,
            frame_velocity: None,
            sample_every: 1,
            collapse_threshold: CollapseThreshold::default(),
        }
    }

    pub fn rotating(mut self, nu: f64) -> Self {
        self.frame_velocity = Some(nu);
        self
    }

    pub fn sampling(mut self, every: usize) -> Self {
        self.sample_every = every.max(1);
        self
    }

    pub fn collapse(mut self, threshold: CollapseThreshold) -> Self {
        self.collapse_threshold = threshold;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("{} (must be positive and finite)", self.dt),
            });
        }
        if !(self.t_final >= self.dt) {
            return Err(Error::InvalidParameter {
                name: "t_final",
                reason: format!("{} (must be at least dt = {})", self.t_final, self.dt),
            });
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter {
                name: "sample_every",
                reason: "0 (must be at least 1)".into(),
            });
        }
        Ok(())
    }
}

/// Classic fixed-step 4th-order one-step integration of the point-vortex
/// system (or its rotating-frame form), with dense conserved-quantity
/// sampling and a minimum-distance collapse guard.
///
/// # Errors
/// - [`Error::Collapse`] when the minimum pairwise distance crosses the
///   configured threshold (carries the blow-up time);
/// - parameter validation errors.
pub fn integrate(c0: &VortexConfiguration, opts: &IntegrateOptions) -> Result<Trajectory> {
    opts.validate()?;
    let gamma = c0.intensities().to_vec();
    let nu = opts.frame_velocity;
    let field = |_t: f64, z: &PhaseVector| -> Result<PhaseVector> {
        match nu {
            Some(nu) => rotating_frame_velocity(z, &gamma, nu),
            None => pvs_velocity_at(z, &gamma),
        }
    };

    let threshold = match opts.collapse_threshold {
        CollapseThreshold::RelativeToInitial(f) => f * c0.min_pairwise_distance(),
        CollapseThreshold::Absolute(a) => a,
    };

    let n_steps = ((opts.t_final / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut z = c0.positions().clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut conserved = Vec::new();

    let mut record = |t: f64, z: &PhaseVector| -> Result<()> {
        let (linear, angular) = impulses_at(z, &gamma);
        conserved.push(ConservedSample {
            t,
            hamiltonian: hamiltonian_at(z, &gamma)?,
            linear_impulse: linear,
            angular_impulse: angular,
            min_distance: closest_pair_of(z).map_or(f64::INFINITY, |(_, _, d)| d),
        });
        times.push(t);
        states.push(z.clone());
        Ok(())
    };

    record(0.0, &z)?;
    for step in 0..n_steps {
        let t = step as f64 * opts.dt;
        z = rk4_step(&field, t, &z, opts.dt)?;
        let t_next = (step + 1) as f64 * opts.dt;
        if let Some((_, _, d)) = closest_pair_of(&z) {
            if d < threshold {
                return Err(Error::Collapse {
                    time: t_next,
                    min_distance: d,
                    threshold,
                });
            }
        }
        if (step + 1) % opts.sample_every == 0 || step + 1 == n_steps {
            record(t_next, &z)?;
        }
    }

    Ok(Trajectory {
        times,
        states,
        conserved,
        intensities: gamma,
        frame_velocity: nu,
    })
}

/// One classical 4th-order step of `ż = f(t, z)`.
pub(crate) fn rk4_step<F>(field: &F, t: f64, z: &PhaseVector, dt: f64) -> Result<PhaseVector>
where
    F: Fn(f64, &PhaseVector) -> Result<PhaseVector>,
{
    let k1 = field(t, z)?;
    let mut z2 = z.clone();
    z2.axpy(0.5 * dt, &k1);
    let k2 = field(t + 0.5 * dt, &z2)?;
    let mut z3 = z.clone();
    z3.axpy(0.5 * dt, &k2);
    let k3 = field(t + 0.5 * dt, &z3)?;
    let mut z4 = z.clone();
    z4.axpy(dt, &k3);
    let k4 = field(t + dt, &z4)?;

    let mut out = z.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    Ok(out)
}

/// Frozen margin constant for the perturbed-crystal deviation bound
/// `sup |Z − Z*| ≤ C · ε^{2β−2α}`; calibrated once (measured sup deviations
/// sit orders of magnitude below the bound) and pinned.
pub const PERTURBATION_BOUND_CONSTANT: f64 = 10.0;

/// Horizon policy for [`run_perturbed_crystal`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// `min(ε^{−α}, cap)` — the scaling-regime horizon.
    Auto { cap: f64 },
    /// Fixed horizon, for experiments (e.g. watching an out-of-range
    /// configuration escape) that need a longer window than `ε^{−α}`.
    Fixed(f64),
}

impl Horizon {
    fn resolve(self, eps: f64, alpha: f64) -> f64 {
        match self {
            Horizon::Auto { cap } => eps.powf(-alpha).min(cap),
            Horizon::Fixed(t) => t,
        }
    }
}

/// Configuration of the perturbed-crystal experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub forcing_seed: u64,
    pub horizon: Horizon,
    pub dt: f64,
    /// Record the deviation every this many steps.
    pub sample_every: usize,
}

impl PerturbConfig {
    pub fn new(epsilon: f64, alpha: f64, beta: f64, forcing_seed: u64) -> Self {
        PerturbConfig {
            epsilon,
            alpha,
            beta,
            forcing_seed,
            horizon: Horizon::Auto { cap: 1e4 },
            dt: 1e-3,
            sample_every: 10,
        }
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("{} (need 0 < ε < 1)", self.epsilon),
            });
        }
        if !(self.alpha > 0.0 && self.alpha < self.beta / 2.0 && self.beta / 2.0 < 0.25) {
            return Err(Error::InvalidParameter {
                name: "alpha/beta",
                reason: format!(
                    "α = {}, β = {} (need 0 < α < β/2 < 1/4)",
                    self.alpha, self.beta
                ),
            });
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("{} (must be positive)", self.dt),
            });
        }
        Ok(())
    }
}

/// Outcome of the perturbed-crystal experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Horizon actually integrated.
    pub horizon: f64,
    /// `sup_{t ≤ horizon} |Z(t) − Z*|` in the block-max norm.
    pub sup_deviation: f64,
    /// Deviation bound `C · ε^{2β−2α}` with the frozen constant
    /// [`PERTURBATION_BOUND_CONSTANT`].
    pub deviation_bound: f64,
    /// First time the deviation exceeded `ε^β`, if it ever did.
    pub first_exceedance: Option<f64>,
    /// Sup-norm bound the forcing was rescaled to (= ε).
    pub forcing_bound: f64,
    /// Sampled deviation time series `(t, |Z(t) − Z*|)`.
    pub deviation_series: Vec<(f64, f64)>,
}

impl PerturbationReport {
    /// Whether the run satisfied the frozen deviation bound.
    pub fn within_bound(&self) -> bool {
        self.sup_deviation <= self.deviation_bound
    }
}

/// Smooth seeded forcing: per coordinate, a sum of 3 sinusoids with random
/// phases and random frequencies in `[0.1, 2]`, jointly rescaled so the
/// block-max sup norm over the horizon is `ε`.
struct Forcing {
    /// Per coordinate: three (frequency, phase) pairs.
    modes: Vec<[(f64, f64); 3]>,
    scale: f64,
}

impl Forcing {
    fn seeded(n_blocks: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..2 * n_blocks)
            .map(|_| {
                [0, 1, 2].map(|_| {
                    (
                        rng.gen_range(0.1..=2.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
            })
            .collect();
        Forcing { modes, scale: 1.0 }
    }

    fn raw_eval(&self, t: f64, out: &mut PhaseVector) {
        for i in 0..out.len() {
            let fx: f64 = self.modes[2 * i]
                .iter()
                .map(|(w, p)| (w * t + p).sin())
                .sum();
            let fy: f64 = self.modes[2 * i + 1]
                .iter()
                .map(|(w, p)| (w * t + p).sin())
                .sum();
            *out.block_mut(i) = Vec2::new(fx, fy) * self.scale;
        }
    }

    /// Rescale so that the sampled sup of the block-max norm over
    /// `[0, horizon]` equals `bound`.
    fn rescale_to(&mut self, bound: f64, horizon: f64, dt_probe: f64) {
        let n = self.modes.len() / 2;
        let mut buf = PhaseVector::zeros(n);
        let steps = (horizon / dt_probe).ceil() as usize;
        let mut sup = 0.0f64;
        for k in 0..=steps {
            self.raw_eval(k as f64 * dt_probe, &mut buf);
            sup = sup.max(buf.block_max_norm());
        }
        if sup > 0.0 {
            self.scale = bound / sup;
        }
    }
}

/// Integrates the rotating-frame dynamics from a seeded initial point with
/// `|Z(0) − Z*| ≤ ε`, driven by a bounded seeded forcing of sup norm ε, and
/// reports the deviation history against the thresholds `ε^β` and
/// `C·ε^{2β−2α}`.
///
/// The horizon is `min(ε^{−α}, cap)` under [`Horizon::Auto`]; experiments
/// watching slow escapes may pin a [`Horizon::Fixed`] window instead.
pub fn run_perturbed_crystal(
    spec: &CrystalSpec,
    config: &PerturbConfig,
) -> Result<PerturbationReport> {
    config.validate()?;
    let eps = config.epsilon;
    let horizon = config.horizon.resolve(eps, config.alpha);
    let z_star = spec.positions().clone();
    let gamma = spec.intensities().to_vec();
    let nu = spec.nu_physical();
    let n = z_star.len();

    let mut forcing = Forcing::seeded(n, config.forcing_seed);
    forcing.rescale_to(eps, horizon, config.dt.max(horizon / 100_000.0));

    // Seeded initial offset with block-max norm exactly ε. The stream is
    // independent of the forcing modes (different seed derivation).
    let mut rng = ChaCha8Rng::seed_from_u64(config.forcing_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut offset = PhaseVector::zeros(n);
    for i in 0..n {
        *offset.block_mut(i) = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let sup0 = offset.block_max_norm();
    let offset = offset.scaled(if sup0 > 0.0 { eps / sup0 } else { 0.0 });

    let mut z = z_star.add(&offset);
    let field = |t: f64, state: &PhaseVector| -> Result<PhaseVector> {
        let mut v = rotating_frame_velocity(state, &gamma, nu)?;
        let mut f = PhaseVector::zeros(n);
        forcing.raw_eval(t, &mut f);
        for i in 0..n {
            *v.block_mut(i) += f.block(i);
        }
        Ok(v)
    };

    let exceed_threshold = eps.powf(config.beta);
    let n_steps = ((horizon / config.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut sup_dev = z.sub(&z_star).block_max_norm();
    let mut first_exceedance = None;
    let mut series = vec![(0.0, sup_dev)];

    for step in 0..n_steps {
        let t = step as f64 * config.dt;
        z = rk4_step(&field, t, &z, config.dt)?;
        let t_next = (step + 1) as f64 * config.dt;
        if let Some((i, j, d)) = closest_pair_of(&z) {
            if d < 1e-9 {
                return Err(Error::CoincidentVortices {
                    i,
                    j,
                    separation: d,
                });
            }
        }
        let dev = z.sub(&z_star).block_max_norm();
        sup_dev = sup_dev.max(dev);
        if first_exceedance.is_none() && dev > exceed_threshold {
            first_exceedance = Some(t_next);
        }
        if (step + 1) % config.sample_every == 0 || step + 1 == n_steps {
            series.push((t_next, dev));
        }
    }

    Ok(PerturbationReport {
        epsilon: eps,
        alpha: config.alpha,
        beta: config.beta,
        horizon,
        sup_deviation: sup_dev,
        deviation_bound: PERTURBATION_BOUND_CONSTANT
            * eps.powf(2.0 * config.beta - 2.0 * config.alpha),
        first_exceedance,
        forcing_bound: eps,
        deviation_series: series,
    })
}
