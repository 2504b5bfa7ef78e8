//! Library-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. Variants carry
//! the numbers a caller needs to diagnose the failure (times, distances,
//! residuals) rather than prose alone.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the laboratory.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Kernel or kernel-Jacobian evaluated at (numerically) zero separation.
    /// No silent regularization happens in the exact-kernel layer.
    #[error("kernel evaluated at the singularity: |y| = {norm:.3e} < 1e-300")]
    KernelSingularity { norm: f64 },

    /// Two vortices of a configuration coincide (collapse in the ODE sense).
    #[error("vortices {i} and {j} coincide (separation {separation:.3e})")]
    CoincidentVortices { i: usize, j: usize, separation: f64 },

    /// A configuration failed structural validation.
    #[error("invalid configuration: {reason}")]
    InvalidConfiguration { reason: String },

    /// A numeric parameter is out of its documented domain.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The integrator crossed the minimum-distance guard: the run is
    /// approaching a collapse and was aborted.
    #[error("collapse guard tripped at t = {time:.6}: min pairwise distance {min_distance:.3e} < threshold {threshold:.3e}")]
    Collapse {
        time: f64,
        min_distance: f64,
        threshold: f64,
    },

    /// Polygonal-crystal order must be at least 4.
    #[error("crystal order N = {n} is out of domain (need N >= 4)")]
    InvalidOrder { n: i64 },

    /// The angular impulse vanishes, so no rotation rate can be fitted.
    #[error("zero angular impulse: relative-equilibrium velocity is undefined")]
    ZeroAngularImpulse,

    /// A stability computation was asked for at a point that is not a
    /// relative equilibrium within tolerance.
    #[error("configuration is not an equilibrium: residual {residual:.3e} > {tolerance:.3e}")]
    NotAnEquilibrium { residual: f64, tolerance: f64 },

    /// The invariant splitting V ⊕ V⊥ degenerates when the angular impulse
    /// (the Γ-Gram diagonal of V) vanishes.
    #[error("degenerate splitting: angular impulse {angular_impulse:.3e} vanishes")]
    DegenerateSplitting { angular_impulse: f64 },

    /// Initial blobs of the requested radius would overlap.
    #[error("blob radius {eps:.3e} exceeds half the minimum crystal separation {max_eps:.3e}: supports would overlap")]
    BlobOverlap { eps: f64, max_eps: f64 },

    /// Requested time step violates the regularization-scale CFL guard.
    #[error("time step {dt:.3e} violates the CFL guard {dt_max:.3e} (0.2 * delta / v_max at t = 0)")]
    CflViolation { dt: f64, dt_max: f64 },

    /// Non-finite numbers appeared during a particle run.
    #[error("numerical blow-up: non-finite state detected at t = {time:.6}")]
    NumericalBlowup { time: f64 },

    /// I/O failure while writing run artifacts.
    #[error("artifact I/O failure on {path}: {reason}")]
    Io { path: String, reason: String },
}
