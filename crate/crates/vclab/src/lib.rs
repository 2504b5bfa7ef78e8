//! # vclab — a numerical laboratory for polygonal point-vortex crystals
//!
//! The crate builds the regular-polygon-with-central-vortex relative
//! equilibria of the planar point-vortex system, certifies their two defining
//! properties spectrally —
//!
//! 1. the exterior strain tensor vanishes at every site (the deformation of a
//!    small vorticity blob riding on each vortex is suppressed at first
//!    order), and
//! 2. the linearized rotating-frame dynamics on the invariant complement of
//!    the rotation plane is marginally stable with a semisimple, purely
//!    imaginary spectrum —
//!
//! and then measures, with a regularized vortex-particle method for the 2D
//! incompressible Euler equations, how long concentrated vorticity blobs
//! actually stay confined near their point-vortex shadows.
//!
//! ## Module map
//!
//! - [`geom`]: plane vectors, 2×2 matrices, stacked phase vectors.
//! - [`kernel`]: the exact Biot–Savart kernel and its Jacobian.
//! - [`dynamics`]: the point-vortex ODE, conserved quantities, the fixed-step
//!   integrator, and the forced perturbed-crystal experiment.
//! - [`crystal`]: polygonal equilibria, the central intensity two independent
//!   ways, rotation rates, and strain-tensor certificates.
//! - [`stability`]: Hamiltonian Hessian, stability matrix, the invariant
//!   splitting, restricted spectra, and the admissible-range classification.
//! - [`eulerblob`]: blob initial data, regularized velocity evaluation
//!   (direct and tree-accelerated), particle evolution, and every confinement
//!   diagnostic.
//!
//! ## Unit convention
//!
//! One global convention: the kernel carries its physical `1/(2π)` and the
//! Hamiltonian the matching `1/(4π)`, so `Γ Ż = J ∇H` holds exactly.
//! Quantities tabulated without the 2π (rotation rates, strain coefficients)
//! are recovered by multiplying by 2π; APIs call these "paper units" and the
//! CLI exposes a `--paper-units` switch.

pub mod crystal;
pub mod dynamics;
pub mod error;
pub mod eulerblob;
pub mod geom;
pub mod kernel;
pub mod stability;

pub use error::{Error, Result};
pub use geom::{Mat2, PhaseVector, Vec2};
pub use kernel::{INV_TWO_PI, TWO_PI};
