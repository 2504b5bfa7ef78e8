//! The exact 2D Biot–Savart kernel and its Jacobian.
//!
//! Unit convention (library-global): the physical kernel
//!
//! ```text
//! K(x) = x⊥ / (2π |x|²),     x⊥ = (−x₂, x₁)
//! ```
//!
//! carries the 1/(2π) factor. Published tables that drop the 2π are matched
//! by multiplying library values by 2π ("paper units"); the crate never mixes
//! the two conventions internally.
//!
//! There is no regularization here: evaluation at (numerically) zero
//! separation is a domain error. The smoothed particle kernel lives in
//! [`crate::eulerblob`].

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};

/// 2π, the normalization of the kernel.
pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// 1/(2π).
pub const INV_TWO_PI: f64 = 1.0 / TWO_PI;

/// Separations below this norm are treated as the singularity itself.
const SINGULARITY_NORM: f64 = 1e-300;

#[inline]
fn check_nonzero(y: Vec2) -> Result<()> {
    let norm = y.norm();
    if norm < SINGULARITY_NORM {
        return Err(Error::KernelSingularity { norm });
    }
    Ok(())
}

/// The Biot–Savart kernel `K(x) = x⊥/(2π|x|²)`.
///
/// A positive point vortex at the origin induces the velocity field
/// `u(x) = γ K(x)`, a counterclockwise circulation.
///
/// # Errors
/// [`Error::KernelSingularity`] when `|x| < 1e-300`.
pub fn biot_savart_kernel(x: Vec2) -> Result<Vec2> {
    check_nonzero(x)?;
    Ok(kernel_unchecked(x))
}

/// Hot-path kernel without the singularity check; callers guarantee `x ≠ 0`.
#[inline]
pub(crate) fn kernel_unchecked(x: Vec2) -> Vec2 {
    x.perp() * (INV_TWO_PI / x.norm_sq())
}

/// The Jacobian matrix of the Biot–Savart kernel,
///
/// ```text
/// J_K(y) = 1/(2π|y|⁴) · [[ 2y₁y₂,      y₂² − y₁² ],
///                        [ y₂² − y₁², −2y₁y₂     ]]
/// ```
///
/// symmetric and trace-free (K is divergence-free and curl-free away from 0).
///
/// # Errors
/// [`Error::KernelSingularity`] when `|y| < 1e-300`.
pub fn kernel_jacobian(y: Vec2) -> Result<Mat2> {
    check_nonzero(y)?;
    Ok(kernel_jacobian_unchecked(y))
}

#[inline]
pub(crate) fn kernel_jacobian_unchecked(y: Vec2) -> Mat2 {
    let r2 = y.norm_sq();
    let scale = INV_TWO_PI / (r2 * r2);
    let off = y.y * y.y - y.x * y.x;
    let diag = 2.0 * y.x * y.y;
    Mat2::new(diag * scale, off * scale, off * scale, -diag * scale)
}

/// The mirror-pair sum `J_K(y) + J_K(ȳ)` with `ȳ = (y₁, −y₂)`.
///
/// The diagonal parts cancel exactly, leaving
/// `1/(2π) · 2(y₂²−y₁²)/|y|⁴ · [[0,1],[1,0]]`; this is the algebraic heart of
/// the polygonal strain cancellation, where ring sites pair up into mirror
/// conjugates.
///
/// # Errors
/// [`Error::KernelSingularity`] when `|y| < 1e-300`.
pub fn conjugate_pair_sum(y: Vec2) -> Result<Mat2> {
    check_nonzero(y)?;
    Ok(kernel_jacobian_unchecked(y) + kernel_jacobian_unchecked(y.conj()))
}
