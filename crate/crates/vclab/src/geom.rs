//! Shared geometric vocabulary: plane vectors, 2×2 matrices, and stacked
//! phase-space vectors.
//!
//! Conventions used across the crate:
//! - the plane is identified with the complex line, `a + i b = (a, b)`;
//! - `perp` is the counterclockwise quarter turn `x⊥ = (−x₂, x₁)`, i.e.
//!   multiplication by `i` under the complex identification;
//! - the norm on stacked phase vectors is the max over 2-blocks of the
//!   Euclidean block norm, `|Z| = max_i |z_i|`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point (or vector) of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Point on the unit circle at angle `theta` (radians).
    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// Euclidean norm, robust to under/overflow.
    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counterclockwise quarter turn: `(−y, x)`, i.e. `i·z` on the complex line.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Rotation by `theta` radians (counterclockwise).
    #[inline]
    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Mirror across the real axis: the complex conjugate `(x, −y)`.
    #[inline]
    pub fn conj(self) -> Vec2 {
        Vec2::new(self.x, -self.y)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// A real 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    /// Entries `[[a, b], [c, d]]` stored as `[a, b, c, d]`.
    pub m: [f64; 4],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { m: [0.0; 4] };
    pub const IDENTITY: Mat2 = Mat2 {
        m: [1.0, 0.0, 0.0, 1.0],
    };

    #[inline]
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [a, b, c, d] }
    }

    /// Rotation by `theta` radians (counterclockwise).
    #[inline]
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// Outer product `u vᵀ`.
    #[inline]
    pub fn outer(u: Vec2, v: Vec2) -> Self {
        Mat2::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    #[inline]
    pub fn trace(self) -> f64 {
        self.m[0] + self.m[3]
    }

    #[inline]
    pub fn transpose(self) -> Mat2 {
        Mat2::new(self.m[0], self.m[2], self.m[1], self.m[3])
    }

    #[inline]
    pub fn frobenius_norm(self) -> f64 {
        self.m.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// Largest entry magnitude.
    #[inline]
    pub fn max_abs(self) -> f64 {
        self.m.iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
    }

    #[inline]
    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0] * v.x + self.m[1] * v.y,
            self.m[2] * v.x + self.m[3] * v.y,
        )
    }

    #[inline]
    pub fn matmul(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0] * rhs.m[0] + self.m[1] * rhs.m[2],
            self.m[0] * rhs.m[1] + self.m[1] * rhs.m[3],
            self.m[2] * rhs.m[0] + self.m[3] * rhs.m[2],
            self.m[2] * rhs.m[1] + self.m[3] * rhs.m[3],
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0] + rhs.m[0],
            self.m[1] + rhs.m[1],
            self.m[2] + rhs.m[2],
            self.m[3] + rhs.m[3],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0] - rhs.m[0],
            self.m[1] - rhs.m[1],
            self.m[2] - rhs.m[2],
            self.m[3] - rhs.m[3],
        )
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.m[0] * s, self.m[1] * s, self.m[2] * s, self.m[3] * s)
    }
}

/// A stacked phase-space vector `Z = (z_1, …, z_N) ∈ ℝ^{2N}`.
///
/// The canonical norm is [`PhaseVector::block_max_norm`], the max over blocks
/// of the Euclidean block norm.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseVector {
    blocks: Vec<Vec2>,
}

impl PhaseVector {
    pub fn new(blocks: Vec<Vec2>) -> Self {
        PhaseVector { blocks }
    }

    pub fn zeros(n: usize) -> Self {
        PhaseVector {
            blocks: vec![Vec2::ZERO; n],
        }
    }

    /// Number of 2-blocks (vortices), not scalar entries.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    #[inline]
    pub fn block(&self, i: usize) -> Vec2 {
        self.blocks[i]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize) -> &mut Vec2 {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[Vec2] {
        &self.blocks
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec2> {
        self.blocks.iter()
    }

    /// `|Z| = max_i |z_i|`.
    pub fn block_max_norm(&self) -> f64 {
        self.blocks.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    /// Flat Euclidean norm on ℝ^{2N}.
    pub fn euclidean_norm(&self) -> f64 {
        self.blocks.iter().map(|z| z.norm_sq()).sum::<f64>().sqrt()
    }

    /// Flat Euclidean inner product on ℝ^{2N}.
    pub fn dot(&self, other: &PhaseVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(*b))
            .sum()
    }

    /// Blockwise counterclockwise quarter turn: `J Z` where J is the
    /// block-diagonal symplectic matrix with blocks `[[0, −1], [1, 0]]`.
    pub fn j_apply(&self) -> PhaseVector {
        PhaseVector {
            blocks: self.blocks.iter().map(|z| z.perp()).collect(),
        }
    }

    /// Rotate every block by `theta` (the action of `e^{iθ}` on ℂ^N).
    pub fn rotated(&self, theta: f64) -> PhaseVector {
        PhaseVector {
            blocks: self.blocks.iter().map(|z| z.rotated(theta)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> PhaseVector {
        PhaseVector {
            blocks: self.blocks.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &PhaseVector) -> PhaseVector {
        debug_assert_eq!(self.len(), other.len());
        PhaseVector {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| *a + *b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &PhaseVector) -> PhaseVector {
        debug_assert_eq!(self.len(), other.len());
        PhaseVector {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }

    /// In-place fused update `self += k * h` (the integrator hot path).
    pub fn axpy(&mut self, h: f64, k: &PhaseVector) {
        debug_assert_eq!(self.len(), k.len());
        for (a, b) in self.blocks.iter_mut().zip(&k.blocks) {
            *a += *b * h;
        }
    }

    /// Flatten to `[x_1, y_1, x_2, y_2, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.blocks.len());
        for z in &self.blocks {
            out.push(z.x);
            out.push(z.y);
        }
        out
    }

    /// Rebuild from a flat `[x_1, y_1, …]` slice (length must be even).
    pub fn from_flat(flat: &[f64]) -> PhaseVector {
        assert!(flat.len() % 2 == 0, "flat phase vector needs even length");
        PhaseVector {
            blocks: flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|z| z.is_finite())
    }
}

impl From<Vec<Vec2>> for PhaseVector {
    fn from(blocks: Vec<Vec2>) -> Self {
        PhaseVector { blocks }
    }
}
