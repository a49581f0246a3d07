//! Scalar abstraction shared by the plain `f64` path and the dual-number path.
//!
//! Every numeric stage of the estimator (keypoint aggregation, the
//! closed-form solver, candidate weighting, the losses) is written once
//! against [`Real`]. Instantiating it with `f64` gives the ordinary
//! evaluation; instantiating it with [`crate::diff::Dual`] carries forward
//! derivatives through the same code.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::Result;
use crate::linalg::{self, Mat3};

/// Rotation maximizing `tr(R·H)` over SO(3) for a 3×3 cross-covariance `H`.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceRotation<T> {
    pub rotation: Mat3<T>,
    /// Singular values of the primal covariance, descending.
    pub singular_values: [f64; 3],
    /// Set when `(σ₂ + d·σ₃)/σ₁` is tiny, so derivatives of the rotation blow up.
    pub ill_conditioned: bool,
}

pub trait Real:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    fn constant(v: f64) -> Self;

    /// Primal value. Branches (pivots, hemisphere choice, nearest neighbours)
    /// are always decided on this.
    fn value(&self) -> f64;

    /// Square root. At exactly zero the derivative is taken as zero.
    fn sqrt(self) -> Self;

    fn exp(self) -> Self;

    fn is_finite(&self) -> bool;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }

    fn abs(self) -> Self {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Proper rotation `R = V·diag(1,1,d)·Uᵀ` from `H = U·Σ·Vᵀ`, `d = sign det(V·Uᵀ)`.
    fn rotation_from_covariance(h: &Mat3<Self>) -> Result<CovarianceRotation<Self>>;
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn rotation_from_covariance(h: &Mat3<f64>) -> Result<CovarianceRotation<f64>> {
        let primal = linalg::proper_rotation(h)?;
        Ok(CovarianceRotation {
            rotation: primal.rotation,
            singular_values: primal.singular_values,
            ill_conditioned: primal.ill_conditioned(),
        })
    }
}

/// Neumaier-compensated sum of primal values.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
