//! Dual numbers carrying `N` tangent directions at once.
//!
//! `Dual { value: a, partials: [a₁ … a_N] }` stands for `a + Σ aⱼ·εⱼ` with
//! `εᵢ·εⱼ = 0`. Arithmetic on the primal part is ordinary `f64`
//! arithmetic; the partials follow from the product rule, so composing
//! operations composes derivatives.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::Result;
use crate::linalg::{self, Mat3};
use crate::real::{CovarianceRotation, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub value: f64,
    pub partials: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub const fn new(value: f64, partials: [f64; N]) -> Self {
        Self { value, partials }
    }

    pub const fn constant(value: f64) -> Self {
        Self {
            value,
            partials: [0.0; N],
        }
    }

    /// Seeds tangent direction `slot` with derivative one.
    pub fn variable(value: f64, slot: usize) -> Self {
        let mut partials = [0.0; N];
        partials[slot] = 1.0;
        Self { value, partials }
    }

    #[inline]
    fn chain(self, value: f64, derivative: f64) -> Self {
        let mut partials = self.partials;
        for p in &mut partials {
            *p *= derivative;
        }
        Self { value, partials }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.value += o.value;
        for (a, b) in self.partials.iter_mut().zip(o.partials) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.value -= o.value;
        for (a, b) in self.partials.iter_mut().zip(o.partials) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut partials = [0.0; N];
        for (i, p) in partials.iter_mut().enumerate() {
            *p = self.partials[i] * o.value + self.value * o.partials[i];
        }
        Self {
            value: self.value * o.value,
            partials,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        let value = self.value * inv;
        let mut partials = [0.0; N];
        for (i, p) in partials.iter_mut().enumerate() {
            *p = (self.partials[i] - value * o.partials[i]) * inv;
        }
        Self { value, partials }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.value, -1.0)
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.value += o;
        self
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.value -= o;
        self
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.chain(self.value * o, o)
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self.chain(self.value / o, 1.0 / o)
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual::constant(v)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        if s == 0.0 {
            return Dual::constant(0.0);
        }
        self.chain(s, 0.5 / s)
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.partials.iter().all(|p| p.is_finite())
    }

    /// Differentiates the SVD-based rotation without differentiating the SVD.
    ///
    /// At the optimum `P = R·H` is symmetric. Writing `dR = Ω·R` with `Ω`
    /// skew and differentiating the symmetry condition gives
    /// `Ω·P + P·Ω = (R·dH)ᵀ − R·dH`, which is diagonal in the basis `V`
    /// where `P = V·diag(λ)·Vᵀ`, `λ = (σ₁, σ₂, d·σ₃)`. Hence
    /// `Ω' = Vᵀ·Ω·V` has entries `−Bₐᵦ/(λₐ+λᵦ)` with `B = Vᵀ·skew(R·dH)·V`.
    fn rotation_from_covariance(h: &Mat3<Self>) -> Result<CovarianceRotation<Self>> {
        let primal = linalg::proper_rotation(&h.value())?;
        let r0 = primal.rotation;
        let v = primal.v;
        let vt = v.transpose();
        let lambda = primal.signed_spectrum();

        let mut rotation = Mat3::from_fn(|r, c| Dual::constant(r0.m[r][c]));
        for j in 0..N {
            let dh = Mat3::from_fn(|r, c| h.m[r][c].partials[j]);
            if dh.m.iter().flatten().all(|&x| x == 0.0) {
                continue;
            }
            let b = vt * linalg::skew2(&(r0 * dh)) * v;
            let omega_v = Mat3::from_fn(|a, c| {
                if a == c {
                    0.0
                } else {
                    -b.m[a][c] / (lambda[a] + lambda[c])
                }
            });
            let dr = v * omega_v * vt * r0;
            for r in 0..3 {
                for c in 0..3 {
                    rotation.m[r][c].partials[j] = dr.m[r][c];
                }
            }
        }
        Ok(CovarianceRotation {
            rotation,
            singular_values: primal.singular_values,
            ill_conditioned: primal.ill_conditioned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<2>;

    #[test]
    fn product_rule() {
        let a = D2::variable(3.0, 0);
        let b = D2::variable(4.0, 1);
        let p = a * b;
        assert_eq!(p.value, 12.0);
        assert_eq!(p.partials, [4.0, 3.0]);
    }

    #[test]
    fn quotient_and_composition() {
        let x = D2::variable(2.0, 0);
        let f = (x * x + 1.0) / x; // x + 1/x, f' = 1 - 1/x²
        assert!((f.value - 2.5).abs() < 1e-15);
        assert!((f.partials[0] - 0.75).abs() < 1e-15);
        assert_eq!(f.partials[1], 0.0);
    }

    #[test]
    fn sqrt_and_exp() {
        let x = D2::variable(4.0, 1);
        let s = Real::sqrt(x);
        assert_eq!(s.value, 2.0);
        assert_eq!(s.partials[1], 0.25);
        let e = Real::exp(D2::variable(0.0, 0));
        assert_eq!(e.partials[0], 1.0);
    }

    #[test]
    fn sqrt_at_zero_has_zero_derivative() {
        let s = Real::sqrt(D2::variable(0.0, 0));
        assert_eq!(s.value, 0.0);
        assert_eq!(s.partials, [0.0, 0.0]);
    }

    #[test]
    fn abs_uses_primal_sign() {
        let x = D2::variable(-2.0, 0);
        let a = Real::abs(x);
        assert_eq!(a.value, 2.0);
        assert_eq!(a.partials[0], -1.0);
    }
}
