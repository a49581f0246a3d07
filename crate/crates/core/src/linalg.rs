//! Small fixed-size vector and matrix types generic over [`Real`].

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

pub type Point3 = Vec3<f64>;

impl<T> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }
}

impl From<[f64; 3]> for Vec3<f64> {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3<f64>> for [f64; 3] {
    fn from(v: Vec3<f64>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Serialize for Vec3<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        <[f64; 3]>::deserialize(d).map(Self::from)
    }
}

impl<T: Real> Vec3<T> {
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn constant(v: Point3) -> Self {
        Self::new(T::constant(v.x), T::constant(v.y), T::constant(v.z))
    }

    pub fn value(&self) -> Point3 {
        Vec3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn scale_f64(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Outer product `self · oᵀ`.
    pub fn outer(self, o: Self) -> Mat3<T> {
        let a = [self.x, self.y, self.z];
        let b = [o.x, o.y, o.z];
        Mat3::from_fn(|r, c| a[r] * b[c])
    }
}

impl Point3 {
    pub fn max_abs_diff(&self, o: &Point3) -> f64 {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Copy> Mat3<T> {
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> T) -> Self {
        Self {
            m: [
                [f(0, 0), f(0, 1), f(0, 2)],
                [f(1, 0), f(1, 1), f(1, 2)],
                [f(2, 0), f(2, 1), f(2, 2)],
            ],
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|r, c| self.m[c][r])
    }
}

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Self::from_fn(|_, _| T::zero())
    }

    pub fn identity() -> Self {
        Self::from_fn(|r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn constant(m: &Mat3<f64>) -> Self {
        Self::from_fn(|r, c| T::constant(m.m[r][c]))
    }

    pub fn value(&self) -> Mat3<f64> {
        Mat3::from_fn(|r, c| self.m[r][c].value())
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn frobenius_norm(&self) -> T {
        let mut s = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                s += self.m[r][c] * self.m[r][c];
            }
        }
        s.sqrt()
    }

    pub fn scale_f64(&self, s: f64) -> Self {
        Self::from_fn(|r, c| self.m[r][c] * s)
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::from_fn(|r, c| self.m[r][c] + o.m[r][c])
    }
}

impl<T: Real> AddAssign for Mat3<T> {
    fn add_assign(&mut self, o: Self) {
        for r in 0..3 {
            for c in 0..3 {
                self.m[r][c] += o.m[r][c];
            }
        }
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::from_fn(|r, c| self.m[r][c] - o.m[r][c])
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::from_fn(|r, c| self.m[r][0] * o.m[0][c] + self.m[r][1] * o.m[1][c] + self.m[r][2] * o.m[2][c])
    }
}

impl Mat3<f64> {
    pub fn max_abs_diff(&self, o: &Mat3<f64>) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                d = d.max((self.m[r][c] - o.m[r][c]).abs());
            }
        }
        d
    }

    pub(crate) fn to_nalgebra(self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.m[r][c])
    }
}

/// Primal factorisation behind the covariance-to-rotation map.
#[derive(Debug, Clone, Copy)]
pub struct PrimalRotation {
    pub rotation: Mat3<f64>,
    pub u: Mat3<f64>,
    pub v: Mat3<f64>,
    /// Descending.
    pub singular_values: [f64; 3],
    /// Reflection-correction sign applied to the last singular direction.
    pub reflection_sign: f64,
}

impl PrimalRotation {
    /// Diagonal of `diag(1,1,d)·Σ`.
    pub fn signed_spectrum(&self) -> [f64; 3] {
        let s = self.singular_values;
        [s[0], s[1], self.reflection_sign * s[2]]
    }

    /// Smallest pairwise sum of the signed spectrum; it divides every
    /// rotation derivative, so a tiny value means a huge gradient.
    pub fn ill_conditioned(&self) -> bool {
        let l = self.signed_spectrum();
        let gap = (l[1] + l[2]).min(l[0] + l[2]).min(l[0] + l[1]);
        gap <= 1e-9 * l[0].max(f64::MIN_POSITIVE)
    }
}

/// SVD-based proper rotation maximising `tr(R·H)`.
pub fn proper_rotation(h: &Mat3<f64>) -> Result<PrimalRotation> {
    let svd = h.to_nalgebra().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::DegenerateConfiguration(
            "singular value decomposition did not converge".into(),
        ));
    };
    if !svd.singular_values.iter().all(|s| s.is_finite()) {
        return Err(Error::DegenerateConfiguration("non-finite cross-covariance".into()));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = order.map(|i| svd.singular_values[i]);
    let v = v_t.transpose();
    let u_sorted = Mat3::from_fn(|r, c| u[(r, order[c])]);
    let v_sorted = Mat3::from_fn(|r, c| v[(r, order[c])]);

    let d = if (v_sorted * u_sorted.transpose()).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let s = Mat3::from_fn(|r, c| match (r, c) {
        (2, 2) => d,
        (i, j) if i == j => 1.0,
        _ => 0.0,
    });
    let rotation = v_sorted * s * u_sorted.transpose();
    Ok(PrimalRotation {
        rotation,
        u: u_sorted,
        v: v_sorted,
        singular_values: sigma,
        reflection_sign: d,
    })
}

/// Skew-symmetric part times two: `A − Aᵀ`.
pub(crate) fn skew2(a: &Mat3<f64>) -> Mat3<f64> {
    Mat3::from_fn(|r, c| a.m[r][c] - a.m[c][r])
}
