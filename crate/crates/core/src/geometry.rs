//! Rigid-motion types: quaternions, rotation matrices, poses, point clouds.
//!
//! Quaternions are stored `(w, x, y, z)`. Normalisation always lands on the
//! canonical hemisphere `w ≥ 0` (ties at `w = 0` resolved by making the first
//! non-zero vector component positive). Lengths are meters, angles radians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Point3, Vec3};
use crate::real::Real;

pub type RotationMatrix<T = f64> = Mat3<T>;

/// Orthonormality tolerance accepted by [`rotmat_to_quat`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion<T = f64> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quaternion<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn constant(q: Quaternion<f64>) -> Self {
        Self::new(T::constant(q.w), T::constant(q.x), T::constant(q.y), T::constant(q.z))
    }

    pub fn value(&self) -> Quaternion<f64> {
        Quaternion::new(self.w.value(), self.x.value(), self.y.value(), self.z.value())
    }

    pub fn dot(&self, o: &Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ o`.
    pub fn mul(&self, o: &Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Sign flip onto `w ≥ 0`, decided on primal values.
    pub fn canonical(self) -> Self {
        let v = self.value();
        let flip = if v.w != 0.0 {
            v.w < 0.0
        } else if v.x != 0.0 {
            v.x < 0.0
        } else if v.y != 0.0 {
            v.y < 0.0
        } else {
            v.z < 0.0
        };
        if flip {
            self.neg()
        } else {
            self
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n.value() > 0.0) || !n.value().is_finite() {
            return Err(Error::invalid("quaternion has zero or non-finite norm"));
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n).canonical())
    }

    pub fn to_rotation_matrix(&self) -> Result<RotationMatrix<T>> {
        quat_to_rotmat(self)
    }
}

impl Quaternion<f64> {
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) {
            return Err(Error::invalid("rotation axis has zero length"));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let a = axis.scale_f64(s / n);
        Ok(Self::new(c, a.x, a.y, a.z))
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Rotation matrix of `q/‖q‖`.
pub fn quat_to_rotmat<T: Real>(q: &Quaternion<T>) -> Result<RotationMatrix<T>> {
    let n2 = q.dot(q);
    if !(n2.value() > 0.0) || !n2.value().is_finite() {
        return Err(Error::invalid("quaternion has zero or non-finite norm"));
    }
    let n = n2.sqrt();
    let (w, x, y, z) = (q.w / n, q.x / n, q.y / n, q.z / n);
    let two = 2.0;
    Ok(Mat3 {
        m: [
            [
                T::one() - (y * y + z * z) * two,
                (x * y - w * z) * two,
                (x * z + w * y) * two,
            ],
            [
                (x * y + w * z) * two,
                T::one() - (x * x + z * z) * two,
                (y * z - w * x) * two,
            ],
            [
                (x * z - w * y) * two,
                (y * z + w * x) * two,
                T::one() - (x * x + y * y) * two,
            ],
        ],
    })
}

/// Largest deviation of `Rᵀ·R` from identity and of `det R` from one.
pub fn orthonormality_error(r: &Mat3<f64>) -> f64 {
    let rtr = r.transpose() * *r;
    rtr.max_abs_diff(&Mat3::identity()).max((r.determinant() - 1.0).abs())
}

/// Unit quaternion (canonical hemisphere) of a rotation matrix.
///
/// Uses the branch with the largest of `trace, R₀₀, R₁₁, R₂₂` so the
/// square root is taken of a quantity bounded away from zero.
pub fn rotmat_to_quat<T: Real>(r: &RotationMatrix<T>) -> Result<Quaternion<T>> {
    let rv = r.value();
    let err = orthonormality_error(&rv);
    if !(err <= ROTATION_TOLERANCE) {
        return Err(Error::invalid(format!(
            "matrix is not a rotation (orthonormality error {err:e})"
        )));
    }
    let m = &r.m;
    let tr = rv.trace();
    let diag = [rv.m[0][0], rv.m[1][1], rv.m[2][2]];
    let q = if tr >= diag[0] && tr >= diag[1] && tr >= diag[2] {
        let s = (r.trace() + 1.0).sqrt() * 2.0;
        Quaternion::new(
            s * 0.25,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        )
    } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
        let s = (m[0][0] - m[1][1] - m[2][2] + 1.0).sqrt() * 2.0;
        Quaternion::new(
            (m[2][1] - m[1][2]) / s,
            s * 0.25,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        )
    } else if diag[1] >= diag[2] {
        let s = (m[1][1] - m[0][0] - m[2][2] + 1.0).sqrt() * 2.0;
        Quaternion::new(
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            s * 0.25,
            (m[1][2] + m[2][1]) / s,
        )
    } else {
        let s = (m[2][2] - m[0][0] - m[1][1] + 1.0).sqrt() * 2.0;
        Quaternion::new(
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            s * 0.25,
        )
    };
    q.normalized()
}

/// Rotation angle of `Raᵀ·Rb`, in `[0, π]`.
///
/// Evaluated as `atan2(|sin θ|, cos θ)` with `cos θ = (tr − 1)/2`; unlike a
/// bare `acos` this keeps full precision for angles near zero.
pub fn geodesic_angle(ra: &RotationMatrix, rb: &RotationMatrix) -> f64 {
    let m = ra.transpose() * *rb;
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sx = (m.m[2][1] - m.m[1][2]) / 2.0;
    let sy = (m.m[0][2] - m.m[2][0]) / 2.0;
    let sz = (m.m[1][0] - m.m[0][1]) / 2.0;
    let sin = (sx * sx + sy * sy + sz * sz).sqrt();
    sin.atan2(cos).clamp(0.0, std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T = f64> {
    pub rotation: Quaternion<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Quaternion<T>, translation: Vec3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Quaternion::identity(), Vec3::zero())
    }

    pub fn constant(p: &Pose<f64>) -> Self {
        Self::new(Quaternion::constant(p.rotation), Vec3::constant(p.translation))
    }

    pub fn value(&self) -> Pose<f64> {
        Pose::new(self.rotation.value(), self.translation.value())
    }

    pub fn rotation_matrix(&self) -> Result<RotationMatrix<T>> {
        quat_to_rotmat(&self.rotation)
    }

    pub fn inverse(&self) -> Result<Self> {
        let q = self.rotation.normalized()?.conjugate();
        let r = quat_to_rotmat(&q)?;
        Ok(Self::new(q, -r.mul_vec(self.translation)))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let r = self.rotation_matrix()?;
        Ok(Self::new(
            self.rotation.mul(&other.rotation).normalized()?,
            r.mul_vec(other.translation) + self.translation,
        ))
    }
}

impl Pose<f64> {
    pub fn transform_point(&self, p: Point3) -> Result<Point3> {
        Ok(self.rotation_matrix()?.mul_vec(p) + self.translation)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite() && self.translation.is_finite()
    }
}

/// Ordered 3D points in meters, with an optional cached diameter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points, diameter: None }
    }

    /// Computes and stores the diameter.
    pub fn with_diameter(mut self) -> Self {
        self.diameter = Some(max_pairwise_distance(&self.points));
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter.unwrap_or_else(|| max_pairwise_distance(&self.points))
    }

    pub fn centroid(&self) -> Result<Point3> {
        centroid(&self.points)
    }

    pub fn ensure_nonempty(&self, what: &str) -> Result<()> {
        if self.points.is_empty() {
            Err(Error::invalid(format!("{what} point cloud is empty")))
        } else {
            Ok(())
        }
    }
}

pub fn centroid(points: &[Point3]) -> Result<Point3> {
    if points.is_empty() {
        return Err(Error::invalid("centroid of an empty point set"));
    }
    let mut c = Point3::zero();
    for p in points {
        c += *p;
    }
    Ok(c.scale_f64(1.0 / points.len() as f64))
}

/// Exact O(N²) maximum pairwise distance.
pub fn max_pairwise_distance(points: &[Point3]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((*a - *b).norm_squared());
        }
    }
    best.sqrt()
}

/// `R·p + t` for every point, order preserved. The diameter is carried over.
pub fn apply_pose(pose: &Pose, cloud: &PointCloud) -> Result<PointCloud> {
    let r = pose.rotation_matrix()?;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| r.mul_vec(*p) + pose.translation).collect(),
        diameter: cloud.diameter,
    })
}

/// Uniform rotation (normalised Gaussian 4-vector) and translation uniform in
/// `[−max_translation, max_translation]³`. Deterministic for a given seed.
pub fn random_pose(seed: u64, max_translation: f64) -> Result<Pose> {
    if !(max_translation >= 0.0) {
        return Err(Error::invalid("max_translation must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pose_with(&mut rng, max_translation)
}

pub fn random_pose_with<R: Rng>(rng: &mut R, max_translation: f64) -> Result<Pose> {
    let q = loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if q.norm() > 1e-6 {
            break q.normalized()?;
        }
    };
    let mut t = || max_translation * (2.0 * rng.random::<f64>() - 1.0);
    let translation = Vec3::new(t(), t(), t());
    Ok(Pose::new(q, translation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_random_quat(rng: &mut ChaCha8Rng) -> Quaternion {
        random_pose_with(rng, 0.0).unwrap().rotation
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let r = quat_to_rotmat(&Quaternion::<f64>::identity()).unwrap();
        assert_eq!(r, Mat3::identity());
    }

    #[test]
    fn half_turn_about_z() {
        let r = quat_to_rotmat(&Quaternion::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        let expected = Mat3::from_fn(|i, j| match (i, j) {
            (0, 0) | (1, 1) => -1.0,
            (2, 2) => 1.0,
            _ => 0.0,
        });
        assert!(r.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn zero_quaternion_rejected() {
        let q = Quaternion::new(0.0, 0.0, 0.0, 0.0);
        assert!(matches!(quat_to_rotmat(&q), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn non_unit_quaternion_is_normalised() {
        let q = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        assert!(quat_to_rotmat(&q).unwrap().max_abs_diff(&Mat3::identity()) < 1e-15);
    }

    #[test]
    fn rotmat_to_quat_special_cases() {
        let q = rotmat_to_quat(&Mat3::<f64>::identity()).unwrap();
        assert_eq!(q.as_array(), [1.0, 0.0, 0.0, 0.0]);
        let half_x = Mat3::from_fn(|i, j| match (i, j) {
            (0, 0) => 1.0,
            (1, 1) | (2, 2) => -1.0,
            _ => 0.0,
        });
        let q = rotmat_to_quat(&half_x).unwrap();
        assert!((q.x - 1.0).abs() < 1e-15 && q.w.abs() < 1e-15);
    }

    #[test]
    fn rotmat_to_quat_rejects_non_rotation() {
        let mut m = Mat3::<f64>::identity();
        m.m[0][0] = 1.1;
        assert!(rotmat_to_quat(&m).is_err());
        let reflection = Mat3::from_fn(|i, j| match (i, j) {
            (0, 0) => -1.0,
            (1, 1) | (2, 2) => 1.0,
            _ => 0.0,
        });
        assert!(rotmat_to_quat(&reflection).is_err());
    }

    #[test]
    fn round_trip_over_random_quaternions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = unit_random_quat(&mut rng);
            let m = quat_to_rotmat(&q).unwrap();
            assert!(orthonormality_error(&m) < 1e-9);
            let back = rotmat_to_quat(&m).unwrap();
            assert!(back.w >= 0.0);
            let m2 = quat_to_rotmat(&back).unwrap();
            assert!(m2.max_abs_diff(&m) < 1e-12);
            // canonical hemisphere: the quaternion itself round-trips
            assert!((back.dot(&q.canonical()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn near_half_turn_round_trip() {
        for axis in [
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.3, -0.8, 0.5),
            Point3::new(0.0, 0.0, 1.0),
        ] {
            for angle in [PI, PI - 1e-9, PI - 1e-4] {
                let q = Quaternion::from_axis_angle(axis, angle).unwrap();
                let m = quat_to_rotmat(&q).unwrap();
                let m2 = quat_to_rotmat(&rotmat_to_quat(&m).unwrap()).unwrap();
                assert!(m2.max_abs_diff(&m) < 1e-12);
            }
        }
    }

    #[test]
    fn apply_pose_examples() {
        let cloud = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, -2.0, 0.5)]);
        let same = apply_pose(&Pose::identity(), &cloud).unwrap();
        assert_eq!(same, cloud);
        let shift = Pose::new(Quaternion::identity(), Vec3::new(1.0, 2.0, 3.0));
        let moved = apply_pose(&shift, &cloud).unwrap();
        assert_eq!(moved.points[0], Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn apply_inverse_then_pose_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = PointCloud::new(
            (0..50)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        );
        for seed in 0..50 {
            let p = random_pose(seed, 2.0).unwrap();
            let back = apply_pose(&p, &apply_pose(&p.inverse().unwrap(), &cloud).unwrap()).unwrap();
            for (a, b) in back.points.iter().zip(&cloud.points) {
                assert!(a.max_abs_diff(b) < 1e-12);
            }
        }
    }

    #[test]
    fn geodesic_angle_examples() {
        let i = Mat3::<f64>::identity();
        assert_eq!(geodesic_angle(&i, &i), 0.0);
        let z180 = quat_to_rotmat(&Quaternion::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((geodesic_angle(&i, &z180) - PI).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ten = 10f64.to_radians();
        for _ in 0..100 {
            let axis = Point3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let r = quat_to_rotmat(&Quaternion::from_axis_angle(axis, ten).unwrap()).unwrap();
            assert!((geodesic_angle(&i, &r) - ten).abs() < 1e-9);
            assert!((geodesic_angle(&r, &i) - ten).abs() < 1e-9);
        }
    }

    #[test]
    fn random_pose_determinism_and_zero_translation() {
        assert_eq!(random_pose(9, 1.0).unwrap(), random_pose(9, 1.0).unwrap());
        assert_ne!(random_pose(9, 1.0).unwrap(), random_pose(10, 1.0).unwrap());
        let p = random_pose(4, 0.0).unwrap();
        assert_eq!(p.translation.norm(), 0.0);
        assert!(random_pose(1, -1.0).is_err());
    }

    #[test]
    fn random_rotations_are_uniform_on_so3() {
        // Uniform SO(3): angle density (1 − cos θ)/π on [0, π], mean π/2 + 2/π.
        let expected = PI / 2.0 + 2.0 / PI;
        let i = Mat3::identity();
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|s| {
                let r = random_pose(s, 0.0).unwrap().rotation_matrix().unwrap();
                geodesic_angle(&i, &r)
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - expected).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn diameter_of_unit_cube_corners() {
        let pts: Vec<Point3> = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let c = PointCloud::new(pts).with_diameter();
        assert!((c.diameter.unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.centroid().unwrap(), Point3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = random_pose(77, 1.0).unwrap();
        let id = p.compose(&p.inverse().unwrap()).unwrap();
        assert!(id.translation.norm() < 1e-12);
        assert!((id.rotation.w - 1.0).abs() < 1e-12);
    }
}
