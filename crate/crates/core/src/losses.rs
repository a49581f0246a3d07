//! Training losses: smooth-L1 offset regression, pose error and their blend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quat_to_rotmat, Pose};
use crate::keypoints::OffsetField;
use crate::linalg::Mat3;
use crate::real::Real;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the rotation term in [`pose_loss`].
    pub alpha: f64,
    /// Weight of the pose term in [`joint_loss`].
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }
}

impl LossConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let c = Self { alpha, beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

pub fn smooth_l1<T: Real>(x: T) -> T {
    let a = x.abs();
    if a.value() < 1.0 {
        x * x * 0.5
    } else {
        a - 0.5
    }
}

/// Sum over points, keypoints and coordinates of smooth-L1 of the offset error.
pub fn offset_loss<T: Real>(pred: &OffsetField<T>, truth: &OffsetField) -> Result<T> {
    pred.check_dims()?;
    truth.check_dims()?;
    if pred.num_points != truth.num_points || pred.num_keypoints != truth.num_keypoints {
        return Err(Error::invalid(format!(
            "offset fields differ in shape: {}×{} vs {}×{}",
            pred.num_points, pred.num_keypoints, truth.num_points, truth.num_keypoints
        )));
    }
    let mut sum = T::zero();
    for (p, t) in pred.offsets.iter().zip(&truth.offsets) {
        for a in 0..3 {
            sum += smooth_l1(p[a] - t[a]);
        }
    }
    Ok(sum)
}

/// `‖t̂ − t‖ + α·‖R̂·Rᵀ − I‖_F`, with `R̂` built from the (normalised) predicted quaternion.
pub fn pose_loss<T: Real>(pred: &Pose<T>, truth: &Pose, config: &LossConfig) -> Result<T> {
    let r_hat = quat_to_rotmat(&pred.rotation)?;
    let r = Mat3::<T>::constant(&quat_to_rotmat(&truth.rotation)?);
    let diff = r_hat * r.transpose() - Mat3::identity();
    let t_err = (pred.translation - crate::linalg::Vec3::constant(truth.translation)).norm();
    Ok(t_err + diff.frobenius_norm() * config.alpha)
}

pub fn joint_loss<T: Real>(offset_term: T, pose_term: T, config: &LossConfig) -> T {
    offset_term + pose_term * config.beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_pose, Quaternion};
    use crate::linalg::Point3;

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert!((smooth_l1(1.0 - 1e-12) - 0.5).abs() < 1e-11);
    }

    #[test]
    fn offset_loss_examples() {
        let truth = OffsetField::<f64>::zeros(4, 3);
        assert_eq!(offset_loss(&truth, &truth).unwrap(), 0.0);
        let mut pred = truth.clone();
        pred.offsets[5] = Point3::new(0.5, 0.0, 0.0);
        assert_eq!(offset_loss(&pred, &truth).unwrap(), 0.125);
        let other = OffsetField::<f64>::zeros(3, 3);
        assert!(offset_loss(&pred, &other).is_err());
    }

    #[test]
    fn pose_loss_examples() {
        let c = LossConfig::default();
        let p = random_pose(3, 1.0).unwrap();
        assert!(pose_loss(&p, &p, &c).unwrap() < 1e-12);

        let mut q = p;
        q.translation += Point3::new(3.0, 4.0, 0.0);
        assert!((pose_loss(&q, &p, &LossConfig::new(7.0, 0.1).unwrap()).unwrap() - 5.0).abs() < 1e-12);

        let half = Pose::new(Quaternion::new(0.0, 0.0, 0.0, 1.0), Point3::zero());
        let l = pose_loss(&half, &Pose::identity(), &c).unwrap();
        assert!((l - 0.01 * 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((l - 0.028284).abs() < 1e-6);
    }

    #[test]
    fn pose_loss_ignores_quaternion_sign() {
        let c = LossConfig::default();
        let p = random_pose(9, 1.0).unwrap();
        let flipped = Pose::new(p.rotation.neg(), p.translation);
        assert!(pose_loss(&flipped, &p, &c).unwrap() < 1e-12);
    }

    #[test]
    fn joint_loss_examples() {
        let c = LossConfig::default();
        assert_eq!(joint_loss(0.0, 0.0, &c), 0.0);
        assert!((joint_loss(1.0, 2.0, &c) - 1.2).abs() < 1e-15);
        assert_eq!(joint_loss(1.0, 2.0, &LossConfig::new(0.01, 0.0).unwrap()), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::new(0.0, 0.1).is_err());
        assert!(LossConfig::new(0.01, -1.0).is_err());
        assert!(LossConfig::new(0.01, 0.0).is_ok());
    }
}
