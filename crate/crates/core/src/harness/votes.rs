//! Stand-in for a keypoint-voting network: seeded per-point offset votes and
//! confidence logits with controllable noise, outliers and corruption.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::keypoints::{KeypointSet, OffsetField};
use crate::linalg::Point3;

use super::scene::unit_vector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteModel {
    /// Base std-dev of each vote, meters.
    pub noise: f64,
    /// Extra std-dev per meter of offset length.
    pub noise_slope: f64,
    /// Share of votes replaced by uniform junk near the keypoint.
    pub outlier_fraction: f64,
    /// Radius of the junk ball, as a fraction of the model diameter.
    pub outlier_scale: f64,
    /// Per-axis std-dev, per meter of distance from a keypoint to the nearest
    /// scene point, of an error shared by all of that keypoint's votes.
    /// Keypoints far from the visible surface are localised worse.
    pub hidden_bias: f64,
    /// Keypoints whose votes all share one displacement.
    pub corrupted_keypoints: usize,
    /// Length of that displacement, as a fraction of the model diameter.
    pub corruption_scale: f64,
    /// Logits are `−‖vote error‖ / temperature` plus noise.
    pub confidence_temperature: f64,
    pub confidence_noise: f64,
}

impl Default for VoteModel {
    fn default() -> Self {
        Self {
            noise: 0.002,
            noise_slope: 0.05,
            outlier_fraction: 0.2,
            outlier_scale: 0.5,
            hidden_bias: 0.6,
            corrupted_keypoints: 2,
            corruption_scale: 0.5,
            confidence_temperature: 0.005,
            confidence_noise: 0.5,
        }
    }
}

impl VoteModel {
    pub fn clean() -> Self {
        Self {
            noise: 0.0,
            noise_slope: 0.0,
            outlier_fraction: 0.0,
            hidden_bias: 0.0,
            corrupted_keypoints: 0,
            confidence_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self, num_keypoints: usize) -> Result<()> {
        let nonneg = [
            ("noise", self.noise),
            ("noise_slope", self.noise_slope),
            ("outlier_scale", self.outlier_scale),
            ("hidden_bias", self.hidden_bias),
            ("corruption_scale", self.corruption_scale),
            ("confidence_noise", self.confidence_noise),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("votes.{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidConfig(format!(
                "votes.outlier_fraction must be in [0, 1], got {}",
                self.outlier_fraction
            )));
        }
        if !(self.confidence_temperature > 0.0) {
            return Err(Error::InvalidConfig("votes.confidence_temperature must be > 0".into()));
        }
        if self.corrupted_keypoints > num_keypoints {
            return Err(Error::InvalidConfig(format!(
                "cannot corrupt {} of {num_keypoints} keypoints",
                self.corrupted_keypoints
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Offsets `vote − sᵢ` and confidence logits.
    pub field: OffsetField,
    /// Sorted indices of corrupted keypoints.
    pub corrupted: Vec<usize>,
}

/// Votes for `truth` (scene-frame keypoints) from every scene point.
pub fn synthesize_votes(
    scene: &PointCloud,
    truth: &KeypointSet,
    diameter: f64,
    model: &VoteModel,
    seed: u64,
) -> Result<Predictions> {
    model.validate(truth.len())?;
    scene.ensure_nonempty("scene")?;
    let (n, k) = (scene.len(), truth.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrupted = index::sample(&mut rng, k, model.corrupted_keypoints).into_vec();
    corrupted.sort_unstable();
    let mut centers = truth.points.clone();
    for &c in &corrupted {
        centers[c] += unit_vector(&mut rng).scale_f64(model.corruption_scale * diameter);
    }
    for c in &mut centers {
        let gap = scene
            .points
            .iter()
            .map(|s| s.distance(*c))
            .fold(f64::INFINITY, f64::min);
        let g = Point3::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        *c += g.scale_f64(model.hidden_bias * gap);
    }

    let logit_noise = Normal::new(0.0, model.confidence_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut field = OffsetField::zeros(n, k);
    for (i, s) in scene.points.iter().enumerate() {
        for (j, c) in centers.iter().enumerate() {
            let vote = if rng.random::<f64>() < model.outlier_fraction {
                let r = model.outlier_scale * diameter * rng.random::<f64>().cbrt();
                *c + unit_vector(&mut rng).scale_f64(r)
            } else {
                let sigma = model.noise + model.noise_slope * c.distance(*s);
                let g = Point3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                *c + g.scale_f64(sigma)
            };
            let idx = field.index(i, j);
            field.offsets[idx] = vote - *s;
            field.confidence_logits[idx] =
                -vote.distance(*c) / model.confidence_temperature + logit_noise.sample(&mut rng);
        }
    }
    Ok(Predictions { field, corrupted })
}
