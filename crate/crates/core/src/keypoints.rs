//! Keypoint selection on the model and confidence-weighted keypoint voting.
//!
//! Every scene point `sᵢ` casts one vote `sᵢ + v̂ₖᵢ` per keypoint `k`; the
//! keypoint estimate is the convex combination of its votes with weights
//! obtained by a per-keypoint softmax of the confidence logits.

use crate::error::{Error, Result};
use crate::geometry::{centroid, PointCloud};
use crate::linalg::{Point3, Vec3};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet<T = f64> {
    pub points: Vec<Vec3<T>>,
}

impl<T: Real> KeypointSet<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn value(&self) -> KeypointSet<f64> {
        KeypointSet::new(self.points.iter().map(|p| p.value()).collect())
    }

    pub fn constant(k: &KeypointSet<f64>) -> Self {
        Self::new(k.points.iter().map(|p| Vec3::constant(*p)).collect())
    }
}

impl KeypointSet<f64> {
    /// Checks `K ≥ 3` and pairwise distinctness.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 keypoints, got {}",
                self.points.len()
            )));
        }
        for (i, a) in self.points.iter().enumerate() {
            if self.points[i + 1..].iter().any(|b| a == b) {
                return Err(Error::invalid(format!("keypoint {i} is duplicated")));
            }
        }
        Ok(())
    }
}

/// Per-point, per-keypoint offsets and raw confidence logits.
///
/// Entry `(i, k)` lives at index `i·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField<T = f64> {
    pub num_points: usize,
    pub num_keypoints: usize,
    pub offsets: Vec<Vec3<T>>,
    pub confidence_logits: Vec<T>,
}

impl<T: Real> OffsetField<T> {
    pub fn zeros(num_points: usize, num_keypoints: usize) -> Self {
        Self {
            num_points,
            num_keypoints,
            offsets: vec![Vec3::zero(); num_points * num_keypoints],
            confidence_logits: vec![T::zero(); num_points * num_keypoints],
        }
    }

    #[inline]
    pub fn index(&self, point: usize, keypoint: usize) -> usize {
        point * self.num_keypoints + keypoint
    }

    pub fn offset(&self, point: usize, keypoint: usize) -> Vec3<T> {
        self.offsets[self.index(point, keypoint)]
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.num_points * self.num_keypoints;
        if self.offsets.len() != n || self.confidence_logits.len() != n {
            return Err(Error::invalid(format!(
                "offset field is {}×{} but holds {} offsets and {} logits",
                self.num_points,
                self.num_keypoints,
                self.offsets.len(),
                self.confidence_logits.len()
            )));
        }
        Ok(())
    }
}

/// Per-keypoint probability vectors over the scene points (same layout as
/// [`OffsetField`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceField<T = f64> {
    pub num_points: usize,
    pub num_keypoints: usize,
    pub weights: Vec<T>,
}

impl<T: Real> ConfidenceField<T> {
    pub fn uniform(num_points: usize, num_keypoints: usize) -> Self {
        let w = 1.0 / num_points as f64;
        Self {
            num_points,
            num_keypoints,
            weights: vec![T::constant(w); num_points * num_keypoints],
        }
    }

    pub fn weight(&self, point: usize, keypoint: usize) -> T {
        self.weights[point * self.num_keypoints + keypoint]
    }

    pub fn column_sum(&self, keypoint: usize) -> f64 {
        (0..self.num_points).map(|i| self.weight(i, keypoint).value()).sum()
    }
}

/// Greedy farthest point sampling.
///
/// Seeds with the point farthest from the centroid, then repeatedly adds the
/// point maximising its distance to the selected set. Ties go to the lowest
/// index.
pub fn fps_sample(model: &PointCloud, count: usize) -> Result<KeypointSet> {
    Ok(KeypointSet::new(
        fps_indices(&model.points, count)?
            .into_iter()
            .map(|i| model.points[i])
            .collect(),
    ))
}

pub fn fps_indices(points: &[Point3], count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::invalid("keypoint count must be at least 1"));
    }
    if count > points.len() {
        return Err(Error::invalid(format!(
            "cannot sample {count} keypoints from {} points",
            points.len()
        )));
    }
    let c = centroid(points)?;
    let mut first = 0;
    let mut best = -1.0;
    for (i, p) in points.iter().enumerate() {
        let d = (*p - c).norm_squared();
        if d > best {
            best = d;
            first = i;
        }
    }
    let mut selected = vec![first];
    let mut min_dist: Vec<f64> = points.iter().map(|p| (*p - points[first]).norm_squared()).collect();
    while selected.len() < count {
        let mut next = 0;
        let mut best = -1.0;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > best {
                best = d;
                next = i;
            }
        }
        selected.push(next);
        for (i, p) in points.iter().enumerate() {
            let d = (*p - points[next]).norm_squared();
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    Ok(selected)
}

/// `fps_count` FPS keypoints followed by the model centroid.
pub fn keypoint_config(model: &PointCloud, fps_count: usize) -> Result<KeypointSet> {
    let mut kps = fps_sample(model, fps_count)?;
    kps.points.push(model.centroid()?);
    Ok(kps)
}

/// Ground-truth offsets `vₖᵢ = xₖ − sᵢ`; logits are zero.
pub fn true_offsets(scene_keypoints: &KeypointSet, scene: &PointCloud) -> OffsetField {
    let k = scene_keypoints.len();
    let mut field = OffsetField::zeros(scene.len(), k);
    for (i, s) in scene.points.iter().enumerate() {
        for (j, x) in scene_keypoints.points.iter().enumerate() {
            field.offsets[i * k + j] = *x - *s;
        }
    }
    field
}

/// Softmax over points, independently for each keypoint column.
///
/// The max-subtraction pivot is taken from primal values and treated as a
/// constant, which leaves both the value and the derivative unchanged.
pub fn normalize_confidences<T: Real>(
    logits: &[T],
    num_points: usize,
    num_keypoints: usize,
) -> Result<ConfidenceField<T>> {
    if logits.len() != num_points * num_keypoints || num_points == 0 {
        return Err(Error::invalid(format!(
            "expected {num_points}×{num_keypoints} logits, got {}",
            logits.len()
        )));
    }
    if let Some(bad) = logits.iter().position(|l| !l.value().is_finite()) {
        return Err(Error::invalid(format!("logit {bad} is not finite")));
    }
    let mut weights = vec![T::zero(); logits.len()];
    for k in 0..num_keypoints {
        let pivot = (0..num_points)
            .map(|i| logits[i * num_keypoints + k].value())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = T::zero();
        for i in 0..num_points {
            let e = (logits[i * num_keypoints + k] - pivot).exp();
            weights[i * num_keypoints + k] = e;
            total += e;
        }
        for i in 0..num_points {
            let w = &mut weights[i * num_keypoints + k];
            *w = *w / total;
        }
    }
    Ok(ConfidenceField {
        num_points,
        num_keypoints,
        weights,
    })
}

/// Confidence-weighted keypoint votes: `x̂ₖ = Σᵢ cₖᵢ·(sᵢ + v̂ₖᵢ)`.
pub fn aggregate_keypoints<T: Real>(
    scene: &PointCloud,
    field: &OffsetField<T>,
    conf: &ConfidenceField<T>,
) -> Result<KeypointSet<T>> {
    field.check_dims()?;
    let (n, k) = (field.num_points, field.num_keypoints);
    if scene.len() != n || conf.num_points != n || conf.num_keypoints != k || conf.weights.len() != n * k {
        return Err(Error::invalid(format!(
            "dimension mismatch: scene {} points, offsets {}×{}, confidences {}×{}",
            scene.len(),
            n,
            k,
            conf.num_points,
            conf.num_keypoints
        )));
    }
    let mut out = vec![Vec3::<T>::zero(); k];
    for (i, s) in scene.points.iter().enumerate() {
        let s = Vec3::<T>::constant(*s);
        for (j, acc) in out.iter_mut().enumerate() {
            let idx = i * k + j;
            *acc += (s + field.offsets[idx]).scale(conf.weights[idx]);
        }
    }
    Ok(KeypointSet::new(out))
}
