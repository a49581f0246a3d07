//! Pose accuracy metrics: ADD, ADD-S, threshold accuracy and the AUC of the
//! accuracy-vs-threshold curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_pose, PointCloud, Pose};
use crate::real::compensated_sum;

pub const DEFAULT_AUC_THRESHOLD: f64 = 0.1;
pub const ACCURACY_THRESHOLD: f64 = 0.02;
pub const DIAMETER_FRACTION: f64 = 0.1;

/// Mean distance between corresponding model points under the two poses.
pub fn add_metric(pred: &Pose, truth: &Pose, model: &PointCloud) -> Result<f64> {
    model.ensure_nonempty("model")?;
    let a = apply_pose(pred, model)?;
    let b = apply_pose(truth, model)?;
    let sum: f64 = a.points.iter().zip(&b.points).map(|(p, q)| p.distance(*q)).sum();
    Ok(sum / model.len() as f64)
}

/// Mean distance from each predicted model point to the closest true model point.
pub fn add_s_metric(pred: &Pose, truth: &Pose, model: &PointCloud) -> Result<f64> {
    model.ensure_nonempty("model")?;
    let a = apply_pose(pred, model)?;
    let b = apply_pose(truth, model)?;
    let sum: f64 = a
        .points
        .iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q| (*p - *q).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Ok(sum / model.len() as f64)
}

fn check_distances(distances: &[f64], threshold: f64) -> Result<()> {
    if distances.is_empty() {
        return Err(Error::invalid("no distances"));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("threshold must be > 0, got {threshold}")));
    }
    if distances.iter().any(|d| d.is_nan()) {
        return Err(Error::invalid("distance is NaN"));
    }
    Ok(())
}

/// Area under `τ ↦ accuracy_at(d, τ)` on `[0, T]`, divided by `T`.
///
/// A sample at distance `d < T` is counted for every `τ > d`, which
/// contributes `T − d`; so the integral is exact without any discretisation.
/// Terms are normalised before summing so perfect predictions give exactly 1.
pub fn auc(distances: &[f64], max_threshold: f64) -> Result<f64> {
    check_distances(distances, max_threshold)?;
    let area = compensated_sum(distances.iter().map(|d| (1.0 - d.max(0.0) / max_threshold).max(0.0)));
    Ok(area / distances.len() as f64)
}

/// Fraction of distances strictly below `threshold`.
pub fn accuracy_at(distances: &[f64], threshold: f64) -> Result<f64> {
    check_distances(distances, threshold)?;
    let hits = distances.iter().filter(|d| **d < threshold).count();
    Ok(hits as f64 / distances.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub add: f64,
    pub add_s: f64,
    /// ADD-S below 2 cm.
    pub correct_at_2cm: bool,
    /// ADD below a tenth of the model diameter.
    pub correct_at_10pct_diameter: bool,
}

impl SampleMetrics {
    pub fn evaluate(pred: &Pose, truth: &Pose, model: &PointCloud) -> Result<Self> {
        let diameter = model.diameter();
        let add = add_metric(pred, truth, model)?;
        let add_s = add_s_metric(pred, truth, model)?;
        Ok(Self {
            add,
            add_s,
            correct_at_2cm: add_s < ACCURACY_THRESHOLD,
            correct_at_10pct_diameter: add < DIAMETER_FRACTION * diameter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleMetrics>,
    pub auc_add_s: f64,
    pub auc_add: f64,
    pub accuracy_2cm: f64,
    pub accuracy_10pct: f64,
    pub mean_add: f64,
    pub mean_add_s: f64,
}

impl EvalReport {
    pub fn from_samples(samples: Vec<SampleMetrics>, auc_threshold: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples to report"));
        }
        let add: Vec<f64> = samples.iter().map(|s| s.add).collect();
        let add_s: Vec<f64> = samples.iter().map(|s| s.add_s).collect();
        let n = samples.len() as f64;
        let frac = |f: fn(&SampleMetrics) -> bool| samples.iter().filter(|s| f(s)).count() as f64 / n;
        Ok(Self {
            auc_add_s: auc(&add_s, auc_threshold)?,
            auc_add: auc(&add, auc_threshold)?,
            accuracy_2cm: frac(|s| s.correct_at_2cm),
            accuracy_10pct: frac(|s| s.correct_at_10pct_diameter),
            mean_add: add.iter().sum::<f64>() / n,
            mean_add_s: add_s.iter().sum::<f64>() / n,
            samples,
        })
    }
}
