//! Per-scene free-parameter predictor trained by gradient descent through
//! the whole estimator.

use serde::{Deserialize, Serialize};

use crate::diff::pipeline::JointProblem;
use crate::diff::ParameterVector;
use crate::error::{Error, Result};
use crate::geometry::{apply_pose, PointCloud};
use crate::keypoints::{true_offsets, KeypointSet, OffsetField};
use crate::linalg::Point3;
use crate::losses::LossConfig;
use crate::solver::{EstimatorConfig, PoseEstimator};

use super::scene::SceneSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub step_size: f64,
    /// Training stops once backtracking shrinks the step below this.
    pub min_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_size: 1e-2,
            min_step: 1e-12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step_size must be > 0, got {}",
                self.step_size
            )));
        }
        if !(self.min_step > 0.0) || self.min_step > self.step_size {
            return Err(Error::InvalidConfig("min_step must be in (0, step_size]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub joint: f64,
    pub offset_loss: f64,
    /// NaN while no pose can be estimated.
    pub pose_loss: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct ToyPredictor {
    pub params: ParameterVector,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub predictor: ToyPredictor,
    /// Entry `0` is the initial state; entry `i` follows step `i`.
    pub trace: Vec<TraceRecord>,
}

impl TrainOutcome {
    /// First finite pose loss in the trace.
    pub fn initial_pose_loss(&self) -> Option<f64> {
        self.trace.iter().map(|r| r.pose_loss).find(|l| l.is_finite())
    }

    pub fn final_pose_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.pose_loss)
    }

    pub fn final_offset_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.offset_loss)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.trace {
            out.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Supervision displacements planted on some keypoints' target offsets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corruption {
    pub keypoints: Vec<usize>,
    pub bias: Vec<Point3>,
}

/// Builds the training instance for `sample`: targets are the exact offsets
/// from each scene point to the posed model keypoints, optionally corrupted.
pub fn toy_problem(
    sample: &SceneSample,
    model: &PointCloud,
    model_kps: &KeypointSet,
    estimator: EstimatorConfig,
    loss: LossConfig,
    corruption: Option<&Corruption>,
) -> Result<JointProblem> {
    model_kps.validate()?;
    let scene_kps = KeypointSet::new(apply_pose(&sample.true_pose, &PointCloud::new(model_kps.points.clone()))?.points);
    let mut truth = true_offsets(&scene_kps, &sample.scene);
    if let Some(c) = corruption {
        if c.keypoints.len() != c.bias.len() || c.keypoints.iter().any(|&k| k >= model_kps.len()) {
            return Err(Error::InvalidConfig(
                "corruption keypoints and biases do not line up".into(),
            ));
        }
        for (&k, b) in c.keypoints.iter().zip(&c.bias) {
            for i in 0..truth.num_points {
                let idx = truth.index(i, k);
                truth.offsets[idx] += *b;
            }
        }
    }
    let est = PoseEstimator::new(&model_kps.points, &sample.scene, model, estimator)?;
    JointProblem::new(sample.scene.clone(), est, truth, sample.true_pose, loss)
}

/// Plain gradient descent from zero offsets and zero logits. A step that
/// raises the joint loss is undone and retried at half the size.
pub fn train_toy(problem: &JointProblem, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let init = OffsetField::zeros(problem.num_points(), problem.num_keypoints());
    let mut params = problem.parameters(&init)?;
    let mut step = config.step_size;
    let (mut eval, mut grad) = problem.gradient(params.values())?;
    let record = |iteration: usize, e: &crate::diff::pipeline::PipelineEval<f64>, step: f64| TraceRecord {
        iteration,
        joint: e.joint,
        offset_loss: e.offset_loss,
        pose_loss: e.pose_loss.unwrap_or(f64::NAN),
        step_size: step,
    };
    if !eval.joint.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    let mut trace = vec![record(0, &eval, step)];
    for iteration in 1..=config.iterations {
        let accepted = loop {
            let trial: Vec<f64> = params.values().iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let e = problem.evaluate::<f64>(&trial);
            match e {
                Ok(e) if e.joint.is_finite() && e.joint <= eval.joint => break Some((trial, e)),
                Ok(e) if !e.joint.is_finite() && step <= config.min_step => {
                    return Err(Error::NonFiniteLoss { iteration });
                }
                Err(Error::NonFiniteGradient { .. }) if step <= config.min_step => {
                    return Err(Error::NonFiniteLoss { iteration });
                }
                Ok(_) | Err(Error::NonFiniteGradient { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
            if step < config.min_step {
                break None;
            }
        };
        let Some((next, next_eval)) = accepted else {
            break;
        };
        params.values_mut().copy_from_slice(&next);
        grad = problem.gradient_at(params.values(), &next_eval)?;
        eval = next_eval;
        if !eval.joint.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        trace.push(record(iteration, &eval, step));
    }
    Ok(TrainOutcome {
        predictor: ToyPredictor {
            params,
            config: *config,
        },
        trace,
    })
}
