//! The end-to-end training objective as a function of raw predictions.
//!
//! Parameters are laid out as one [`ParameterVector`] with an `"offsets"`
//! block (`N·K·3`, point-major) followed by a `"confidence_logits"` block
//! (`N·K`). Evaluation runs confidence softmax → vote aggregation → robust
//! pose → losses, all in the caller's scalar type.

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::keypoints::{aggregate_keypoints, normalize_confidences, KeypointSet, OffsetField};
use crate::linalg::{Point3, Vec3};
use crate::losses::{joint_loss, offset_loss, pose_loss, LossConfig};
use crate::real::Real;
use crate::solver::{CandidateBank, PoseEstimator};

use super::{ensure_finite, grad_slice, Objective, ParameterVector};

pub const OFFSETS: &str = "offsets";
pub const LOGITS: &str = "confidence_logits";

/// Everything computed by one forward evaluation.
#[derive(Debug, Clone)]
pub struct PipelineEval<T> {
    pub offset_loss: T,
    /// `None` when every minimal solution was degenerate.
    pub pose_loss: Option<T>,
    pub joint: T,
    pub keypoints: KeypointSet<T>,
    pub pose: Option<Pose<T>>,
    pub bank: Option<CandidateBank<T>>,
}

/// Fixed scene, model keypoints and supervision for one training instance.
#[derive(Debug, Clone)]
pub struct JointProblem {
    scene: PointCloud,
    estimator: PoseEstimator,
    truth_offsets: OffsetField,
    truth_pose: Pose,
    loss: LossConfig,
}

impl JointProblem {
    pub fn new(
        scene: PointCloud,
        estimator: PoseEstimator,
        truth_offsets: OffsetField,
        truth_pose: Pose,
        loss: LossConfig,
    ) -> Result<Self> {
        truth_offsets.check_dims()?;
        loss.validate()?;
        if truth_offsets.num_points != scene.len() {
            return Err(Error::invalid(format!(
                "{} supervised points for a {}-point scene",
                truth_offsets.num_points,
                scene.len()
            )));
        }
        if truth_offsets.num_keypoints != estimator.model_keypoints().len() {
            return Err(Error::invalid(
                "keypoint count differs between supervision and estimator",
            ));
        }
        Ok(Self {
            scene,
            estimator,
            truth_offsets,
            truth_pose,
            loss,
        })
    }

    pub fn num_points(&self) -> usize {
        self.truth_offsets.num_points
    }

    pub fn num_keypoints(&self) -> usize {
        self.truth_offsets.num_keypoints
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    pub fn scene(&self) -> &PointCloud {
        &self.scene
    }

    pub fn estimator(&self) -> &PoseEstimator {
        &self.estimator
    }

    pub fn truth_pose(&self) -> &Pose {
        &self.truth_pose
    }

    pub fn truth_offsets(&self) -> &OffsetField {
        &self.truth_offsets
    }

    /// Same instance with a different loss blend.
    pub fn with_loss(&self, loss: LossConfig) -> Result<Self> {
        loss.validate()?;
        Ok(Self { loss, ..self.clone() })
    }

    /// Packs a field into the flat layout.
    pub fn parameters(&self, field: &OffsetField) -> Result<ParameterVector> {
        field.check_dims()?;
        if field.num_points != self.num_points() || field.num_keypoints != self.num_keypoints() {
            return Err(Error::invalid("offset field does not match the problem"));
        }
        let flat: Vec<f64> = field.offsets.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        ParameterVector::new()
            .with(OFFSETS, &flat)?
            .with(LOGITS, &field.confidence_logits)
    }

    pub fn num_parameters(&self) -> usize {
        self.num_points() * self.num_keypoints() * 4
    }

    pub fn field<T: Real>(&self, params: &[T]) -> Result<OffsetField<T>> {
        let (n, k) = (self.num_points(), self.num_keypoints());
        if params.len() != self.num_parameters() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                params.len()
            )));
        }
        let (off, logits) = params.split_at(n * k * 3);
        Ok(OffsetField {
            num_points: n,
            num_keypoints: k,
            offsets: off.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            confidence_logits: logits.to_vec(),
        })
    }

    pub fn evaluate<T: Real>(&self, params: &[T]) -> Result<PipelineEval<T>> {
        let field = self.field(params)?;
        let off = offset_loss(&field, &self.truth_offsets)?;
        ensure_finite("offset loss", [&off])?;
        let conf = normalize_confidences(&field.confidence_logits, field.num_points, field.num_keypoints)?;
        ensure_finite("confidence softmax", &conf.weights)?;
        let keypoints = aggregate_keypoints(&self.scene, &field, &conf)?;
        ensure_finite(
            "keypoint aggregation",
            keypoints.points.iter().flat_map(|p| [&p.x, &p.y, &p.z]),
        )?;
        let (pose, bank) = match self.estimator.estimate(&keypoints.points) {
            Ok((p, b)) => (Some(p), Some(b)),
            Err(Error::NoValidCandidate | Error::AggregationDegenerate { .. }) => (None, None),
            Err(e) => return Err(e),
        };
        let pl = match &pose {
            Some(p) => {
                ensure_finite("pose estimation", pose_scalars(p).iter())?;
                let l = pose_loss(p, &self.truth_pose, &self.loss)?;
                ensure_finite("pose loss", [&l])?;
                Some(l)
            }
            None => None,
        };
        let joint = match pl {
            Some(l) => joint_loss(off, l, &self.loss),
            None => off,
        };
        Ok(PipelineEval {
            offset_loss: off,
            pose_loss: pl,
            joint,
            keypoints,
            pose,
            bank,
        })
    }

    /// Gradient of the joint loss by chaining an exact pose-loss gradient
    /// with respect to the `3K` keypoint coordinates through the closed-form
    /// Jacobian of vote aggregation. Equal to [`super::grad`] on
    /// [`JointObjective`] up to roundoff, at a fraction of the cost.
    pub fn gradient(&self, params: &[f64]) -> Result<(PipelineEval<f64>, Vec<f64>)> {
        let eval = self.evaluate::<f64>(params)?;
        let g = self.gradient_at(params, &eval)?;
        Ok((eval, g))
    }

    /// [`Self::gradient`] given the primal evaluation at `params`.
    pub fn gradient_at(&self, params: &[f64], eval: &PipelineEval<f64>) -> Result<Vec<f64>> {
        let field = self.field(params)?;
        let (n, k) = (field.num_points, field.num_keypoints);
        let mut g = vec![0.0; params.len()];

        for (idx, (p, t)) in field.offsets.iter().zip(&self.truth_offsets.offsets).enumerate() {
            for a in 0..3 {
                g[idx * 3 + a] = smooth_l1_derivative(p[a] - t[a]);
            }
        }

        if eval.pose.is_some() && self.loss.beta > 0.0 {
            let flat: Vec<f64> = eval.keypoints.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
            let objective = KeypointPoseObjective {
                assignments: eval.bank.as_ref(),
                ..KeypointPoseObjective::from_problem(self)
            };
            let g_kp = grad_slice(&objective, &flat)?;
            let conf = normalize_confidences(&field.confidence_logits, n, k)?;
            let beta = self.loss.beta;
            let logit_base = n * k * 3;
            for i in 0..n {
                for j in 0..k {
                    let idx = i * k + j;
                    let c = conf.weights[idx];
                    let gk = Point3::new(g_kp[3 * j], g_kp[3 * j + 1], g_kp[3 * j + 2]);
                    for a in 0..3 {
                        g[idx * 3 + a] += beta * c * gk[a];
                    }
                    let vote = self.scene.points[i] + field.offsets[idx];
                    g[logit_base + idx] += beta * c * gk.dot(vote - eval.keypoints.points[j]);
                }
            }
        }
        ensure_finite("gradient", g.iter())?;
        Ok(g)
    }
}

fn pose_scalars<T: Real>(p: &Pose<T>) -> [T; 7] {
    let q = p.rotation;
    let t = p.translation;
    [q.w, q.x, q.y, q.z, t.x, t.y, t.z]
}

fn smooth_l1_derivative(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Joint loss of the full pipeline; the pose term must exist.
#[derive(Debug, Clone)]
pub struct JointObjective<'a>(pub &'a JointProblem);

impl Objective for JointObjective<'_> {
    fn eval<T: Real>(&self, params: &[T]) -> Result<T> {
        let e = self.0.evaluate(params)?;
        if e.pose_loss.is_none() {
            return Err(Error::NoValidCandidate);
        }
        Ok(e.joint)
    }
}

/// Offset loss alone, over the offsets block only.
#[derive(Debug, Clone)]
pub struct OffsetObjective<'a>(pub &'a OffsetField);

impl Objective for OffsetObjective<'_> {
    fn eval<T: Real>(&self, params: &[T]) -> Result<T> {
        let truth = self.0;
        if params.len() != truth.offsets.len() * 3 {
            return Err(Error::invalid("offset parameter count mismatch"));
        }
        let pred = OffsetField {
            num_points: truth.num_points,
            num_keypoints: truth.num_keypoints,
            offsets: params.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            confidence_logits: vec![T::zero(); truth.confidence_logits.len()],
        };
        offset_loss(&pred, truth)
    }
}

/// Pose loss of the robust estimate as a function of the `3K` scene keypoint
/// coordinates.
#[derive(Debug, Clone)]
pub struct KeypointPoseObjective<'a> {
    pub estimator: &'a PoseEstimator,
    pub truth: Pose,
    pub loss: LossConfig,
    /// Assignments from a primal estimate at the evaluation point.
    pub assignments: Option<&'a CandidateBank>,
}

impl<'a> KeypointPoseObjective<'a> {
    pub fn from_problem(problem: &'a JointProblem) -> Self {
        Self {
            estimator: &problem.estimator,
            truth: problem.truth_pose,
            loss: problem.loss,
            assignments: None,
        }
    }
}

impl Objective for KeypointPoseObjective<'_> {
    fn eval<T: Real>(&self, params: &[T]) -> Result<T> {
        if !params.len().is_multiple_of(3) {
            return Err(Error::invalid("keypoint coordinates must come in triples"));
        }
        let kps: Vec<Vec3<T>> = params.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let (pose, _) = match self.assignments {
            Some(bank) => self.estimator.estimate_reusing(&kps, bank)?,
            None => self.estimator.estimate(&kps)?,
        };
        pose_loss(&pose, &self.truth, &self.loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{grad, relative_error};
    use crate::harness::gradcheck::{gradcheck_instance, GradcheckConfig};

    #[test]
    fn structured_gradient_matches_forward_mode() {
        let inst = gradcheck_instance(3, &GradcheckConfig::default()).unwrap();
        let exact = grad(&JointObjective(&inst.problem), &inst.params).unwrap();
        let (_, structured) = inst.problem.gradient(inst.params.values()).unwrap();
        let scale = exact.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, b) in exact.iter().zip(&structured) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn reused_assignments_agree_at_the_evaluation_point() {
        let inst = gradcheck_instance(11, &GradcheckConfig::default()).unwrap();
        let p = &inst.problem;
        let eval = p.evaluate::<f64>(inst.params.values()).unwrap();
        let bank = eval.bank.as_ref().unwrap();
        let (fresh, _) = p.estimator().estimate::<f64>(&eval.keypoints.points).unwrap();
        let (reused, again) = p
            .estimator()
            .estimate_reusing::<f64>(&eval.keypoints.points, bank)
            .unwrap();
        assert_eq!(fresh, reused);
        assert_eq!(again.assignment_digest, bank.assignment_digest);

        let flat: Vec<f64> = eval.keypoints.points.iter().flat_map(|q| [q.x, q.y, q.z]).collect();
        let plain = KeypointPoseObjective::from_problem(p);
        let frozen = KeypointPoseObjective {
            assignments: Some(bank),
            ..KeypointPoseObjective::from_problem(p)
        };
        let a = plain.eval::<f64>(&flat).unwrap();
        let b = frozen.eval::<f64>(&flat).unwrap();
        assert!(relative_error(a, b) < 1e-14);
        let ga = grad_slice(&plain, &flat).unwrap();
        let gb = grad_slice(&frozen, &flat).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn zero_beta_gradient_is_offset_gradient() {
        let inst = gradcheck_instance(5, &GradcheckConfig::default()).unwrap();
        let loss = LossConfig {
            beta: 0.0,
            ..*inst.problem.loss_config()
        };
        let p = inst.problem.with_loss(loss).unwrap();
        let (_, g) = p.gradient(inst.params.values()).unwrap();
        let n_off = p.num_points() * p.num_keypoints() * 3;
        assert!(g[n_off..].iter().all(|v| *v == 0.0));
        let exact = grad_slice(&OffsetObjective(p.truth_offsets()), &inst.params.values()[..n_off]).unwrap();
        assert_eq!(&g[..n_off], &exact[..]);
    }

    #[test]
    fn wrong_parameter_count_is_rejected() {
        let inst = gradcheck_instance(5, &GradcheckConfig::default()).unwrap();
        let short = &inst.params.values()[1..];
        assert!(inst.problem.evaluate::<f64>(short).is_err());
    }
}
