//! Exact-vs-finite-difference gradient comparison on seeded instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::pipeline::{JointObjective, JointProblem, KeypointPoseObjective, OffsetObjective, LOGITS};
use crate::diff::{
    fd_grad, fd_grad_masked, fd_grad_masked_steps, grad, grad_slice, relative_error, ParameterVector, Primal, FD_STEP,
};
use crate::error::{Error, Result};
use crate::keypoints::{aggregate_keypoints, keypoint_config, normalize_confidences, KeypointSet};
use crate::linalg::Point3;
use crate::losses::LossConfig;
use crate::solver::{kabsch_solve, triples, EstimatorConfig};

use super::scene::{derive_seed, generate_scene, synthetic_model, SceneConfig, Shape};
use super::train::toy_problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub model_points: usize,
    pub occlusion: f64,
    /// Keeps scene points off the model surface, where point distances have a cone.
    pub scene_noise: f64,
    pub num_keypoints: usize,
    /// Std-dev of the perturbation applied to the exact offsets, meters.
    pub offset_noise: f64,
    pub logit_scale: f64,
    pub lambda: f64,
    pub tolerance: f64,
    /// Components with smaller exact magnitude are not compared.
    pub min_magnitude: f64,
    pub step: f64,
    /// Step for confidence logits in the joint objective. Their gradients are
    /// tiny next to the loss value, so `step` leaves them in the roundoff floor.
    pub logit_step: f64,
    /// Step for the pose loss w.r.t. keypoints. Scene points that nearly
    /// coincide with a posed model point give the loss large third
    /// derivatives, which `step` turns into truncation error.
    pub keypoint_step: f64,
    /// Keypoint components within this distance of a nearest-neighbour switch
    /// are skipped. Joint parameters only move keypoints by a fraction of
    /// their step, so there only the stencil itself is checked.
    pub boundary_margin: f64,
    /// Instances with a keypoint triple whose `σ₂/σ₁` falls below this are redrawn.
    pub min_triple_ratio: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            model_points: 48,
            occlusion: 0.5,
            scene_noise: 0.003,
            num_keypoints: 9,
            offset_noise: 0.01,
            logit_scale: 1.0,
            lambda: 0.01,
            tolerance: 1e-4,
            min_magnitude: 1e-8,
            step: FD_STEP,
            logit_step: 1e-4,
            keypoint_step: 1e-6,
            boundary_margin: 0.0,
            min_triple_ratio: 0.06,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckInstance {
    pub seed: u64,
    pub problem: JointProblem,
    pub params: ParameterVector,
}

impl GradcheckInstance {
    /// Keypoints aggregated from the instance's predictions, flattened.
    pub fn keypoint_coordinates(&self) -> Result<Vec<f64>> {
        let e = self.problem.evaluate::<f64>(self.params.values())?;
        Ok(e.keypoints.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect())
    }
}

/// A perturbed-prediction training instance with well-conditioned triples.
pub fn gradcheck_instance(seed: u64, config: &GradcheckConfig) -> Result<GradcheckInstance> {
    for attempt in 0..200u64 {
        let s = derive_seed(seed, attempt);
        let model = synthetic_model(Shape::Bumpy, config.model_points, derive_seed(s, 0))?;
        let kps = keypoint_config(&model, config.num_keypoints - 1)?;
        let scene_cfg = SceneConfig {
            occlusion: config.occlusion,
            noise_sigma: config.scene_noise,
            ..Default::default()
        };
        let sample = generate_scene("bumpy", &model, &scene_cfg, derive_seed(s, 1))?;
        let est = EstimatorConfig {
            lambda: config.lambda,
            ..Default::default()
        };
        let problem = toy_problem(&sample, &model, &kps, est, LossConfig::default(), None)?;
        let mut field = problem.truth_offsets().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, 2));
        let off = Normal::new(0.0, config.offset_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let logit = Normal::new(0.0, config.logit_scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for v in &mut field.offsets {
            *v += Point3::new(off.sample(&mut rng), off.sample(&mut rng), off.sample(&mut rng));
        }
        for l in &mut field.confidence_logits {
            *l = logit.sample(&mut rng);
        }
        let conf = normalize_confidences(&field.confidence_logits, field.num_points, field.num_keypoints)?;
        let predicted = aggregate_keypoints(problem.scene(), &field, &conf)?;
        if well_conditioned(&kps, &predicted, config.min_triple_ratio) {
            let params = problem.parameters(&field)?;
            return Ok(GradcheckInstance {
                seed: s,
                problem,
                params,
            });
        }
    }
    Err(Error::DegenerateConfiguration(format!(
        "no well-conditioned instance for seed {seed}"
    )))
}

fn well_conditioned(model_kps: &KeypointSet, predicted: &KeypointSet, min_ratio: f64) -> bool {
    triples(model_kps.len()).iter().all(|t| {
        let m = t.map(|i| model_kps.points[i]);
        let s = t.map(|i| predicted.points[i]);
        let spread = |p: &[Point3; 3]| {
            let a = p[1] - p[0];
            let b = p[2] - p[0];
            let area = a.cross(b).norm();
            area / a.norm_squared().max(b.norm_squared()).max((p[2] - p[1]).norm_squared())
        };
        spread(&m) > min_ratio
            && spread(&s) > min_ratio
            && kabsch_solve::<f64>(&m, &s).is_ok_and(|sol| !sol.ill_conditioned)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub objective: String,
    pub seed: u64,
    pub components: usize,
    /// Compared against finite differences.
    pub checked: usize,
    /// Within the boundary margin of a nearest-neighbour switch.
    pub straddled: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn compare(objective: &str, seed: u64, exact: &[f64], fd: &[Option<f64>], config: &GradcheckConfig) -> CheckResult {
    let mut r = CheckResult {
        objective: objective.to_string(),
        seed,
        components: exact.len(),
        checked: 0,
        straddled: 0,
        failures: 0,
        max_rel_error: 0.0,
    };
    for (g, f) in exact.iter().zip(fd) {
        let Some(f) = f else {
            r.straddled += 1;
            continue;
        };
        if g.abs() <= config.min_magnitude {
            continue;
        }
        r.checked += 1;
        let e = relative_error(*g, *f);
        r.max_rel_error = r.max_rel_error.max(e);
        if !(e < config.tolerance) {
            r.failures += 1;
        }
    }
    r
}

/// Offset loss, robust pose loss w.r.t. keypoints, and the full joint loss,
/// each by forward mode and by central differences. A fourth entry checks
/// the structured joint gradient against the generic one.
pub fn check_instance(inst: &GradcheckInstance, config: &GradcheckConfig) -> Result<Vec<CheckResult>> {
    let p = &inst.problem;
    let mut out = Vec::new();

    let n_off = p.num_points() * p.num_keypoints() * 3;
    let offsets = &inst.params.values()[..n_off];
    let obj = OffsetObjective(p.truth_offsets());
    let exact = grad_slice(&obj, offsets)?;
    let fd: Vec<Option<f64>> = fd_grad(&Primal(&obj), offsets, config.step)?
        .into_iter()
        .map(Some)
        .collect();
    out.push(compare("offset_loss", inst.seed, &exact, &fd, config));

    let kp = inst.keypoint_coordinates()?;
    let obj = KeypointPoseObjective::from_problem(p);
    let exact = grad_slice(&obj, &kp)?;
    let probe = |x: &[f64]| -> Result<(f64, u64)> {
        let pts: Vec<Point3> = x.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
        let (pose, bank) = p.estimator().estimate::<f64>(&pts)?;
        Ok((
            crate::losses::pose_loss(&pose, p.truth_pose(), p.loss_config())?,
            bank.assignment_digest,
        ))
    };
    out.push(compare(
        "pose_loss",
        inst.seed,
        &exact,
        &fd_grad_masked(&probe, &kp, config.keypoint_step, config.boundary_margin)?,
        config,
    ));

    let exact = grad(&JointObjective(p), &inst.params)?;
    let probe = |x: &[f64]| -> Result<(f64, u64)> {
        let e = p.evaluate::<f64>(x)?;
        let bank = e.bank.ok_or(Error::NoValidCandidate)?;
        Ok((e.joint, bank.assignment_digest))
    };
    let mut steps = vec![config.step; inst.params.len()];
    if let Some(r) = inst.params.range(LOGITS) {
        steps[r].fill(config.logit_step);
    }
    let fd = fd_grad_masked_steps(&probe, inst.params.values(), &steps, 0.0)?;
    out.push(compare("joint_loss", inst.seed, &exact, &fd, config));

    let (_, structured) = p.gradient(inst.params.values())?;
    let as_fd: Vec<Option<f64>> = exact.iter().map(|g| Some(*g)).collect();
    out.push(compare("joint_loss_structured", inst.seed, &structured, &as_fd, config));
    Ok(out)
}

/// Checks `count` instances derived from `seed`.
pub fn run_gradcheck(seed: u64, count: usize, config: &GradcheckConfig) -> Result<Vec<CheckResult>> {
    let mut all = Vec::new();
    for i in 0..count {
        let inst = gradcheck_instance(derive_seed(seed, i as u64), config)?;
        all.extend(check_instance(&inst, config)?);
    }
    Ok(all)
}
