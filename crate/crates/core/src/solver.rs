//! Closed-form pose from keypoint correspondences, the bank of minimal
//! (three-keypoint) solutions, and residue-driven soft candidate weighting.
//!
//! All solver entry points are generic over [`Real`] in the scene keypoints,
//! so the same code yields pose derivatives with respect to the predicted
//! keypoints. Model points and scene points are constants. Nearest-neighbour
//! assignments inside [`residue`] are decided on primal values and are
//! therefore held fixed under differentiation.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotmat_to_quat, PointCloud, Pose, Quaternion, RotationMatrix};
use crate::linalg::{Mat3, Point3, Vec3};
use crate::nn::KdTree;
use crate::real::Real;

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_RESIDUE_POINTS: usize = 512;
/// `σ₂/σ₁` of the cross-covariance below which a configuration is degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-9;
/// `‖q′‖` below which rotation aggregation is rejected.
pub const AGGREGATION_NORM_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KabschSolution<T = f64> {
    pub pose: Pose<T>,
    pub rotation: RotationMatrix<T>,
    /// Rotation derivatives are unreliable (near-equal signed singular values).
    pub ill_conditioned: bool,
}

/// Least-squares rigid fit `argmin Σ ‖R·mₖ + t − xₖ‖²`.
pub fn kabsch_solve<T: Real>(model_kps: &[Point3], scene_kps: &[Vec3<T>]) -> Result<KabschSolution<T>> {
    fit(model_kps, scene_kps, None)
}

/// Weighted variant `argmin Σ wₖ·‖R·mₖ + t − xₖ‖²`; weights need not sum to one.
pub fn weighted_kabsch_solve<T: Real>(
    model_kps: &[Point3],
    scene_kps: &[Vec3<T>],
    weights: &[T],
) -> Result<KabschSolution<T>> {
    if weights.len() != model_kps.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} keypoints",
            weights.len(),
            model_kps.len()
        )));
    }
    if weights.iter().any(|w| !(w.value() >= 0.0)) {
        return Err(Error::invalid("keypoint weights must be non-negative"));
    }
    fit(model_kps, scene_kps, Some(weights))
}

fn fit<T: Real>(model: &[Point3], scene: &[Vec3<T>], weights: Option<&[T]>) -> Result<KabschSolution<T>> {
    if model.len() != scene.len() {
        return Err(Error::invalid(format!(
            "{} model keypoints vs {} scene keypoints",
            model.len(),
            scene.len()
        )));
    }
    if model.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 correspondences, got {}",
            model.len()
        )));
    }
    let w = |k: usize| weights.map_or(T::one(), |w| w[k]);
    let mut total = T::zero();
    let mut model_c = Vec3::<T>::zero();
    let mut scene_c = Vec3::<T>::zero();
    for k in 0..model.len() {
        total += w(k);
        model_c += Vec3::constant(model[k]).scale(w(k));
        scene_c += scene[k].scale(w(k));
    }
    if !(total.value() > 0.0) {
        return Err(Error::DegenerateConfiguration("all keypoint weights are zero".into()));
    }
    let model_c = model_c.scale(T::one() / total);
    let scene_c = scene_c.scale(T::one() / total);

    let mut h = Mat3::<T>::zero();
    for k in 0..model.len() {
        let m = Vec3::constant(model[k]) - model_c;
        let x = (scene[k] - scene_c).scale(w(k));
        h += m.outer(x);
    }
    let solved = T::rotation_from_covariance(&h)?;
    let s = solved.singular_values;
    if !(s[0] > 0.0) || s[1] / s[0] < DEGENERACY_RATIO {
        return Err(Error::DegenerateConfiguration(format!(
            "cross-covariance singular values {:.3e}, {:.3e}, {:.3e}",
            s[0], s[1], s[2]
        )));
    }
    let rotation = solved.rotation;
    let translation = scene_c - rotation.mul_vec(model_c);
    let q = rotmat_to_quat(&rotation)?;
    Ok(KabschSolution {
        pose: Pose::new(q, translation),
        rotation,
        ill_conditioned: solved.ill_conditioned,
    })
}

/// All 3-subsets of `0..k` in lexicographic order.
pub fn triples(k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            for c in b + 1..k {
                out.push([a, b, c]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalSolution<T = f64> {
    pub triple: [usize; 3],
    /// `None` when the triple is degenerate.
    pub solution: Option<KabschSolution<T>>,
}

/// One closed-form solve per keypoint triple. Degenerate triples are kept
/// with `solution = None`.
pub fn minimal_bank<T: Real>(model_kps: &[Point3], scene_kps: &[Vec3<T>]) -> Result<Vec<MinimalSolution<T>>> {
    if model_kps.len() != scene_kps.len() {
        return Err(Error::invalid("model and scene keypoint counts differ"));
    }
    if model_kps.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 keypoints, got {}",
            model_kps.len()
        )));
    }
    triples(model_kps.len())
        .into_iter()
        .map(|triple| {
            let m = triple.map(|i| model_kps[i]);
            let s = triple.map(|i| scene_kps[i]);
            match kabsch_solve(&m, &s) {
                Ok(sol) => Ok(MinimalSolution {
                    triple,
                    solution: Some(sol),
                }),
                Err(Error::DegenerateConfiguration(_)) => Ok(MinimalSolution { triple, solution: None }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Scene points used for residues, plus a kd-tree over the model.
///
/// The nearest neighbour of `sⱼ` among `{R·p + t}` is found as the nearest
/// neighbour of `Rᵀ·(sⱼ − t)` among `{p}`; both are the same point.
#[derive(Debug, Clone)]
pub struct ResidueContext {
    model: Vec<Point3>,
    tree: KdTree,
    scene: Vec<Point3>,
}

impl ResidueContext {
    /// Uses at most `max_points` scene points, drawn uniformly without
    /// replacement (seeded) and kept in their original order.
    pub fn new(scene: &PointCloud, model: &PointCloud, max_points: usize, seed: u64) -> Result<Self> {
        scene.ensure_nonempty("scene")?;
        model.ensure_nonempty("model")?;
        if max_points == 0 {
            return Err(Error::invalid("residue point cap must be positive"));
        }
        let scene = if scene.len() > max_points {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = index::sample(&mut rng, scene.len(), max_points).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| scene.points[i]).collect()
        } else {
            scene.points.clone()
        };
        Ok(Self {
            tree: KdTree::new(&model.points),
            model: model.points.clone(),
            scene,
        })
    }

    pub fn scene_points(&self) -> &[Point3] {
        &self.scene
    }

    /// Index of the model point nearest to each scene point under `pose`.
    pub fn correspondences(&self, rotation: &Mat3<f64>, translation: Point3) -> Vec<usize> {
        let rt = rotation.transpose();
        self.scene
            .iter()
            .map(|s| {
                let q = rt.mul_vec(*s - translation);
                self.tree.nearest(q).map(|(i, _)| i).unwrap_or(0)
            })
            .collect()
    }

    /// Mean distance from each scene point to its nearest transformed model point.
    pub fn residue<T: Real>(&self, rotation: &RotationMatrix<T>, translation: Vec3<T>) -> T {
        self.residue_traced(rotation, translation).0
    }

    /// [`Self::residue`] plus a digest of the nearest-neighbour assignment.
    pub fn residue_traced<T: Real>(&self, rotation: &RotationMatrix<T>, translation: Vec3<T>) -> (T, u64) {
        let nn = self.correspondences(&rotation.value(), translation.value());
        (self.residue_with(rotation, translation, &nn), digest(FNV_OFFSET, &nn))
    }

    /// Same as [`Self::residue`] with the assignment supplied.
    pub fn residue_with<T: Real>(&self, rotation: &RotationMatrix<T>, translation: Vec3<T>, nn: &[usize]) -> T {
        let mut sum = T::zero();
        for (s, &i) in self.scene.iter().zip(nn) {
            let p = rotation.mul_vec(Vec3::constant(self.model[i])) + translation;
            sum += (p - Vec3::constant(*s)).norm();
        }
        sum / self.scene.len() as f64
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn digest(mut h: u64, values: &[usize]) -> u64 {
    for &v in values {
        h = (h ^ v as u64).wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Mean nearest-neighbour distance from scene points to the model under `pose`.
pub fn residue(pose: &Pose, scene: &PointCloud, model: &PointCloud) -> Result<f64> {
    let ctx = ResidueContext::new(scene, model, usize::MAX, 0)?;
    Ok(ctx.residue(&pose.rotation_matrix()?, pose.translation))
}

/// `wᵢ = exp(−dᵢ/λ) / Σ exp(−dⱼ/λ)`, with `dᵢ = +∞` mapping to exactly zero.
///
/// The smallest finite residue is subtracted first (a primal constant).
pub fn softmax_weights<T: Real>(residues: &[T], lambda: f64) -> Result<Vec<T>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("temperature must be > 0, got {lambda}")));
    }
    if residues.iter().any(|r| r.value().is_nan()) {
        return Err(Error::invalid("residue is NaN"));
    }
    let pivot = residues
        .iter()
        .map(|r| r.value())
        .filter(|r| r.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !pivot.is_finite() {
        return Err(Error::NoValidCandidate);
    }
    let mut total = T::zero();
    let mut out: Vec<T> = residues
        .iter()
        .map(|r| {
            if r.value().is_finite() {
                let e = ((*r - pivot) * (-1.0 / lambda)).exp();
                total += e;
                e
            } else {
                T::zero()
            }
        })
        .collect();
    for w in &mut out {
        *w = *w / total;
    }
    Ok(out)
}

/// Weighted mean of candidate translations.
pub fn aggregate_translation<T: Real>(weights: &[T], translations: &[Vec3<T>]) -> Result<Vec3<T>> {
    if weights.len() != translations.len() || weights.is_empty() {
        return Err(Error::invalid(format!(
            "{} weights for {} translations",
            weights.len(),
            translations.len()
        )));
    }
    let mut t = Vec3::zero();
    for (w, ti) in weights.iter().zip(translations) {
        t += ti.scale(*w);
    }
    Ok(t)
}

/// Weighted quaternion sum, normalised.
///
/// Every candidate is first moved to the hemisphere of the highest-weight
/// candidate (lowest index on ties), so `q` and `−q` reinforce rather than
/// cancel.
pub fn aggregate_rotation<T: Real>(weights: &[T], quaternions: &[Quaternion<T>]) -> Result<Quaternion<T>> {
    if weights.len() != quaternions.len() || weights.is_empty() {
        return Err(Error::invalid(format!(
            "{} weights for {} quaternions",
            weights.len(),
            quaternions.len()
        )));
    }
    let mut reference = 0;
    for (i, w) in weights.iter().enumerate() {
        if w.value() > weights[reference].value() {
            reference = i;
        }
    }
    let q_ref = quaternions[reference].value();
    let mut sum = Quaternion::new(T::zero(), T::zero(), T::zero(), T::zero());
    for (w, q) in weights.iter().zip(quaternions) {
        let aligned = if q.value().dot(&q_ref) < 0.0 { q.neg() } else { *q };
        sum = sum.add(&aligned.scale(*w));
    }
    let norm = sum.norm().value();
    if !(norm >= AGGREGATION_NORM_FLOOR) {
        return Err(Error::AggregationDegenerate { norm });
    }
    sum.normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Softmax temperature on residues, meters.
    pub lambda: f64,
    /// Cap on scene points used by residues.
    pub residue_points: usize,
    pub residue_seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            residue_points: DEFAULT_RESIDUE_POINTS,
            residue_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T = f64> {
    /// Sorted keypoint indices.
    pub triple: [usize; 3],
    /// `None` for degenerate triples.
    pub pose: Option<Pose<T>>,
    /// Meters; `+∞` for degenerate triples.
    pub residue: T,
    pub weight: T,
    pub ill_conditioned: bool,
    /// Nearest model point for each residue scene point; empty when degenerate.
    pub correspondences: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBank<T = f64> {
    pub candidates: Vec<Candidate<T>>,
    pub lambda: f64,
    /// Hash of every nearest-neighbour assignment used by the residues. The
    /// estimate is smooth in the keypoints wherever this stays constant.
    pub assignment_digest: u64,
}

impl<T: Real> CandidateBank<T> {
    pub fn weight_sum(&self) -> f64 {
        self.candidates.iter().map(|c| c.weight.value()).sum()
    }

    pub fn degenerate_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.pose.is_none()).count()
    }

    pub fn value(&self) -> CandidateBank<f64> {
        CandidateBank {
            candidates: self
                .candidates
                .iter()
                .map(|c| Candidate {
                    triple: c.triple,
                    pose: c.pose.map(|p| p.value()),
                    residue: c.residue.value(),
                    weight: c.weight.value(),
                    ill_conditioned: c.ill_conditioned,
                    correspondences: c.correspondences.clone(),
                })
                .collect(),
            lambda: self.lambda,
            assignment_digest: self.assignment_digest,
        }
    }

    /// Highest-weight candidate (lowest index on ties).
    pub fn best(&self) -> Option<&Candidate<T>> {
        let mut best: Option<&Candidate<T>> = None;
        for c in &self.candidates {
            if best.is_none_or(|b| c.weight.value() > b.weight.value()) {
                best = Some(c);
            }
        }
        best
    }
}

/// Robust pose estimation against a fixed model and scene.
#[derive(Debug, Clone)]
pub struct PoseEstimator {
    model_kps: Vec<Point3>,
    context: ResidueContext,
    config: EstimatorConfig,
}

impl PoseEstimator {
    pub fn new(model_kps: &[Point3], scene: &PointCloud, model: &PointCloud, config: EstimatorConfig) -> Result<Self> {
        if model_kps.len() < 3 {
            return Err(Error::invalid(format!(
                "need at least 3 keypoints, got {}",
                model_kps.len()
            )));
        }
        if !(config.lambda > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {}",
                config.lambda
            )));
        }
        Ok(Self {
            model_kps: model_kps.to_vec(),
            context: ResidueContext::new(scene, model, config.residue_points, config.residue_seed)?,
            config,
        })
    }

    pub fn model_keypoints(&self) -> &[Point3] {
        &self.model_kps
    }

    pub fn context(&self) -> &ResidueContext {
        &self.context
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Bank → residues → softmax weights → weighted translation and rotation.
    pub fn estimate<T: Real>(&self, scene_kps: &[Vec3<T>]) -> Result<(Pose<T>, CandidateBank<T>)> {
        self.estimate_inner(scene_kps, None)
    }

    /// [`Self::estimate`] reusing the nearest-neighbour assignments of an
    /// earlier estimate at the same primal keypoints, e.g. for dual passes.
    pub fn estimate_reusing<T: Real>(
        &self,
        scene_kps: &[Vec3<T>],
        earlier: &CandidateBank<f64>,
    ) -> Result<(Pose<T>, CandidateBank<T>)> {
        self.estimate_inner(scene_kps, Some(earlier))
    }

    fn estimate_inner<T: Real>(
        &self,
        scene_kps: &[Vec3<T>],
        earlier: Option<&CandidateBank<f64>>,
    ) -> Result<(Pose<T>, CandidateBank<T>)> {
        let bank = minimal_bank(&self.model_kps, scene_kps)?;
        if earlier.is_some_and(|e| e.candidates.len() != bank.len()) {
            return Err(Error::invalid("earlier bank has a different candidate count"));
        }
        let mut assignment_digest = FNV_OFFSET;
        let mut correspondences = Vec::with_capacity(bank.len());
        let residues: Vec<T> = bank
            .iter()
            .enumerate()
            .map(|(i, m)| match &m.solution {
                Some(sol) => {
                    let nn = match earlier.map(|e| &e.candidates[i].correspondences) {
                        Some(nn) if !nn.is_empty() => nn.clone(),
                        _ => self
                            .context
                            .correspondences(&sol.rotation.value(), sol.pose.translation.value()),
                    };
                    let r = self.context.residue_with(&sol.rotation, sol.pose.translation, &nn);
                    assignment_digest = digest(assignment_digest, &[digest(FNV_OFFSET, &nn) as usize]);
                    correspondences.push(nn);
                    r
                }
                None => {
                    correspondences.push(Vec::new());
                    T::constant(f64::INFINITY)
                }
            })
            .collect();
        let weights = softmax_weights(&residues, self.config.lambda)?;

        let mut w_valid = Vec::new();
        let mut t_valid = Vec::new();
        let mut q_valid = Vec::new();
        for (m, w) in bank.iter().zip(&weights) {
            if let Some(sol) = &m.solution {
                w_valid.push(*w);
                t_valid.push(sol.pose.translation);
                q_valid.push(sol.pose.rotation);
            }
        }
        let translation = aggregate_translation(&w_valid, &t_valid)?;
        let rotation = aggregate_rotation(&w_valid, &q_valid)?;

        let candidates = bank
            .into_iter()
            .zip(residues)
            .zip(weights)
            .zip(correspondences)
            .map(|(((m, residue), weight), correspondences)| Candidate {
                triple: m.triple,
                pose: m.solution.map(|s| s.pose),
                ill_conditioned: m.solution.is_some_and(|s| s.ill_conditioned),
                residue,
                weight,
                correspondences,
            })
            .collect();
        Ok((
            Pose::new(rotation, translation),
            CandidateBank {
                candidates,
                lambda: self.config.lambda,
                assignment_digest,
            },
        ))
    }
}

/// One-shot [`PoseEstimator::estimate`].
pub fn estimate_pose(
    model_kps: &[Point3],
    pred_scene_kps: &[Point3],
    scene: &PointCloud,
    model: &PointCloud,
    config: &EstimatorConfig,
) -> Result<(Pose, CandidateBank)> {
    PoseEstimator::new(model_kps, scene, model, *config)?.estimate(pred_scene_kps)
}
