//! Point-to-point ICP refinement.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{PointCloud, Pose};
use crate::linalg::Point3;
use crate::solver::{kabsch_solve, ResidueContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the mean residue improves by less than this, meters.
    pub tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: Pose,
    /// Residue of `init` followed by the residue after each accepted step.
    pub residues: Vec<f64>,
    pub iterations: usize,
}

/// Refines `init`, never returning a pose with a larger residue than it.
pub fn icp_refine(init: &Pose, scene: &PointCloud, model: &PointCloud, max_iters: usize, tol: f64) -> Result<Pose> {
    Ok(icp_refine_traced(init, scene, model, &IcpConfig { max_iters, tol })?.pose)
}

/// Alternates nearest-neighbour matching and a closed-form fit. A step whose
/// residue would exceed the current one is discarded and ends the run.
pub fn icp_refine_traced(init: &Pose, scene: &PointCloud, model: &PointCloud, config: &IcpConfig) -> Result<IcpResult> {
    let ctx = ResidueContext::new(scene, model, usize::MAX, 0)?;
    let mut pose = *init;
    let mut rotation = pose.rotation_matrix()?;
    let mut current = ctx.residue(&rotation, pose.translation);
    let mut residues = vec![current];
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let nn = ctx.correspondences(&rotation, pose.translation);
        let matched: Vec<Point3> = nn.iter().map(|&i| model.points[i]).collect();
        let Ok(step) = kabsch_solve::<f64>(&matched, ctx.scene_points()) else {
            break;
        };
        let next = ctx.residue(&step.rotation, step.pose.translation);
        if !(next <= current) {
            break;
        }
        let gain = current - next;
        pose = step.pose;
        rotation = step.rotation;
        current = next;
        residues.push(current);
        if gain < config.tol {
            break;
        }
    }
    Ok(IcpResult {
        pose,
        residues,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_pose, geodesic_angle, random_pose, Quaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        0.1 * (rng.random::<f64>() - 0.5),
                        0.06 * (rng.random::<f64>() - 0.5),
                        0.03 * (rng.random::<f64>() - 0.5),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let model = blob(1, 300);
        let truth = random_pose(4, 0.3).unwrap();
        let scene = apply_pose(&truth, &model).unwrap();
        let r = icp_refine_traced(&truth, &scene, &model, &IcpConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((r.pose.translation - truth.translation).norm() < 1e-12);
    }

    #[test]
    fn recovers_small_perturbation_monotonically() {
        let model = blob(2, 500);
        let truth = random_pose(5, 0.3).unwrap();
        let scene = apply_pose(&truth, &model).unwrap();
        let tilt = Pose::new(
            Quaternion::from_axis_angle(Point3::new(1.0, 1.0, 0.0), 5f64.to_radians()).unwrap(),
            Point3::new(0.01, 0.0, 0.0),
        );
        let init = tilt.compose(&truth).unwrap();
        let r = icp_refine_traced(&init, &scene, &model, &IcpConfig::default()).unwrap();
        assert!(r.residues.windows(2).all(|w| w[1] <= w[0]));
        let rot = geodesic_angle(&r.pose.rotation_matrix().unwrap(), &truth.rotation_matrix().unwrap());
        assert!(rot < 1e-6 && (r.pose.translation - truth.translation).norm() < 1e-6);
    }
}
