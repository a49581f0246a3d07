//! Procedural object models and seeded synthetic scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_pose, random_pose_with, PointCloud, Pose, Quaternion};
use crate::linalg::Point3;

pub const MIN_VISIBLE: usize = 10;

/// Mixes a master seed with a stream index (splitmix64 finaliser).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Lumpy ellipsoid with no symmetry, about 0.2 m across.
    Bumpy,
    /// Surface of a 0.16 × 0.10 × 0.06 m box.
    Box,
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Bumpy => "bumpy",
            Shape::Box => "box",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "bumpy" => Some(Shape::Bumpy),
            "box" => Some(Shape::Box),
            _ => None,
        }
    }
}

/// `n` surface points of a procedural shape; the diameter is precomputed.
pub fn synthetic_model(shape: Shape, n: usize, seed: u64) -> Result<PointCloud> {
    if n < MIN_VISIBLE {
        return Err(Error::InvalidConfig(format!(
            "model needs at least {MIN_VISIBLE} points, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = match shape {
        Shape::Bumpy => (0..n)
            .map(|_| {
                let u = unit_vector(&mut rng);
                let r = 1.0 + 0.18 * (3.0 * u.x + 0.5).sin() * (2.0 * u.y - 0.3).cos() + 0.12 * u.z * u.z * u.z
                    - 0.08 * u.x * u.y;
                Point3::new(0.1 * r * u.x + 0.01, 0.07 * r * u.y, 0.045 * r * u.z - 0.005)
            })
            .collect(),
        Shape::Box => {
            let half = [0.08, 0.05, 0.03];
            let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let pick = rng.random::<f64>() * total;
                    let axis = if pick < areas[0] {
                        0
                    } else if pick < areas[0] + areas[1] {
                        1
                    } else {
                        2
                    };
                    let mut p = [0.0; 3];
                    for (a, v) in p.iter_mut().enumerate() {
                        *v = half[a] * (2.0 * rng.random::<f64>() - 1.0);
                    }
                    p[axis] = if rng.random::<bool>() { half[axis] } else { -half[axis] };
                    Point3::from(p)
                })
                .collect()
        }
    };
    Ok(PointCloud::new(points).with_diameter())
}

pub fn unit_vector<R: Rng>(rng: &mut R) -> Point3 {
    loop {
        let v = Point3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v.scale_f64(1.0 / n);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Std-dev of isotropic Gaussian sensor noise, meters.
    pub noise_sigma: f64,
    /// Fraction of model points hidden by a directional cut, in `[0, 1)`.
    pub occlusion: f64,
    /// Translation components are uniform in `±max_translation`.
    pub max_translation: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            occlusion: 0.0,
            max_translation: 0.3,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.occlusion) {
            return Err(Error::InvalidConfig(format!(
                "occlusion must be in [0, 1), got {}",
                self.occlusion
            )));
        }
        if !(self.max_translation >= 0.0) || !self.max_translation.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "max_translation must be >= 0, got {}",
                self.max_translation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub model_id: String,
    pub seed: u64,
    pub true_pose: Pose,
    pub scene: PointCloud,
    /// One flag per model point; scene points are the visible ones, in order.
    pub visibility: Vec<bool>,
    pub noise_sigma: f64,
    pub occlusion: f64,
}

impl SceneSample {
    pub fn visible_indices(&self) -> Vec<usize> {
        self.visibility
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.then_some(i))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SceneJson {
            model_id: self.model_id.clone(),
            seed: self.seed,
            pose: PoseJson {
                quat: self.true_pose.rotation.as_array(),
                t: self.true_pose.translation.into(),
            },
            points: self.scene.points.iter().map(|p| (*p).into()).collect(),
            visibility: self.visibility.clone(),
            noise_sigma: self.noise_sigma,
            occlusion: self.occlusion,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SceneJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let visible = doc.visibility.iter().filter(|v| **v).count();
        if visible != doc.points.len() {
            return Err(Error::invalid(format!(
                "{} visible flags for {} points",
                visible,
                doc.points.len()
            )));
        }
        Ok(Self {
            model_id: doc.model_id,
            seed: doc.seed,
            true_pose: Pose::new(unit_quaternion(doc.pose.quat)?, Point3::from(doc.pose.t)),
            scene: PointCloud::new(doc.points.into_iter().map(Point3::from).collect()),
            visibility: doc.visibility,
            noise_sigma: doc.noise_sigma,
            occlusion: doc.occlusion,
        })
    }
}

/// Keeps a stored unit quaternion bit-exact; anything else is normalised.
fn unit_quaternion(a: [f64; 4]) -> Result<Quaternion> {
    let q = Quaternion::from_array(a);
    if (q.norm() - 1.0).abs() < 1e-12 && q.canonical() == q {
        Ok(q)
    } else {
        q.normalized()
    }
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    quat: [f64; 4],
    t: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    model_id: String,
    seed: u64,
    pose: PoseJson,
    points: Vec<[f64; 3]>,
    visibility: Vec<bool>,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default)]
    occlusion: f64,
}

/// Random pose, directional occlusion, then noise; all drawn from `seed`.
///
/// The hidden points are the `N − ⌈(1 − occlusion)·N⌉` with the largest
/// projection on a random direction through the model centroid.
pub fn generate_scene(model_id: &str, model: &PointCloud, config: &SceneConfig, seed: u64) -> Result<SceneSample> {
    config.validate()?;
    model.ensure_nonempty("model")?;
    let n = model.len();
    let visible = ((1.0 - config.occlusion) * n as f64).ceil() as usize;
    if visible < MIN_VISIBLE {
        return Err(Error::InvalidConfig(format!(
            "occlusion {} leaves {visible} of {n} points; at least {MIN_VISIBLE} required",
            config.occlusion
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_pose = random_pose_with(&mut rng, config.max_translation)?;
    let dir = unit_vector(&mut rng);

    let c = model.centroid()?;
    let mut order: Vec<usize> = (0..n).collect();
    let proj: Vec<f64> = model.points.iter().map(|p| (*p - c).dot(dir)).collect();
    order.sort_by(|&a, &b| proj[b].total_cmp(&proj[a]).then(a.cmp(&b)));
    let mut visibility = vec![true; n];
    for &i in &order[..n - visible] {
        visibility[i] = false;
    }

    let kept = PointCloud::new(
        model
            .points
            .iter()
            .zip(&visibility)
            .filter_map(|(p, v)| v.then_some(*p))
            .collect(),
    );
    let mut scene = apply_pose(&true_pose, &kept)?;
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for p in &mut scene.points {
            *p += Point3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            );
        }
    }
    Ok(SceneSample {
        model_id: model_id.to_string(),
        seed,
        true_pose,
        scene,
        visibility,
        noise_sigma: config.noise_sigma,
        occlusion: config.occlusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn models_are_deterministic_and_sized() {
        for shape in [Shape::Bumpy, Shape::Box] {
            let a = synthetic_model(shape, 300, 1).unwrap();
            assert_eq!(a, synthetic_model(shape, 300, 1).unwrap());
            assert_eq!(a.len(), 300);
            let d = a.diameter();
            assert!(d > 0.15 && d < 0.3, "{} diameter {d}", shape.name());
        }
        assert!(synthetic_model(Shape::Bumpy, 5, 0).is_err());
    }

    #[test]
    fn clean_scene_is_the_transformed_model() {
        let model = synthetic_model(Shape::Bumpy, 200, 3).unwrap();
        let s = generate_scene("bumpy", &model, &SceneConfig::default(), 9).unwrap();
        assert_eq!(s.scene.points, apply_pose(&s.true_pose, &model).unwrap().points);
        assert!(s.visibility.iter().all(|v| *v));
    }

    #[test]
    fn occlusion_counts() {
        let model = synthetic_model(Shape::Bumpy, 1000, 3).unwrap();
        let cfg = SceneConfig {
            occlusion: 0.5,
            ..Default::default()
        };
        let s = generate_scene("bumpy", &model, &cfg, 1).unwrap();
        assert_eq!(s.scene.len(), 500);
        assert_eq!(s.visibility.iter().filter(|v| **v).count(), 500);

        let small = synthetic_model(Shape::Bumpy, 20, 3).unwrap();
        let cfg = SceneConfig {
            occlusion: 0.6,
            ..Default::default()
        };
        assert!(matches!(
            generate_scene("b", &small, &cfg, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn same_seed_same_sample() {
        let model = synthetic_model(Shape::Box, 300, 3).unwrap();
        let cfg = SceneConfig {
            noise_sigma: 0.002,
            occlusion: 0.3,
            max_translation: 0.5,
        };
        let a = generate_scene("box", &model, &cfg, 42).unwrap();
        let b = generate_scene("box", &model, &cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_scene("box", &model, &cfg, 43).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let model = synthetic_model(Shape::Bumpy, 100, 3).unwrap();
        let cfg = SceneConfig {
            noise_sigma: 0.001,
            occlusion: 0.2,
            max_translation: 0.3,
        };
        let s = generate_scene("bumpy", &model, &cfg, 5).unwrap();
        let text = s.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["model_id", "seed", "pose", "points", "visibility"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["pose"]["quat"].as_array().unwrap().len(), 4);
        let back = SceneSample::from_json(&text).unwrap();
        assert_eq!(back.scene.points, s.scene.points);
        assert_eq!(back.visibility, s.visibility);
        assert!((back.true_pose.rotation.dot(&s.true_pose.rotation) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
