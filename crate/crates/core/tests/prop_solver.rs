use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rede_core::geometry::{apply_pose, geodesic_angle, random_pose};
use rede_core::harness::{synthetic_model, Shape};
use rede_core::keypoints::keypoint_config;
use rede_core::solver::{estimate_pose, kabsch_solve, residue, EstimatorConfig};
use rede_core::{Point3, PointCloud, Pose, Quaternion};

struct Setup {
    model: PointCloud,
    model_kps: Vec<Point3>,
    scene: PointCloud,
    truth: Pose,
    scene_kps: Vec<Point3>,
}

/// Noise-free scene of a posed model; the first `outliers` keypoints are
/// displaced by a tenth of the diameter.
fn setup(seed: u64, outliers: usize) -> Setup {
    let model = synthetic_model(Shape::Bumpy, 120, seed).unwrap().with_diameter();
    let kps = keypoint_config(&model, 8).unwrap().points;
    let truth = random_pose(seed ^ 0x5eed, 0.3).unwrap();
    let scene = apply_pose(&truth, &model).unwrap();
    let mut scene_kps = apply_pose(&truth, &PointCloud::new(kps.clone())).unwrap().points;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.diameter();
    for p in scene_kps.iter_mut().take(outliers) {
        *p += Point3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        )
        .scale_f64(0.2 * d);
    }
    Setup {
        model,
        model_kps: kps,
        scene,
        truth,
        scene_kps,
    }
}

fn rotation_gap(a: &Pose, b: &Pose) -> f64 {
    geodesic_angle(&a.rotation_matrix().unwrap(), &b.rotation_matrix().unwrap())
}

fn sum_sq(model: &[Point3], scene: &[Point3], p: &Pose) -> f64 {
    model
        .iter()
        .zip(scene)
        .map(|(m, s)| (p.transform_point(*m).unwrap() - *s).norm_squared())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bank_weights_form_a_distribution(seed in 0u64..10_000, outliers in 0usize..3) {
        let s = setup(seed, outliers);
        let (_, bank) = estimate_pose(&s.model_kps, &s.scene_kps, &s.scene, &s.model, &EstimatorConfig::default()).unwrap();
        prop_assert_eq!(bank.candidates.len(), 84);
        prop_assert!((bank.weight_sum() - 1.0).abs() < 1e-9);
        prop_assert!(bank.candidates.iter().all(|c| c.weight >= 0.0));
    }

    #[test]
    fn kabsch_beats_nearby_poses(seed in 0u64..10_000) {
        let s = setup(seed, 3);
        let best = kabsch_solve::<f64>(&s.model_kps, &s.scene_kps).unwrap().pose;
        let at_best = sum_sq(&s.model_kps, &s.scene_kps, &best);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let mut r = || (rng.random::<f64>() - 0.5) * 1e-3;
            let dq = Quaternion::new(1.0, r(), r(), r()).normalized().unwrap();
            let nudge = Pose::new(dq, Point3::new(r(), r(), r()));
            let other = nudge.compose(&best).unwrap();
            prop_assert!(at_best <= sum_sq(&s.model_kps, &s.scene_kps, &other) + 1e-15);
        }
    }

    #[test]
    fn keypoint_order_does_not_matter(seed in 0u64..10_000, shift in 1usize..9) {
        let s = setup(seed, 2);
        let cfg = EstimatorConfig::default();
        let (a, _) = estimate_pose(&s.model_kps, &s.scene_kps, &s.scene, &s.model, &cfg).unwrap();
        let mut m = s.model_kps.clone();
        let mut k = s.scene_kps.clone();
        m.rotate_left(shift);
        k.rotate_left(shift);
        m.swap(0, 8);
        k.swap(0, 8);
        let (b, _) = estimate_pose(&m, &k, &s.scene, &s.model, &cfg).unwrap();
        prop_assert!(rotation_gap(&a, &b) < 1e-9);
        prop_assert!(a.translation.max_abs_diff(&b.translation) < 1e-9);
    }

    #[test]
    fn estimate_moves_with_the_scene(seed in 0u64..10_000) {
        let s = setup(seed, 2);
        let g = random_pose(seed.wrapping_mul(31), 0.5).unwrap();
        let cfg = EstimatorConfig::default();
        let (t, _) = estimate_pose(&s.model_kps, &s.scene_kps, &s.scene, &s.model, &cfg).unwrap();
        let moved_scene = apply_pose(&g, &s.scene).unwrap();
        let moved_kps = apply_pose(&g, &PointCloud::new(s.scene_kps.clone())).unwrap().points;
        let (gt, _) = estimate_pose(&s.model_kps, &moved_kps, &moved_scene, &s.model, &cfg).unwrap();
        let want = g.compose(&t).unwrap();
        prop_assert!(rotation_gap(&gt, &want) < 1e-8);
        prop_assert!(gt.translation.max_abs_diff(&want.translation) < 1e-8);
    }

    #[test]
    fn cold_softmax_picks_the_best_candidate(seed in 0u64..10_000) {
        let s = setup(seed, 2);
        let cfg = EstimatorConfig {
            lambda: 1e-6 * s.model.diameter(),
            ..Default::default()
        };
        let (pose, bank) = estimate_pose(&s.model_kps, &s.scene_kps, &s.scene, &s.model, &cfg).unwrap();
        let best = bank.best().unwrap().pose.unwrap();
        prop_assert!(rotation_gap(&pose, &best) < 1e-6);
        prop_assert!(pose.translation.max_abs_diff(&best.translation) < 1e-6);
        prop_assert!(rotation_gap(&pose, &s.truth) < 1e-6);
        prop_assert!(residue(&pose, &s.scene, &s.model).unwrap() < 1e-6);
    }
}
