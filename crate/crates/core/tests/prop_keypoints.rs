use proptest::prelude::*;
use rede_core::keypoints::{
    aggregate_keypoints, fps_sample, normalize_confidences, true_offsets, KeypointSet, OffsetField,
};
use rede_core::{Point3, PointCloud};

fn point(scale: f64) -> impl Strategy<Value = Point3> {
    prop::array::uniform3(-scale..scale).prop_map(Point3::from)
}

/// `n` scene points, `k` keypoints, offsets and logits.
fn field() -> impl Strategy<Value = (PointCloud, OffsetField)> {
    (2usize..12, 1usize..6).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(point(0.2), n),
            prop::collection::vec(point(0.1), n * k),
            prop::collection::vec(-20.0f64..20.0, n * k),
        )
            .prop_map(move |(pts, offsets, logits)| {
                (
                    PointCloud::new(pts),
                    OffsetField {
                        num_points: n,
                        num_keypoints: k,
                        offsets,
                        confidence_logits: logits,
                    },
                )
            })
    })
}

proptest! {
    #[test]
    fn confidence_columns_are_probability_vectors((_, f) in field()) {
        let c = normalize_confidences(&f.confidence_logits, f.num_points, f.num_keypoints).unwrap();
        prop_assert!(c.weights.iter().all(|w| *w >= 0.0));
        for k in 0..f.num_keypoints {
            prop_assert!((c.column_sum(k) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn keypoints_stay_inside_their_votes((scene, f) in field()) {
        let c = normalize_confidences(&f.confidence_logits, f.num_points, f.num_keypoints).unwrap();
        let kps = aggregate_keypoints(&scene, &f, &c).unwrap();
        for k in 0..f.num_keypoints {
            let votes: Vec<Point3> = (0..f.num_points).map(|i| scene.points[i] + f.offset(i, k)).collect();
            for a in 0..3 {
                let lo = votes.iter().map(|v| v[a]).fold(f64::INFINITY, f64::min);
                let hi = votes.iter().map(|v| v[a]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(kps.points[k][a] >= lo - 1e-12 && kps.points[k][a] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn exact_offsets_recover_keypoints_for_any_confidences(
        (scene, f) in field(),
        targets in prop::collection::vec(point(0.3), 5),
    ) {
        let truth = KeypointSet::new(targets[..f.num_keypoints.min(5)].to_vec());
        let mut exact = true_offsets(&truth, &scene);
        let k = truth.len();
        exact.confidence_logits = f.confidence_logits[..f.num_points * k].to_vec();
        let c = normalize_confidences(&exact.confidence_logits, f.num_points, k).unwrap();
        let kps = aggregate_keypoints(&scene, &exact, &c).unwrap();
        for (got, want) in kps.points.iter().zip(&truth.points) {
            prop_assert!(got.max_abs_diff(want) < 1e-12);
        }
    }

    #[test]
    fn fps_is_deterministic_and_ignores_labels(
        pts in prop::collection::vec(point(1.0), 8..40),
        rot in 0usize..40,
        count in 1usize..8,
    ) {
        let cloud = PointCloud::new(pts.clone());
        let a = fps_sample(&cloud, count).unwrap();
        prop_assert_eq!(&a, &fps_sample(&cloud, count).unwrap());
        let mut shuffled = pts.clone();
        shuffled.rotate_left(rot % pts.len());
        shuffled.reverse();
        let b = fps_sample(&PointCloud::new(shuffled), count).unwrap();
        prop_assert_eq!(a, b);
    }
}
