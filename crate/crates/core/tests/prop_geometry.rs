use proptest::prelude::*;
use rede_core::geometry::{apply_pose, geodesic_angle, orthonormality_error, quat_to_rotmat, rotmat_to_quat};
use rede_core::{Point3, PointCloud, Pose, Quaternion};

fn quaternion() -> impl Strategy<Value = Quaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("needs a usable norm and a clear hemisphere", |a| {
            a.iter().map(|v| v * v).sum::<f64>() > 0.01 && a[0].abs() > 1e-6
        })
        .prop_map(|a| Quaternion::new(a[0], a[1], a[2], a[3]))
}

fn point(scale: f64) -> impl Strategy<Value = Point3> {
    prop::array::uniform3(-scale..scale).prop_map(Point3::from)
}

fn pose() -> impl Strategy<Value = Pose> {
    (quaternion(), point(1.0)).prop_map(|(q, t)| Pose::new(q.normalized().unwrap(), t))
}

proptest! {
    #[test]
    fn rotation_matrices_are_proper(q in quaternion()) {
        let r = quat_to_rotmat(&q).unwrap();
        prop_assert!(orthonormality_error(&r) < 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matrix_round_trip_recovers_canonical_quaternion(q in quaternion()) {
        let unit = q.normalized().unwrap();
        let back = rotmat_to_quat(&quat_to_rotmat(&q).unwrap()).unwrap();
        prop_assert!(back.w >= 0.0);
        for (a, b) in unit.as_array().iter().zip(back.as_array()) {
            prop_assert!((a - b).abs() < 1e-9, "{unit:?} vs {back:?}");
        }
    }

    #[test]
    fn poses_preserve_distances(p in pose(), pts in prop::collection::vec(point(0.5), 2..20)) {
        let moved = apply_pose(&p, &PointCloud::new(pts.clone())).unwrap();
        for i in 0..pts.len() {
            for j in 0..i {
                let before = pts[i].distance(pts[j]);
                let after = moved.points[i].distance(moved.points[j]);
                prop_assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn geodesic_angle_is_symmetric(a in quaternion(), b in quaternion()) {
        let ra = quat_to_rotmat(&a).unwrap();
        let rb = quat_to_rotmat(&b).unwrap();
        let ab = geodesic_angle(&ra, &rb);
        prop_assert!((ab - geodesic_angle(&rb, &ra)).abs() < 1e-12);
        prop_assert!(geodesic_angle(&ra, &ra) < 1e-7);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&ab));
    }

    #[test]
    fn geodesic_angle_vanishes_only_for_equal_rotations(a in quaternion(), b in quaternion()) {
        let ra = quat_to_rotmat(&a).unwrap();
        let rb = quat_to_rotmat(&b).unwrap();
        if geodesic_angle(&ra, &rb) < 1e-9 {
            prop_assert!(ra.max_abs_diff(&rb) < 1e-6);
        }
        let flipped = quat_to_rotmat(&a.neg()).unwrap();
        prop_assert!(geodesic_angle(&ra, &flipped) < 1e-7);
    }

    #[test]
    fn compose_with_inverse_is_identity(p in pose(), x in point(1.0)) {
        let id = p.compose(&p.inverse().unwrap()).unwrap();
        let y = id.transform_point(x).unwrap();
        prop_assert!(y.max_abs_diff(&x) < 1e-12);
    }
}
