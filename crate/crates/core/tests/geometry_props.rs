mod support;

use doorpick::geometry::{
    default_camera_mount, transform_point, wheel_rotation, DeviationAngle, DriveGeometry, Point3,
};
use doorpick::sim::CameraIntrinsics;
use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rigid_transforms_are_isometries(t in rigid_transform(), a in vec3(), b in vec3()) {
        isometry(&t, a, b)?;
    }

    #[test]
    fn plane_normal_is_orthogonal_to_edges(a in base_point(), b in base_point(), c in base_point()) {
        cross_orthogonal(a, b, c)?;
    }

    #[test]
    fn deviation_ignores_normal_scale(n in vec3(), k in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]) {
        deviation_scale(n, k)?;
    }

    #[test]
    fn deproject_then_project_is_identity(u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.5f64..3.5) {
        deproject_round_trip(&CameraIntrinsics::default(), u, v, d)?;
    }

    #[test]
    fn swapping_picks_flips_direction(a in base_point(), b in base_point(), tie in any::<bool>()) {
        let b = if tie { Point3::base(b.x(), a.y(), b.z()) } else { b };
        swap_flips(a, b)?;
    }

    #[test]
    fn mount_matches_explicit_matrix(x in coord(), y in coord(), z in coord()) {
        let p = transform_point(&default_camera_mount(), &Point3::camera(x, y, z)).unwrap();
        prop_assert_eq!((p.x(), p.y(), p.z()), (z + 0.15, -x + 0.015, -y - 0.22));
    }

    #[test]
    fn wheel_arc_matches_base_arc(theta in -std::f64::consts::PI..std::f64::consts::PI, rw in 0.02f64..0.5, rb in 0.05f64..1.0) {
        let g = DriveGeometry::new(rw, rb).unwrap();
        let w = wheel_rotation(DeviationAngle::new(theta), &g);
        let lhs = w * rw;
        let rhs = theta * rb;
        prop_assert!((lhs - rhs).abs() <= 2.0 * f64::EPSILON * rhs.abs(), "{lhs} vs {rhs}");
    }
}
