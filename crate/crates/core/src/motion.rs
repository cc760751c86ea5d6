//! Ideal differential-drive base: in-place turns, straight drives, and the
//! camera pose that follows from the chassis pose.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    normalize_angle, wheel_rotation, DeviationAngle, DriveGeometry, FrameTag, GeometryError, Mat3, RigidTransform,
    Vector3,
};

/// Planar chassis pose in the world frame. Heading is CCW-positive about
/// world up and kept in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RawPose")]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    heading: f64,
}

#[derive(Deserialize)]
struct RawPose {
    x: f64,
    y: f64,
    heading: f64,
}

impl From<RawPose> for BasePose {
    fn from(r: RawPose) -> Self {
        BasePose::new(r.x, r.y, r.heading)
    }
}

impl BasePose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    /// Base-to-world transform.
    pub fn base_to_world(&self) -> RigidTransform {
        RigidTransform::new(
            Mat3::rot_z(self.heading),
            Vector3::new(self.x, self.y, 0.0),
            FrameTag::Base,
            FrameTag::World,
        )
        .expect("planar rotation is proper")
    }
}

/// Position-level wheel angles, right wheel positive for a CCW turn.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelCommand {
    pub left_rotation: f64,
    pub right_rotation: f64,
}

/// Turns the base in place by `theta_diff`.
pub fn orient(pose: &BasePose, theta_diff: DeviationAngle, g: &DriveGeometry) -> (BasePose, WheelCommand) {
    let wheel = wheel_rotation(theta_diff, g);
    let next = BasePose {
        x: pose.x,
        y: pose.y,
        heading: normalize_angle(pose.heading + theta_diff.radians()),
    };
    (
        next,
        WheelCommand {
            left_rotation: -wheel,
            right_rotation: wheel,
        },
    )
}

/// Drives straight along the current heading; negative distances reverse.
pub fn drive(pose: &BasePose, distance: f64) -> BasePose {
    let (s, c) = pose.heading.sin_cos();
    BasePose {
        x: pose.x + distance * c,
        y: pose.y + distance * s,
        heading: pose.heading,
    }
}

/// World-to-camera transform for a chassis at `pose` carrying a camera with
/// the given camera-to-base mount.
pub fn camera_pose_of(pose: &BasePose, mount: &RigidTransform) -> Result<RigidTransform, GeometryError> {
    let camera_to_world = pose.base_to_world().compose(mount)?;
    Ok(camera_to_world.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_camera_mount, Point3};
    use std::f64::consts::PI;

    #[test]
    fn zero_orient_is_identity() {
        let pose = BasePose::new(1.0, 2.0, 0.3);
        let (next, cmd) = orient(&pose, DeviationAngle::new(0.0), &DriveGeometry::default());
        assert_eq!(next, pose);
        assert_eq!(cmd.left_rotation, 0.0);
        assert_eq!(cmd.right_rotation, 0.0);
    }

    #[test]
    fn orient_example() {
        let g = DriveGeometry::new(0.10, 0.25).unwrap();
        let (next, cmd) = orient(&BasePose::default(), DeviationAngle::new(0.1), &g);
        assert_eq!(next.heading(), 0.1);
        assert!((cmd.left_rotation + 0.25).abs() < 1e-15);
        assert!((cmd.right_rotation - 0.25).abs() < 1e-15);
        assert_eq!(cmd.left_rotation, -cmd.right_rotation);
    }

    #[test]
    fn orient_there_and_back() {
        let g = DriveGeometry::default();
        let start = BasePose::new(0.4, -0.2, 0.0);
        let (mid, _) = orient(&start, DeviationAngle::new(0.35), &g);
        let (end, _) = orient(&mid, DeviationAngle::new(-0.35), &g);
        assert_eq!(end, start);
    }

    #[test]
    fn orient_wraps_heading() {
        let g = DriveGeometry::default();
        let (next, _) = orient(&BasePose::new(0.0, 0.0, 3.0), DeviationAngle::new(0.5), &g);
        assert!((next.heading() - (3.5 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn drive_examples() {
        let p = drive(&BasePose::default(), 0.4);
        assert_eq!((p.x, p.y, p.heading()), (0.4, 0.0, 0.0));
        let start = BasePose::new(0.3, 0.1, 1.0);
        assert_eq!(drive(&start, 0.0), start);
        let p = drive(&BasePose::new(0.0, 0.0, PI / 2.0), 1.0);
        assert!(p.x.abs() < 1e-12);
        assert!((p.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn camera_pose_at_identity() {
        let mount = default_camera_mount();
        let world_to_camera = camera_pose_of(&BasePose::default(), &mount).unwrap();
        assert_eq!(world_to_camera.source(), FrameTag::World);
        assert_eq!(world_to_camera.target(), FrameTag::Camera);
        let camera_to_world = world_to_camera.inverse();
        let origin = camera_to_world.apply(&Point3::camera(0.0, 0.0, 0.0)).unwrap();
        assert!((origin.x() - 0.15).abs() < 1e-15);
        assert!((origin.y() - 0.015).abs() < 1e-15);
        assert!((origin.z() + 0.22).abs() < 1e-15);
        let view = camera_to_world.apply_vector(&Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(view, Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn camera_pose_composes_back_to_base() {
        let mount = default_camera_mount();
        let pose = BasePose::new(1.2, -0.7, 0.6);
        let world_to_camera = camera_pose_of(&pose, &mount).unwrap();
        let world_to_base = mount.compose(&world_to_camera).unwrap();
        let expected = pose.base_to_world().inverse();
        let w = Point3::world(2.0, 0.4, -0.1);
        let a = world_to_base.apply(&w).unwrap();
        let b = expected.apply(&w).unwrap();
        assert!(a.distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn half_turn_flips_view() {
        let mount = default_camera_mount();
        let view = |pose: BasePose| {
            camera_pose_of(&pose, &mount)
                .unwrap()
                .inverse()
                .apply_vector(&Vector3::new(0.0, 0.0, 1.0))
        };
        let a = view(BasePose::default());
        let b = view(BasePose::new(0.0, 0.0, PI));
        assert!((a + b).norm() < 1e-12);
    }
}
