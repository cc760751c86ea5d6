//! Frame transforms and the point-pick formulas: two-point distance and
//! rotation sense, three-point plane normal, yaw deviation and the
//! differential-drive wheel angle.
//!
//! Everything here is pure and allocation free.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance below which three picks are treated as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-6;

/// Smallest horizontal normal component that still defines a yaw.
pub const MIN_HORIZONTAL_NORMAL: f64 = 1e-9;

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point is in the {found} frame, expected {expected}")]
    FrameMismatch { expected: FrameTag, found: FrameTag },
    #[error("picked points are collinear")]
    CollinearPoints,
    #[error("plane normal has no horizontal component; cannot derive a yaw")]
    DegenerateNormal,
    #[error("rotation block is not a proper rotation (orthonormality or determinant off by {0:e})")]
    NotARotation(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("drive geometry radii must be strictly positive")]
    InvalidDriveGeometry,
}

/// Coordinate frame a point is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameTag {
    /// Optical frame of the depth camera: x right, y down, z along the view ray.
    Camera,
    /// Robot chassis frame: x forward, y left, z up.
    Base,
    /// Fixed world frame of the simulated scene, z up.
    World,
}

impl fmt::Display for FrameTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FrameTag::Camera => "camera",
            FrameTag::Base => "base",
            FrameTag::World => "world",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vector3 {
    pub const ZERO: Vector3 = Vector3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, other: &Vector3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Cross product, expanded component by component.
    pub fn cross(&self, other: &Vector3) -> Vector3 {
        Vector3 {
            x: self.y * other.z - self.z * other.y,
            y: other.x * self.z - self.x * other.z,
            z: self.x * other.y - other.x * self.y,
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Option<Vector3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vector3 {
    type Output = Vector3;
    fn add(self, o: Vector3) -> Vector3 {
        Vector3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vector3 {
    type Output = Vector3;
    fn sub(self, o: Vector3) -> Vector3 {
        Vector3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vector3 {
    type Output = Vector3;
    fn neg(self) -> Vector3 {
        Vector3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vector3 {
    type Output = Vector3;
    fn mul(self, k: f64) -> Vector3 {
        Vector3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// A position in meters, tagged with the frame it is expressed in.
///
/// The tag is fixed at construction; moving a point between frames goes
/// through [`transform_point`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint3")]
pub struct Point3 {
    x: f64,
    y: f64,
    z: f64,
    frame: FrameTag,
}

#[derive(Deserialize)]
struct RawPoint3 {
    x: f64,
    y: f64,
    z: f64,
    frame: FrameTag,
}

impl TryFrom<RawPoint3> for Point3 {
    type Error = GeometryError;
    fn try_from(r: RawPoint3) -> Result<Self, Self::Error> {
        Point3::try_new(r.x, r.y, r.z, r.frame)
    }
}

impl Point3 {
    /// Panics on non-finite input; use [`Point3::try_new`] for untrusted data.
    pub fn new(x: f64, y: f64, z: f64, frame: FrameTag) -> Self {
        Self::try_new(x, y, z, frame).expect("Point3 components must be finite")
    }

    pub fn try_new(x: f64, y: f64, z: f64, frame: FrameTag) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Self { x, y, z, frame })
        } else {
            Err(GeometryError::NonFinite)
        }
    }

    pub fn camera(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, FrameTag::Camera)
    }

    pub fn base(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, FrameTag::Base)
    }

    pub fn world(x: f64, y: f64, z: f64) -> Self {
        Self::new(x, y, z, FrameTag::World)
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }
    pub fn frame(&self) -> FrameTag {
        self.frame
    }

    pub fn coords(&self) -> Vector3 {
        Vector3::new(self.x, self.y, self.z)
    }

    /// Displacement `other - self`; both points must share a frame.
    pub fn vector_to(&self, other: &Point3) -> Result<Vector3, GeometryError> {
        if self.frame != other.frame {
            return Err(GeometryError::FrameMismatch {
                expected: self.frame,
                found: other.frame,
            });
        }
        Ok(Vector3::new(other.x - self.x, other.y - self.y, other.z - self.z))
    }

    pub fn distance(&self, other: &Point3) -> Result<f64, GeometryError> {
        self.vector_to(other).map(|v| v.norm())
    }

    fn expect_frame(&self, expected: FrameTag) -> Result<(), GeometryError> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(GeometryError::FrameMismatch {
                expected,
                found: self.frame,
            })
        }
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn rot_z(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn mul_vec(&self, v: &Vector3) -> Vector3 {
        let m = &self.0;
        Vector3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest deviation from a proper rotation: max |RᵀR − I| entry or |det − 1|.
    pub fn rotation_defect(&self) -> f64 {
        let rtr = self.transpose().mul_mat(self);
        let mut worst = (self.determinant() - 1.0).abs();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((rtr.0[i][j] - target).abs());
            }
        }
        worst
    }
}

/// Homogeneous rigid transform mapping points from `source` into `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vector3,
    source: FrameTag,
    target: FrameTag,
}

impl RigidTransform {
    pub fn new(
        rotation: Mat3,
        translation: Vector3,
        source: FrameTag,
        target: FrameTag,
    ) -> Result<Self, GeometryError> {
        let defect = rotation.rotation_defect();
        if !(defect <= ORTHONORMAL_TOLERANCE) {
            return Err(GeometryError::NotARotation(defect));
        }
        if !translation.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            rotation,
            translation,
            source,
            target,
        })
    }

    pub fn identity(source: FrameTag, target: FrameTag) -> Self {
        Self {
            rotation: Mat3::IDENTITY,
            translation: Vector3::ZERO,
            source,
            target,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }
    pub fn translation(&self) -> Vector3 {
        self.translation
    }
    pub fn source(&self) -> FrameTag {
        self.source
    }
    pub fn target(&self) -> FrameTag {
        self.target
    }

    pub fn apply(&self, p: &Point3) -> Result<Point3, GeometryError> {
        p.expect_frame(self.source)?;
        let q = self.rotation.mul_vec(&p.coords()) + self.translation;
        Point3::try_new(q.x, q.y, q.z, self.target)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation.mul_vec(v)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.mul_vec(&self.translation),
            source: self.target,
            target: self.source,
        }
    }

    /// `self ∘ inner`: apply `inner` first. `inner.target` must equal `self.source`.
    pub fn compose(&self, inner: &RigidTransform) -> Result<RigidTransform, GeometryError> {
        if inner.target != self.source {
            return Err(GeometryError::FrameMismatch {
                expected: self.source,
                found: inner.target,
            });
        }
        Ok(RigidTransform {
            rotation: self.rotation.mul_mat(&inner.rotation),
            translation: self.rotation.mul_vec(&inner.translation) + self.translation,
            source: inner.source,
            target: self.target,
        })
    }
}

/// The fixed camera-to-base mount of the reference robot.
///
/// Rotation maps the optical axis onto base +x, camera +x onto base −y and
/// camera +y onto base −z. The translation column (15.0, 1.5, −22.0) is
/// read as centimeters and stored in meters.
pub fn default_camera_mount() -> RigidTransform {
    RigidTransform {
        rotation: Mat3([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]),
        translation: Vector3::new(0.15, 0.015, -0.22),
        source: FrameTag::Camera,
        target: FrameTag::Base,
    }
}

/// Maps a camera-frame point into the base frame.
pub fn transform_point(camera_to_base: &RigidTransform, p: &Point3) -> Result<Point3, GeometryError> {
    p.expect_frame(FrameTag::Camera)?;
    if camera_to_base.source != FrameTag::Camera || camera_to_base.target != FrameTag::Base {
        return Err(GeometryError::FrameMismatch {
            expected: FrameTag::Camera,
            found: camera_to_base.source,
        });
    }
    camera_to_base.apply(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RotationDirection {
    #[serde(rename = "CW")]
    Clockwise,
    #[serde(rename = "CCW")]
    CounterClockwise,
}

impl RotationDirection {
    pub fn flipped(self) -> Self {
        match self {
            RotationDirection::Clockwise => RotationDirection::CounterClockwise,
            RotationDirection::CounterClockwise => RotationDirection::Clockwise,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RotationDirection::Clockwise => "CW",
            RotationDirection::CounterClockwise => "CCW",
        }
    }
}

impl fmt::Display for RotationDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub distance: f64,
    pub rotation_direction: RotationDirection,
}

/// Distance between two base-frame picks and the rotation sense implied by
/// their lateral order: CCW when the first pick lies further left (y₁ > y₂),
/// CW otherwise, including an exact tie.
pub fn dist_ori_compute(p1: &Point3, p2: &Point3) -> Result<MeasureResult, GeometryError> {
    p1.expect_frame(FrameTag::Base)?;
    p2.expect_frame(FrameTag::Base)?;
    let dx = p1.x - p2.x;
    let dy = p1.y - p2.y;
    let dz = p1.z - p2.z;
    let distance = (dx * dx + dy * dy + dz * dz).sqrt();
    let rotation_direction = if p1.y - p2.y > 0.0 {
        RotationDirection::CounterClockwise
    } else {
        RotationDirection::Clockwise
    };
    Ok(MeasureResult {
        distance,
        rotation_direction,
    })
}

/// Unnormalized normal `(B − A) × (C − A)` of the plane through three
/// base-frame picks.
pub fn plane_normal(pa: &Point3, pb: &Point3, pc: &Point3) -> Result<Vector3, GeometryError> {
    for p in [pa, pb, pc] {
        p.expect_frame(FrameTag::Base)?;
    }
    let (xa, ya, za) = (pa.x, pa.y, pa.z);
    let (xb, yb, zb) = (pb.x, pb.y, pb.z);
    let (xc, yc, zc) = (pc.x, pc.y, pc.z);
    let normal = Vector3::new(
        (yb - ya) * (zc - za) - (zb - za) * (yc - ya),
        (xc - xa) * (zb - za) - (xb - xa) * (zc - za),
        (xb - xa) * (yc - ya) - (xc - xa) * (yb - ya),
    );
    let ab = Vector3::new(xb - xa, yb - ya, zb - za).norm();
    let ac = Vector3::new(xc - xa, yc - ya, zc - za).norm();
    // `!(a >= b)` so that NaN also lands on the error path.
    if !(normal.norm() >= COLLINEAR_TOLERANCE * ab * ac) || ab == 0.0 || ac == 0.0 {
        return Err(GeometryError::CollinearPoints);
    }
    Ok(normal)
}

/// Signed yaw in radians, normalized to (−π, π]. Positive is a
/// counterclockwise correction about base +z.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviationAngle(f64);

impl DeviationAngle {
    pub fn new(radians: f64) -> Self {
        // + 0.0 folds a negative zero into +0.
        Self(normalize_angle(radians) + 0.0)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Yaw that turns the base forward axis onto the inward door normal.
///
/// The normal is first oriented to point from the door toward the robot
/// (n.x ≤ 0), so pick order and scale do not matter. Zero means the base
/// already faces the door squarely.
pub fn deviation_angle(n: &Vector3) -> Result<DeviationAngle, GeometryError> {
    if !n.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    if !(n.x.hypot(n.y) >= MIN_HORIZONTAL_NORMAL) {
        return Err(GeometryError::DegenerateNormal);
    }
    let toward_robot = if n.x > 0.0 { -*n } else { *n };
    Ok(DeviationAngle::new((-toward_robot.y).atan2(-toward_robot.x)))
}

/// Magnitude of the deviation as the angle between the normal and base +y,
/// less a right angle. Agrees with `|deviation_angle|` for vertical planes.
pub fn deviation_magnitude_from_y_axis(n: &Vector3) -> Result<f64, GeometryError> {
    let len = n.norm();
    if !(len > 0.0) {
        return Err(GeometryError::DegenerateNormal);
    }
    Ok(((n.y / len).clamp(-1.0, 1.0).acos() - PI / 2.0).abs())
}

/// Wheel radius and half-track of a differential-drive base, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDriveGeometry")]
pub struct DriveGeometry {
    wheel_radius: f64,
    half_track: f64,
}

#[derive(Deserialize)]
struct RawDriveGeometry {
    wheel_radius: f64,
    half_track: f64,
}

impl TryFrom<RawDriveGeometry> for DriveGeometry {
    type Error = GeometryError;
    fn try_from(r: RawDriveGeometry) -> Result<Self, Self::Error> {
        DriveGeometry::new(r.wheel_radius, r.half_track)
    }
}

impl Default for DriveGeometry {
    fn default() -> Self {
        Self {
            wheel_radius: 0.10,
            half_track: 0.25,
        }
    }
}

impl DriveGeometry {
    pub fn new(wheel_radius: f64, half_track: f64) -> Result<Self, GeometryError> {
        if wheel_radius > 0.0 && half_track > 0.0 && wheel_radius.is_finite() && half_track.is_finite() {
            Ok(Self {
                wheel_radius,
                half_track,
            })
        } else {
            Err(GeometryError::InvalidDriveGeometry)
        }
    }

    pub fn wheel_radius(&self) -> f64 {
        self.wheel_radius
    }

    pub fn half_track(&self) -> f64 {
        self.half_track
    }
}

/// Wheel angle that turns the base in place by `theta_diff`: the arc each
/// wheel rolls equals the arc its contact point sweeps about the center.
/// The right wheel turns by the returned angle, the left by its negation.
pub fn wheel_rotation(theta_diff: DeviationAngle, g: &DriveGeometry) -> f64 {
    theta_diff.radians() * g.half_track / g.wheel_radius
}
