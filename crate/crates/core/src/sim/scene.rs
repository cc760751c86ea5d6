//! Parametric door scene: a closed door set flush in a wall, with a cuboid
//! lever handle near the moving edge.
//!
//! Door-local coordinates, used throughout this module and by specular
//! patches:
//!
//! * `s` runs along the door width from the hinge edge toward the moving edge,
//! * `h` runs up from the bottom of the door,
//! * `n` points out of the door face toward the observer.
//!
//! With `yaw = 0` the door faces world −x. Yaw rotates the whole door and
//! wall assembly about the vertical hinge axis, clockwise seen from above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::camera::CameraIntrinsics;
use super::SimError;
use crate::geometry::{Point3, Vector3};
use crate::motion::BasePose;

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HingeSide {
    /// Hinge on the observer's left, i.e. at higher world y when yaw = 0.
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Door,
    Handle,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorSpec {
    /// World position of the bottom of the hinge edge on the door face.
    pub hinge_position: [f64; 3],
    pub width: f64,
    pub height: f64,
    pub thickness: f64,
    #[serde(default)]
    pub yaw: f64,
    pub hinge_side: HingeSide,
}

/// Cuboid lever. It pivots at the end nearer the moving edge and extends
/// toward the hinge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleSpec {
    /// Distance from the moving edge to the pivot end of the lever.
    pub mount_offset_from_moving_edge: f64,
    /// Height of the lever's center line above the bottom of the door.
    pub height_on_door: f64,
    pub length: f64,
    /// `[height, depth]` of the lever cross-section.
    pub cross_section: [f64; 2],
    /// Gap between the door face and the back of the lever.
    pub standoff_from_door_face: f64,
}

/// Wall extent around the door opening, measured in the door plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub margin_hinge_side: f64,
    pub margin_moving_side: f64,
    pub margin_below: f64,
    pub margin_above: f64,
}

impl Default for WallSpec {
    fn default() -> Self {
        Self {
            margin_hinge_side: 1.5,
            margin_moving_side: 1.5,
            margin_below: 0.0,
            margin_above: 0.6,
        }
    }
}

/// Rectangle of zero depth return. Door and wall patches use door-local
/// `(s, h)`. Handle patches use `s` measured from the pivot along the lever
/// and `h` relative to the lever center line, and cover every handle face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecularPatch {
    pub surface: SurfaceKind,
    pub s_min: f64,
    pub s_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl SpecularPatch {
    fn contains(&self, s: f64, h: f64) -> bool {
        s >= self.s_min && s <= self.s_max && h >= self.h_min && h <= self.h_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Palette {
    pub door: [u8; 3],
    pub handle: [u8; 3],
    pub wall: [u8; 3],
    pub background: [u8; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            door: [150, 96, 52],
            handle: [200, 200, 210],
            wall: [222, 218, 205],
            background: [30, 34, 40],
        }
    }
}

impl Palette {
    pub fn of(&self, surface: Option<SurfaceKind>) -> [u8; 3] {
        match surface {
            Some(SurfaceKind::Door) => self.door,
            Some(SurfaceKind::Handle) => self.handle,
            Some(SurfaceKind::Wall) => self.wall,
            None => self.background,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub version: u32,
    #[serde(default)]
    pub camera: CameraIntrinsics,
    pub door: DoorSpec,
    pub handle: HandleSpec,
    #[serde(default)]
    pub wall: WallSpec,
    #[serde(default)]
    pub specular_patches: Vec<SpecularPatch>,
    #[serde(default)]
    pub depth_noise_sigma_at_1m: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub colors: Palette,
    /// Where the robot starts when a session opens on this scene.
    #[serde(default)]
    pub start_pose: BasePose,
}

/// A ray-surface intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub surface: SurfaceKind,
    /// Ray parameter; equals the z-depth for camera rays scaled to unit depth.
    pub t: f64,
    pub point: Vector3,
    /// Patch coordinates on the hit surface (see [`SpecularPatch`]).
    pub patch_coords: (f64, f64),
    pub specular: bool,
}

#[derive(Debug, Clone, Copy)]
struct AxisBox {
    min: [f64; 3],
    max: [f64; 3],
}

impl AxisBox {
    /// Entry parameter of a local-frame ray, if it enters in front of the origin.
    fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for axis in 0..3 {
            if d[axis] == 0.0 {
                if o[axis] < self.min[axis] || o[axis] > self.max[axis] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[axis];
            let mut t0 = (self.min[axis] - o[axis]) * inv;
            let mut t1 = (self.max[axis] - o[axis]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        (t_near > 0.0).then_some(t_near)
    }

    /// Distance from a local point to the box surface.
    fn surface_distance(&self, p: [f64; 3]) -> f64 {
        let mut outside = 0.0f64;
        let mut inside = f64::INFINITY;
        for ((lo, hi), x) in self.min.iter().zip(&self.max).zip(p) {
            let below = lo - x;
            let above = x - hi;
            let excess = below.max(above);
            if excess > 0.0 {
                outside += excess * excess;
            } else {
                inside = inside.min(-excess);
            }
        }
        if outside > 0.0 {
            outside.sqrt()
        } else {
            inside
        }
    }
}

/// Instantiated scene geometry in world coordinates.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    origin: Vector3,
    e_s: Vector3,
    e_h: Vector3,
    e_n: Vector3,
    door: AxisBox,
    handle: AxisBox,
    pivot_s: f64,
    handle_center_h: f64,
    wall: AxisBox,
    door_width: f64,
    door_height: f64,
}

impl SceneGeometry {
    fn new(scene: &SceneDescriptor) -> Self {
        let d = &scene.door;
        let h = &scene.handle;
        // Rotation by -yaw about world z (clockwise for positive yaw).
        let (sin, cos) = (-d.yaw).sin_cos();
        let rot = |v: Vector3| Vector3::new(cos * v.x - sin * v.y, sin * v.x + cos * v.y, v.z);
        let along = match d.hinge_side {
            HingeSide::Left => Vector3::new(0.0, -1.0, 0.0),
            HingeSide::Right => Vector3::new(0.0, 1.0, 0.0),
        };
        let pivot_s = d.width - h.mount_offset_from_moving_edge;
        let [section_h, section_d] = h.cross_section;
        let w = &scene.wall;
        Self {
            origin: Vector3::new(d.hinge_position[0], d.hinge_position[1], d.hinge_position[2]),
            e_s: rot(along),
            e_h: Vector3::new(0.0, 0.0, 1.0),
            e_n: rot(Vector3::new(-1.0, 0.0, 0.0)),
            door: AxisBox {
                min: [0.0, 0.0, -d.thickness],
                max: [d.width, d.height, 0.0],
            },
            handle: AxisBox {
                min: [
                    pivot_s - h.length,
                    h.height_on_door - section_h / 2.0,
                    h.standoff_from_door_face,
                ],
                max: [
                    pivot_s,
                    h.height_on_door + section_h / 2.0,
                    h.standoff_from_door_face + section_d,
                ],
            },
            pivot_s,
            handle_center_h: h.height_on_door,
            wall: AxisBox {
                min: [-w.margin_hinge_side, -w.margin_below, 0.0],
                max: [d.width + w.margin_moving_side, d.height + w.margin_above, 0.0],
            },
            door_width: d.width,
            door_height: d.height,
        }
    }

    fn to_local(&self, p: Vector3) -> [f64; 3] {
        let r = p - self.origin;
        [r.dot(&self.e_s), r.dot(&self.e_h), r.dot(&self.e_n)]
    }

    fn dir_to_local(&self, d: Vector3) -> [f64; 3] {
        [d.dot(&self.e_s), d.dot(&self.e_h), d.dot(&self.e_n)]
    }

    /// World point at door-local coordinates.
    pub fn local_to_world(&self, s: f64, h: f64, n: f64) -> Vector3 {
        self.origin + self.e_s * s + self.e_h * h + self.e_n * n
    }

    /// Unit normal of the door face, pointing out toward the observer.
    pub fn door_normal(&self) -> Vector3 {
        self.e_n
    }

    /// Unit vector along the door width, hinge toward moving edge.
    pub fn door_along(&self) -> Vector3 {
        self.e_s
    }

    /// Point on the door face.
    pub fn door_point(&self, s: f64, h: f64) -> Vector3 {
        self.local_to_world(s, h, 0.0)
    }

    /// Point on the front face of the lever, `along` measured from the pivot.
    pub fn handle_front_point(&self, along: f64, h_offset: f64) -> Vector3 {
        self.local_to_world(
            self.pivot_s - along,
            self.handle_center_h + h_offset,
            self.handle.max[2],
        )
    }

    fn in_door_opening(&self, s: f64, h: f64) -> bool {
        s > 0.0 && s < self.door_width && h > 0.0 && h < self.door_height
    }

    /// Nearest intersection along `origin + t·dir`, t > 0, ignoring patches.
    pub fn raycast(&self, origin: Vector3, dir: Vector3) -> Option<(SurfaceKind, f64)> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        let mut best: Option<(SurfaceKind, f64)> = None;
        let mut consider = |kind, t: Option<f64>| {
            if let Some(t) = t {
                if best.is_none_or(|(_, bt)| t < bt) {
                    best = Some((kind, t));
                }
            }
        };
        consider(SurfaceKind::Door, self.door.intersect(o, d));
        consider(SurfaceKind::Handle, self.handle.intersect(o, d));
        if d[2] != 0.0 {
            let t = -o[2] / d[2];
            if t > 0.0 {
                let s = o[0] + t * d[0];
                let h = o[1] + t * d[1];
                let inside_wall =
                    s >= self.wall.min[0] && s <= self.wall.max[0] && h >= self.wall.min[1] && h <= self.wall.max[1];
                if inside_wall && !self.in_door_opening(s, h) {
                    consider(SurfaceKind::Wall, Some(t));
                }
            }
        }
        best
    }

    fn patch_coords(&self, surface: SurfaceKind, local: [f64; 3]) -> (f64, f64) {
        match surface {
            SurfaceKind::Door | SurfaceKind::Wall => (local[0], local[1]),
            SurfaceKind::Handle => (self.pivot_s - local[0], local[1] - self.handle_center_h),
        }
    }

    /// Distance from a world point to the named surface.
    pub fn residual(&self, surface: SurfaceKind, p: Vector3) -> f64 {
        let local = self.to_local(p);
        match surface {
            SurfaceKind::Door => self.door.surface_distance(local),
            SurfaceKind::Handle => self.handle.surface_distance(local),
            SurfaceKind::Wall => self.wall.surface_distance(local),
        }
    }
}

impl SceneDescriptor {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let scene: SceneDescriptor = serde_json::from_str(text).map_err(|e| SimError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |what: String| Err(SimError::Invalid(what));
        if self.version != SCENE_VERSION {
            return fail(format!("version must be {SCENE_VERSION}, found {}", self.version));
        }
        self.camera.validate()?;
        let d = &self.door;
        if !d.hinge_position.iter().all(|c| c.is_finite()) || !d.yaw.is_finite() {
            return fail("door: hinge_position and yaw must be finite".into());
        }
        if !(d.width > 0.0) {
            return fail("door.width must be > 0".into());
        }
        if !(d.height > 0.0) || !(d.thickness > 0.0) {
            return fail("door.height and door.thickness must be > 0".into());
        }
        let h = &self.handle;
        if !(h.length > 0.0) {
            return fail("handle.length must be > 0".into());
        }
        let [section_h, section_d] = h.cross_section;
        if !(section_h > 0.0 && section_d > 0.0) {
            return fail("handle.cross_section entries must be > 0".into());
        }
        if !(h.standoff_from_door_face >= 0.0) || !(h.mount_offset_from_moving_edge >= 0.0) {
            return fail("handle offsets must be >= 0".into());
        }
        if !(h.mount_offset_from_moving_edge + h.length <= d.width) {
            return fail("handle does not fit on the door face (mount offset + length > door width)".into());
        }
        if !(h.height_on_door - section_h / 2.0 >= 0.0 && h.height_on_door + section_h / 2.0 <= d.height) {
            return fail("handle does not fit on the door face vertically".into());
        }
        let w = &self.wall;
        if ![
            w.margin_hinge_side,
            w.margin_moving_side,
            w.margin_below,
            w.margin_above,
        ]
        .iter()
        .all(|m| *m >= 0.0 && m.is_finite())
        {
            return fail("wall margins must be finite and >= 0".into());
        }
        if !(self.depth_noise_sigma_at_1m >= 0.0 && self.depth_noise_sigma_at_1m.is_finite()) {
            return fail("depth_noise_sigma_at_1m must be >= 0".into());
        }
        for (i, p) in self.specular_patches.iter().enumerate() {
            if !(p.s_min < p.s_max && p.h_min < p.h_max) {
                return fail(format!("specular_patches[{i}]: empty rectangle"));
            }
            let (s_lo, s_hi, h_lo, h_hi) = match p.surface {
                SurfaceKind::Door => (0.0, d.width, 0.0, d.height),
                SurfaceKind::Handle => (0.0, h.length, -section_h / 2.0, section_h / 2.0),
                SurfaceKind::Wall => (
                    -w.margin_hinge_side,
                    d.width + w.margin_moving_side,
                    -w.margin_below,
                    d.height + w.margin_above,
                ),
            };
            if p.s_min < s_lo || p.s_max > s_hi || p.h_min < h_lo || p.h_max > h_hi {
                return fail(format!(
                    "specular_patches[{i}]: rectangle leaves its {:?} surface",
                    p.surface
                ));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> SceneGeometry {
        SceneGeometry::new(self)
    }

    /// Full hit record including specular classification.
    pub fn hit(&self, geometry: &SceneGeometry, origin: Vector3, dir: Vector3) -> Option<Hit> {
        let (surface, t) = geometry.raycast(origin, dir)?;
        let point = origin + dir * t;
        let coords = geometry.patch_coords(surface, geometry.to_local(point));
        let specular = self
            .specular_patches
            .iter()
            .any(|p| p.surface == surface && p.contains(coords.0, coords.1));
        Some(Hit {
            surface,
            t,
            point,
            patch_coords: coords,
            specular,
        })
    }

    /// Reference scene: 0.90 m × 2.0 m door, 0.11 m lever 6 cm from the
    /// moving edge, door face 2 m ahead of the robot start along world +x.
    pub fn reference(hinge_side: HingeSide) -> Self {
        let y = match hinge_side {
            HingeSide::Left => 0.45,
            HingeSide::Right => -0.45,
        };
        SceneDescriptor {
            version: SCENE_VERSION,
            camera: CameraIntrinsics::default(),
            door: DoorSpec {
                hinge_position: [2.0, y, -1.2],
                width: 0.90,
                height: 2.0,
                thickness: 0.04,
                yaw: 0.0,
                hinge_side,
            },
            handle: HandleSpec {
                mount_offset_from_moving_edge: 0.06,
                height_on_door: 1.0,
                length: 0.11,
                cross_section: [0.02, 0.02],
                standoff_from_door_face: 0.04,
            },
            wall: WallSpec::default(),
            specular_patches: Vec::new(),
            depth_noise_sigma_at_1m: 0.0,
            seed: 7,
            colors: Palette::default(),
            start_pose: BasePose::new(1.0, 0.0, 0.0),
        }
    }
}

/// World-frame points of the reference measurements, for scripted operators.
pub struct GroundTruth {
    pub geometry: SceneGeometry,
    pub door_width: f64,
    pub handle_length: f64,
    /// Lever pivot distance from the moving edge.
    pub handle_mount_offset: f64,
}

impl GroundTruth {
    pub fn of(scene: &SceneDescriptor) -> Self {
        Self {
            geometry: scene.geometry(),
            door_width: scene.door.width,
            handle_length: scene.handle.length,
            handle_mount_offset: scene.handle.mount_offset_from_moving_edge,
        }
    }

    /// Hinge-edge and moving-edge points at height `h` on the door face.
    pub fn width_points(&self, h: f64) -> (Point3, Point3) {
        let a = self.geometry.door_point(0.0, h);
        let b = self.geometry.door_point(self.door_width, h);
        (to_world(a), to_world(b))
    }

    /// Pivot-end and free-end points on the lever's front face.
    pub fn handle_points(&self) -> (Point3, Point3) {
        let a = self.geometry.handle_front_point(0.0, 0.0);
        let b = self.geometry.handle_front_point(self.handle_length, 0.0);
        (to_world(a), to_world(b))
    }

    pub fn door_point(&self, s: f64, h: f64) -> Point3 {
        to_world(self.geometry.door_point(s, h))
    }

    pub fn handle_point(&self, along: f64) -> Point3 {
        to_world(self.geometry.handle_front_point(along, 0.0))
    }
}

fn to_world(v: Vector3) -> Point3 {
    Point3::world(v.x, v.y, v.z)
}
