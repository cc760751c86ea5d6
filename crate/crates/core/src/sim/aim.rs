//! Scripted operator aim: find the pixel whose ray lands closest to a known
//! world point on a given surface.

use super::camera::project;
use super::render::pixel_ray;
use super::scene::{SceneDescriptor, SurfaceKind};
use crate::geometry::{Point3, RigidTransform};

const SEARCH_RADIUS: i64 = 4;

/// Pixel within a few pixels of `target`'s projection whose ray hits
/// `surface` nearest to `target`. `None` when the target is off-image or
/// no nearby ray lands on that surface.
pub fn aim(
    scene: &SceneDescriptor,
    world_to_camera: &RigidTransform,
    target: &Point3,
    surface: SurfaceKind,
) -> Option<(u32, u32)> {
    let k = &scene.camera;
    let camera_point = world_to_camera.apply(target).ok()?;
    let (uf, vf) = project(k, &camera_point).ok()?;
    let geometry = scene.geometry();
    let (u0, v0) = (uf.round() as i64, vf.round() as i64);
    let mut best: Option<((u32, u32), f64)> = None;
    for dv in -SEARCH_RADIUS..=SEARCH_RADIUS {
        for du in -SEARCH_RADIUS..=SEARCH_RADIUS {
            let (u, v) = (u0 + du, v0 + dv);
            if u < 0 || v < 0 || u >= k.width as i64 || v >= k.height as i64 {
                continue;
            }
            let (origin, dir) = pixel_ray(k, world_to_camera, u as f64, v as f64);
            let Some(hit) = scene.hit(&geometry, origin, dir) else {
                continue;
            };
            if hit.surface != surface {
                continue;
            }
            let miss = (hit.point - target.coords()).norm();
            if best.is_none_or(|(_, m)| miss < m) {
                best = Some(((u as u32, v as u32), miss));
            }
        }
    }
    best.map(|(px, _)| px)
}
