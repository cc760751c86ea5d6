use rand::rngs::SmallRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::camera::CameraIntrinsics;
use super::scene::{Hit, SceneDescriptor, SceneGeometry};
use super::SimError;
use crate::geometry::{FrameTag, Point3, RigidTransform, Vector3};

/// Registered color and depth image pair. Depth is z-depth in meters with
/// 0.0 marking a hole (no return, specular surface, or out of range).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Row-major RGB8.
    pub color: Vec<u8>,
    /// Row-major meters.
    pub depth: Vec<f64>,
    pub intrinsics: CameraIntrinsics,
    /// World-to-camera transform the frame was rendered from.
    pub camera_pose: RigidTransform,
    pub timestamp_ms: u64,
    pub index: u64,
}

impl Frame {
    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn depth_at(&self, u: u32, v: u32) -> Result<f64, SimError> {
        self.check_bounds(u, v)?;
        Ok(self.depth[v as usize * self.width() as usize + u as usize])
    }

    pub fn color_at(&self, u: u32, v: u32) -> Result<[u8; 3], SimError> {
        self.check_bounds(u, v)?;
        let i = 3 * (v as usize * self.width() as usize + u as usize);
        Ok([self.color[i], self.color[i + 1], self.color[i + 2]])
    }

    fn check_bounds(&self, u: u32, v: u32) -> Result<(), SimError> {
        if self.intrinsics.contains(u, v) {
            Ok(())
        } else {
            Err(SimError::OutOfBounds {
                u,
                v,
                width: self.width(),
                height: self.height(),
            })
        }
    }
}

/// Camera-frame point behind a pixel, or `None` for a hole.
pub fn deproject(frame: &Frame, u: u32, v: u32) -> Result<Option<Point3>, SimError> {
    let d = frame.depth_at(u, v)?;
    if d == 0.0 {
        return Ok(None);
    }
    Ok(Some(frame.intrinsics.deproject_depth(u as f64, v as f64, d)))
}

/// World-frame ray through a pixel center, direction scaled to unit z-depth.
pub fn pixel_ray(
    intrinsics: &CameraIntrinsics,
    world_to_camera: &RigidTransform,
    u: f64,
    v: f64,
) -> (Vector3, Vector3) {
    let camera_to_world = world_to_camera.inverse();
    let origin = camera_to_world.translation();
    let dir = camera_to_world.apply_vector(&intrinsics.ray_direction(u, v));
    (origin, dir)
}

/// Ground-truth hit behind a pixel, ignoring the depth range and noise.
pub fn pixel_hit(scene: &SceneDescriptor, world_to_camera: &RigidTransform, u: u32, v: u32) -> Option<Hit> {
    let geometry = scene.geometry();
    let (origin, dir) = pixel_ray(&scene.camera, world_to_camera, u as f64, v as f64);
    scene.hit(&geometry, origin, dir)
}

/// Renders a frame from the given world-to-camera pose.
///
/// Depth noise is zero-mean Gaussian with σ = σ₁ₘ·z², drawn from a stream
/// keyed by (scene seed, frame index, pixel index), so the output is a pure
/// function of its arguments.
pub fn render(
    scene: &SceneDescriptor,
    world_to_camera: &RigidTransform,
    frame_index: u64,
    timestamp_ms: u64,
) -> Result<Frame, SimError> {
    let mut frame = render_clean(scene, world_to_camera, frame_index, timestamp_ms)?;
    add_depth_noise(&mut frame, scene.depth_noise_sigma_at_1m, scene.seed);
    Ok(frame)
}

/// Noise-free render.
pub fn render_clean(
    scene: &SceneDescriptor,
    world_to_camera: &RigidTransform,
    frame_index: u64,
    timestamp_ms: u64,
) -> Result<Frame, SimError> {
    if world_to_camera.source() != FrameTag::World || world_to_camera.target() != FrameTag::Camera {
        return Err(SimError::WrongFrame(world_to_camera.source()));
    }
    let k = scene.camera;
    let geometry: SceneGeometry = scene.geometry();
    let camera_to_world = world_to_camera.inverse();
    let origin = camera_to_world.translation();
    let width = k.width as usize;

    let mut depth = vec![0.0; k.pixel_count()];
    let mut color = vec![0u8; 3 * k.pixel_count()];
    depth
        .par_chunks_mut(width)
        .zip(color.par_chunks_mut(3 * width))
        .enumerate()
        .for_each(|(v, (depth_row, color_row))| {
            for u in 0..width {
                let dir = camera_to_world.apply_vector(&k.ray_direction(u as f64, v as f64));
                let hit = scene.hit(&geometry, origin, dir);
                let rgb = scene.colors.of(hit.map(|h| h.surface));
                color_row[3 * u..3 * u + 3].copy_from_slice(&rgb);
                depth_row[u] = match hit {
                    Some(h) if !h.specular && k.in_depth_range(h.t) => h.t,
                    _ => 0.0,
                };
            }
        });

    Ok(Frame {
        color,
        depth,
        intrinsics: k,
        camera_pose: *world_to_camera,
        timestamp_ms,
        index: frame_index,
    })
}

/// Adds z²-scaled Gaussian noise to every nonzero depth of `frame`.
/// Samples that leave the depth range become holes.
pub fn add_depth_noise(frame: &mut Frame, sigma_at_1m: f64, seed: u64) {
    if sigma_at_1m == 0.0 {
        return;
    }
    let k = frame.intrinsics;
    let frame_key = mix(seed ^ mix(frame.index));
    frame.depth.par_iter_mut().enumerate().for_each(|(i, d)| {
        if *d == 0.0 {
            return;
        }
        let mut rng = SmallRng::seed_from_u64(mix(frame_key ^ mix(i as u64 ^ 0x5bd1_e995)));
        let z: f64 = StandardNormal.sample(&mut rng);
        let noisy = *d + sigma_at_1m * *d * *d * z;
        *d = if k.in_depth_range(noisy) { noisy } else { 0.0 };
    });
}

// splitmix64 finalizer
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
