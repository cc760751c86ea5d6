use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{Point3, Vector3};

/// Pinhole intrinsics of the simulated depth camera. Color and depth share
/// them since frames come out pre-registered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Default for CameraIntrinsics {
    /// 640×480 with a 58°×45° field of view and a 0.5–3.5 m working range.
    fn default() -> Self {
        Self::from_fov(640, 480, 58f64.to_radians(), 45f64.to_radians(), 0.5, 3.5)
    }
}

impl CameraIntrinsics {
    /// Principal point at the image center, focal lengths from full field of view angles.
    pub fn from_fov(width: u32, height: u32, hfov: f64, vfov: f64, depth_min: f64, depth_max: f64) -> Self {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        Self {
            width,
            height,
            fx: (width as f64 / 2.0) / (hfov / 2.0).tan(),
            fy: (height as f64 / 2.0) / (vfov / 2.0).tan(),
            cx,
            cy,
            depth_min,
            depth_max,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |what: &str| Err(SimError::Invalid(format!("camera: {what}")));
        if self.width == 0 || self.height == 0 {
            return fail("width and height must be positive");
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return fail("fx and fy must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return fail("principal point must lie inside the image");
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max && self.depth_max.is_finite()) {
            return fail("need 0 < depth_min < depth_max");
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        u < self.width && v < self.height
    }

    /// Camera-frame direction through the pixel center, scaled to unit depth.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3 {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel plus z-depth to a camera-frame point.
    pub fn deproject_depth(&self, u: f64, v: f64, depth: f64) -> Point3 {
        Point3::camera((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    pub fn in_depth_range(&self, depth: f64) -> bool {
        depth >= self.depth_min && depth <= self.depth_max
    }
}

/// Continuous pixel coordinates of a camera-frame point.
pub fn project(intrinsics: &CameraIntrinsics, p: &Point3) -> Result<(f64, f64), SimError> {
    if p.frame() != crate::geometry::FrameTag::Camera {
        return Err(SimError::WrongFrame(p.frame()));
    }
    if !(p.z() > 0.0) {
        return Err(SimError::BehindCamera(p.z()));
    }
    Ok((
        intrinsics.fx * p.x() / p.z() + intrinsics.cx,
        intrinsics.fy * p.y() / p.z() + intrinsics.cy,
    ))
}
