//! Synthetic RGBD camera looking at a parametric door scene.

mod aim;
mod camera;
mod export;
mod render;
mod scene;

use thiserror::Error;

use crate::geometry::FrameTag;

pub use aim::aim;
pub use camera::{project, CameraIntrinsics};
pub use export::{encode_color_png, encode_depth_png, save_color_png, save_depth_png};
pub use render::{add_depth_noise, deproject, pixel_hit, pixel_ray, render, render_clean, Frame};
pub use scene::{
    DoorSpec, GroundTruth, HandleSpec, HingeSide, Hit, Palette, SceneDescriptor, SceneGeometry, SpecularPatch,
    SurfaceKind, WallSpec, SCENE_VERSION,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scene parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds { u: u32, v: u32, width: u32, height: u32 },
    #[error("cannot project a point at z = {0}")]
    BehindCamera(f64),
    #[error("expected a camera-frame quantity, got {0}")]
    WrongFrame(FrameTag),
    #[error("{0}")]
    Io(String),
}
