//! The host side: a session driver shared by the live operator socket and
//! the headless click-script runner.

mod action;
pub mod autopilot;
mod driver;
mod script;
mod server;

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::DriveGeometry;
use crate::session::{SessionConfig, SessionError};
use crate::sim::{SceneDescriptor, SimError};

pub use action::{parse_script, write_script, Action, ScriptLine};
pub use driver::{AckRecord, ErrorRecord, Outcome, Report, SelectionRecord, SessionDriver, StepRecord};
pub use script::{execute, run_script, ScriptRun};
pub use server::{serve, ServiceHandle, API_VERSION};

pub const DEFAULT_FRAME_RATE_HZ: u32 = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot load scene {path}: {source}")]
    Scene { path: String, source: SimError },
    #[error("script line {line}: {message}")]
    ScriptParse { line: usize, message: String },
    #[error("script line {line}: {source}")]
    Step { line: usize, source: SessionError },
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub scene_path: PathBuf,
    pub listen_address: String,
    /// Slave endpoint. The script runner starts a local stub when unset.
    pub slave_address: Option<String>,
    pub frame_rate_hz: u32,
    pub noise_sigma: Option<f64>,
    pub drive_geometry: Option<DriveGeometry>,
}

impl ServiceConfig {
    pub fn new(scene_path: impl Into<PathBuf>) -> Self {
        Self {
            scene_path: scene_path.into(),
            listen_address: "127.0.0.1:7400".into(),
            slave_address: None,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
            noise_sigma: None,
            drive_geometry: None,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(1..=60).contains(&self.frame_rate_hz) {
            return Err(ServiceError::Config(format!(
                "frame rate must be within 1..=60 Hz, got {}",
                self.frame_rate_hz
            )));
        }
        if let Some(s) = self.noise_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ServiceError::Config(format!(
                    "noise sigma must be finite and >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Loads the scene and applies the noise override.
    pub fn load_scene(&self) -> Result<SceneDescriptor, ServiceError> {
        let scene_err = |source| ServiceError::Scene {
            path: self.scene_path.display().to_string(),
            source,
        };
        let mut scene = SceneDescriptor::load(&self.scene_path).map_err(scene_err)?;
        if let Some(s) = self.noise_sigma {
            scene.depth_noise_sigma_at_1m = s;
            scene.validate().map_err(scene_err)?;
        }
        Ok(scene)
    }

    pub fn session_config(&self) -> SessionConfig {
        let mut config = SessionConfig::default();
        if let Some(g) = self.drive_geometry {
            config.drive = g;
        }
        config
    }
}
