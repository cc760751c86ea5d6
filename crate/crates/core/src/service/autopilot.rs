//! A scripted operator that knows the scene ground truth. It aims at the
//! true door edges, lever ends and door-face points, applies each action
//! through a [`SessionDriver`], and keeps the action list so the run can be
//! saved as a click script.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use thiserror::Error;

use super::action::Action;
use super::driver::{Outcome, SessionDriver};
use crate::geometry::Point3;
use crate::protocol::{CommandLink, LoopbackLink};
use crate::session::{Clock, ManualClock, PickMode, Session, SessionConfig, SessionError, HANDLE_STANDOFF};
use crate::sim::{GroundTruth, SceneDescriptor, SurfaceKind};

/// Height on the door of the width picks, meters above the door bottom.
pub const WIDTH_PICK_HEIGHT: f64 = 0.9;
const MAX_BACKUPS: usize = 4;
const BACKUP_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutopilotError {
    #[error("cannot see the {0} from the current pose")]
    NotVisible(&'static str),
    #[error("{action} failed: {source}")]
    Session { action: &'static str, source: SessionError },
}

pub struct Autopilot {
    driver: SessionDriver,
    truth: GroundTruth,
    actions: Vec<Action>,
}

impl Autopilot {
    pub fn new(driver: SessionDriver, scene: &SceneDescriptor) -> Self {
        Self {
            driver,
            truth: GroundTruth::of(scene),
            actions: Vec::new(),
        }
    }

    /// Autopilot on a fresh in-process session with a loopback link.
    pub fn loopback(scene: SceneDescriptor, config: SessionConfig) -> Result<Self, SessionError> {
        Self::with_link(
            scene,
            config,
            Arc::new(ManualClock::new(0)),
            Box::new(LoopbackLink::new()),
        )
    }

    pub fn with_link(
        scene: SceneDescriptor,
        config: SessionConfig,
        clock: Arc<dyn Clock>,
        link: Box<dyn CommandLink>,
    ) -> Result<Self, SessionError> {
        let shared = Arc::new(scene.clone());
        let driver = SessionDriver::new(link, |link| Session::new(shared, config, clock, link))?;
        Ok(Self::new(driver, &scene))
    }

    pub fn driver(&self) -> &SessionDriver {
        &self.driver
    }

    pub fn driver_mut(&mut self) -> &mut SessionDriver {
        &mut self.driver
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.actions
    }

    pub fn apply(&mut self, action: Action, name: &'static str) -> Result<Outcome, AutopilotError> {
        self.actions.push(action.clone());
        self.driver
            .apply(&action)
            .map_err(|source| AutopilotError::Session { action: name, source })
    }

    fn pixel(&self, target: &Point3, surface: SurfaceKind, what: &'static str) -> Result<(u32, u32), AutopilotError> {
        self.driver
            .session()
            .aim(target, surface)
            .ok_or(AutopilotError::NotVisible(what))
    }

    pub fn click(&mut self, target: &Point3, surface: SurfaceKind, mode: PickMode) -> Result<Outcome, AutopilotError> {
        let (u, v) = self.pixel(target, surface, "pick target")?;
        self.apply(
            Action::Select {
                u,
                v,
                mode,
                frame_timestamp: None,
            },
            "select",
        )
    }

    pub fn hover(&mut self, target: &Point3, surface: SurfaceKind) -> Result<Outcome, AutopilotError> {
        let (u, v) = self.pixel(target, surface, "hover target")?;
        self.apply(Action::Hover { u, v }, "hover")
    }

    /// Picks the hinge-edge and moving-edge points at [`WIDTH_PICK_HEIGHT`],
    /// backing away first if either edge is out of view.
    pub fn measure_width(&mut self) -> Result<(), AutopilotError> {
        let (hinge, moving) = self.truth.width_points(WIDTH_PICK_HEIGHT);
        let mut backups = 0;
        while self.driver.session().aim(&hinge, SurfaceKind::Door).is_none()
            || self.driver.session().aim(&moving, SurfaceKind::Door).is_none()
        {
            if backups == MAX_BACKUPS {
                return Err(AutopilotError::NotVisible("door edges"));
            }
            self.apply(Action::Drive { distance: -BACKUP_STEP }, "drive")?;
            backups += 1;
        }
        self.click(&hinge, SurfaceKind::Door, PickMode::WidthP1)?;
        self.click(&moving, SurfaceKind::Door, PickMode::WidthP2)?;
        Ok(())
    }

    fn lever_center_s(&self) -> f64 {
        let d = &self.truth;
        d.door_width - d.handle_mount_offset - d.handle_length / 2.0
    }

    /// Sidesteps so the camera faces the lever, hovers the door just below
    /// it, approaches to `target` and confirms.
    pub fn approach_handle(&mut self, target: f64) -> Result<(), AutopilotError> {
        self.face_lever()?;
        let below_lever = self.truth.door_point(self.lever_center_s(), WIDTH_PICK_HEIGHT);
        self.hover(&below_lever, SurfaceKind::Door)?;
        self.apply(Action::Approach { target }, "approach")?;
        self.apply(Action::Confirm, "confirm")?;
        Ok(())
    }

    /// Turns a quarter, drives sideways until the camera is level with the
    /// lever center, and turns back to the original heading.
    pub fn face_lever(&mut self) -> Result<(), AutopilotError> {
        let lever = self.truth.handle_point(self.truth.handle_length / 2.0);
        let mount_y = self.driver.session().config().mount.translation().y;
        let pose = self.driver.session().pose();
        // Lateral offset in the base frame, at the current heading.
        let (sin, cos) = pose.heading().sin_cos();
        let dx = lever.x() - pose.x;
        let dy = lever.y() - pose.y;
        let lateral = -sin * dx + cos * dy - mount_y;
        if lateral.abs() > 0.01 {
            self.apply(Action::Turn { angle: FRAC_PI_2 }, "turn")?;
            self.apply(Action::Drive { distance: lateral }, "drive")?;
            self.apply(Action::Turn { angle: -FRAC_PI_2 }, "turn")?;
        }
        Ok(())
    }

    /// Picks the pivot end and the free end of the lever front face.
    pub fn measure_handle(&mut self) -> Result<(), AutopilotError> {
        let (pivot, free) = self.truth.handle_points();
        self.click(&pivot, SurfaceKind::Handle, PickMode::HandleP1)?;
        self.click(&free, SurfaceKind::Handle, PickMode::HandleP2)?;
        Ok(())
    }

    /// Three door-face points around the lever: two level, one above. When
    /// the default triangle is partly out of view it slides along the door
    /// to the nearest position where all three corners are visible.
    pub fn normal_targets(&self) -> [Point3; 3] {
        let s = self.lever_center_s() - 0.2;
        let shifts = (0..40).flat_map(|k| [k as f64 * 0.025, -(k as f64) * 0.025]);
        shifts
            .map(|ds| self.normal_triangle(s + ds))
            .find(|t| {
                t.iter()
                    .all(|p| self.driver.session().aim(p, SurfaceKind::Door).is_some())
            })
            .unwrap_or_else(|| self.normal_triangle(s))
    }

    fn normal_triangle(&self, s: f64) -> [Point3; 3] {
        [
            self.truth.door_point(s, 0.85),
            self.truth.door_point(s + 0.28, 0.85),
            self.truth.door_point(s, 1.15),
        ]
    }

    pub fn measure_normal(&mut self) -> Result<(), AutopilotError> {
        let [a, b, c] = self.normal_targets();
        self.click(&a, SurfaceKind::Door, PickMode::NormalPA)?;
        self.click(&b, SurfaceKind::Door, PickMode::NormalPB)?;
        self.click(&c, SurfaceKind::Door, PickMode::NormalPC)?;
        Ok(())
    }

    pub fn orient(&mut self) -> Result<(), AutopilotError> {
        self.apply(Action::Orient, "orient").map(|_| ())
    }

    /// Contact point at the middle of the lever front face.
    pub fn pick_contact(&mut self) -> Result<(), AutopilotError> {
        let target = self.truth.handle_point(self.truth.handle_length / 2.0);
        self.click(&target, SurfaceKind::Handle, PickMode::Contact).map(|_| ())
    }

    pub fn finalize(&mut self) -> Result<(), AutopilotError> {
        self.apply(Action::Finalize, "finalize").map(|_| ())
    }

    /// The whole procedure from width picks to the acknowledged parameter set.
    pub fn run_all(&mut self) -> Result<(), AutopilotError> {
        self.measure_width()?;
        self.approach_handle(HANDLE_STANDOFF)?;
        self.measure_handle()?;
        self.measure_normal()?;
        self.orient()?;
        self.pick_contact()?;
        self.finalize()
    }
}

/// Click script of a full reference run on `scene`.
pub fn reference_actions(scene: &SceneDescriptor, config: SessionConfig) -> Result<Vec<Action>, AutopilotError> {
    let mut pilot = Autopilot::loopback(scene.clone(), config)
        .map_err(|source| AutopilotError::Session { action: "open", source })?;
    pilot.run_all()?;
    Ok(pilot.into_actions())
}
