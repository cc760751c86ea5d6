//! The operator procedure as a state machine: measure the door width from
//! about 1 m, approach to about 0.75 m, measure the lever, pick three points
//! for the door normal, turn square to the door, pick the contact point, and
//! ship the result to the slave.

mod frames;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    default_camera_mount, deviation_angle, dist_ori_compute, plane_normal, transform_point, DeviationAngle,
    DriveGeometry, GeometryError, MeasureResult, Point3, RigidTransform, Vector3,
};
use crate::motion::{self, BasePose, WheelCommand};
use crate::protocol::{Ack, CommandLink, DriveCommand, LinkError, MessageBody, OrientCommand, ParameterSet};
use crate::sim::{aim, deproject, Frame, SceneDescriptor, SimError, SurfaceKind};

pub use frames::{Clock, FrameSource, ManualClock, MonotonicClock};

/// Standoff for the lever measurement, meters.
pub const HANDLE_STANDOFF: f64 = 0.75;
/// Standoff for the width measurement, meters.
pub const WIDTH_STANDOFF: f64 = 1.0;
/// A selection older than this binds to a freshly captured frame.
pub const STALE_FRAME_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionState {
    AwaitWidthPoints,
    Approaching,
    AwaitHandlePoints,
    AwaitNormalPoints,
    Orienting,
    AwaitContactPoint,
    ReadyToSend,
    Sent,
}

impl SessionState {
    pub const ALL: [SessionState; 8] = [
        SessionState::AwaitWidthPoints,
        SessionState::Approaching,
        SessionState::AwaitHandlePoints,
        SessionState::AwaitNormalPoints,
        SessionState::Orienting,
        SessionState::AwaitContactPoint,
        SessionState::ReadyToSend,
        SessionState::Sent,
    ];
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PickMode {
    WidthP1,
    WidthP2,
    HandleP1,
    HandleP2,
    NormalPA,
    NormalPB,
    NormalPC,
    Contact,
}

impl PickMode {
    pub const ALL: [PickMode; 8] = [
        PickMode::WidthP1,
        PickMode::WidthP2,
        PickMode::HandleP1,
        PickMode::HandleP2,
        PickMode::NormalPA,
        PickMode::NormalPB,
        PickMode::NormalPC,
        PickMode::Contact,
    ];

    /// The only state in which this pick is accepted.
    pub fn state(self) -> SessionState {
        match self {
            PickMode::WidthP1 | PickMode::WidthP2 => SessionState::AwaitWidthPoints,
            PickMode::HandleP1 | PickMode::HandleP2 => SessionState::AwaitHandlePoints,
            PickMode::NormalPA | PickMode::NormalPB | PickMode::NormalPC => SessionState::AwaitNormalPoints,
            PickMode::Contact => SessionState::AwaitContactPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelSelection {
    pub u: u32,
    pub v: u32,
    pub mode: PickMode,
    /// Timestamp of the frame the operator clicked on; `None` binds to the latest.
    #[serde(default)]
    pub frame_timestamp: Option<u64>,
}

impl PixelSelection {
    pub fn new(u: u32, v: u32, mode: PickMode) -> Self {
        Self {
            u,
            v,
            mode,
            frame_timestamp: None,
        }
    }
}

/// A stored pick with the depth it was lifted from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pick {
    pub selection: PixelSelection,
    pub frame_index: u64,
    pub depth: f64,
    pub camera_point: Point3,
    pub base_point: Point3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HoverReadout {
    pub camera_point: Option<Point3>,
    pub base_point: Option<Point3>,
    /// Forward (base x) distance to the pointed surface.
    pub standoff: Option<f64>,
}

impl HoverReadout {
    /// Dual-frame readout of one pixel. Holes give an empty readout.
    pub fn of(frame: &Frame, mount: &RigidTransform, u: u32, v: u32) -> Result<Self, SessionError> {
        let Some(camera_point) = deproject(frame, u, v)? else {
            return Ok(Self::default());
        };
        let base_point = transform_point(mount, &camera_point)?;
        Ok(Self {
            camera_point: Some(camera_point),
            base_point: Some(base_point),
            standoff: Some(base_point.x()),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.camera_point.is_none()
    }
}

/// Everything the session has measured so far.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Parameters {
    pub width_picks: [Option<Pick>; 2],
    pub door: Option<MeasureResult>,
    pub handle_picks: [Option<Pick>; 2],
    pub handle: Option<MeasureResult>,
    pub normal_picks: [Option<Pick>; 3],
    pub normal: Option<Vector3>,
    pub deviation: Option<DeviationAngle>,
    pub wheel_command: Option<WheelCommand>,
    pub contact: Option<Pick>,
    pub sent: Option<SentRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SentRecord {
    pub parameters: ParameterSet,
    pub ack_sequence: u64,
}

impl Parameters {
    fn clear_from(&mut self, state: SessionState) {
        use SessionState::*;
        if state <= AwaitWidthPoints {
            self.width_picks = [None; 2];
            self.door = None;
        }
        if state <= AwaitHandlePoints {
            self.handle_picks = [None; 2];
            self.handle = None;
        }
        if state <= AwaitNormalPoints {
            self.normal_picks = [None; 3];
            self.normal = None;
            self.deviation = None;
        }
        if state <= Orienting {
            self.wheel_command = None;
        }
        if state <= AwaitContactPoint {
            self.contact = None;
        }
        if state <= ReadyToSend {
            self.sent = None;
        }
    }

    /// Vertical offset between the two width picks (base z), meters.
    pub fn width_height_difference(&self) -> Option<f64> {
        match self.width_picks {
            [Some(a), Some(b)] => Some(a.base_point.z() - b.base_point.z()),
            _ => None,
        }
    }

    pub fn parameter_set(&self) -> Option<ParameterSet> {
        let door = self.door?;
        let handle = self.handle?;
        Some(ParameterSet {
            door_width: door.distance,
            door_rotation: door.rotation_direction,
            handle_length: handle.distance,
            handle_rotation: handle.rotation_direction,
            contact_point: self.contact?.base_point,
            deviation_at_capture: self.deviation?.radians(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event")]
pub enum SessionEvent {
    PointStored {
        mode: PickMode,
        base_point: Point3,
    },
    WidthMeasured {
        width: f64,
        rotation: crate::geometry::RotationDirection,
        height_difference: f64,
    },
    HandleMeasured {
        length: f64,
        rotation: crate::geometry::RotationDirection,
    },
    NormalMeasured {
        normal: Vector3,
        deviation: f64,
    },
    ContactStored {
        base_point: Point3,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("no depth at pixel ({u}, {v}); pick a measurable spot")]
    HolePick { u: u32, v: u32 },
    #[error("{action} is not allowed in state {state}")]
    WrongState { state: SessionState, action: String },
    #[error("normal picks are collinear")]
    CollinearPoints,
    #[error("normal picks span a horizontal plane")]
    DegenerateNormal,
    #[error("rejected measurement: {0}")]
    DegenerateMeasurement(String),
    #[error("no standoff measured yet; hover over the door first")]
    NoStandoff,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("geometry error: {0}")]
    Geometry(GeometryError),
}

impl From<GeometryError> for SessionError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::CollinearPoints => SessionError::CollinearPoints,
            GeometryError::DegenerateNormal => SessionError::DegenerateNormal,
            other => SessionError::Geometry(other),
        }
    }
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::HolePick { .. } => "HolePick",
            SessionError::WrongState { .. } => "WrongState",
            SessionError::CollinearPoints => "CollinearPoints",
            SessionError::DegenerateNormal => "DegenerateNormal",
            SessionError::DegenerateMeasurement(_) => "DegenerateMeasurement",
            SessionError::NoStandoff => "NoStandoff",
            SessionError::Sim(SimError::OutOfBounds { .. }) => "OutOfBounds",
            SessionError::Sim(_) => "Simulation",
            SessionError::Link(LinkError::TransportTimeout) => "TransportTimeout",
            SessionError::Link(LinkError::TransportClosed) => "TransportClosed",
            SessionError::Link(LinkError::Rejected { .. }) => "SlaveRejected",
            SessionError::Link(_) => "Transport",
            SessionError::Geometry(_) => "Geometry",
        }
    }

    /// Operator-recoverable rejections (re-pick, re-hover) as opposed to
    /// state, contract or transport failures.
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            SessionError::HolePick { .. }
                | SessionError::CollinearPoints
                | SessionError::DegenerateNormal
                | SessionError::DegenerateMeasurement(_)
                | SessionError::NoStandoff
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    /// Camera-to-base mount.
    pub mount: RigidTransform,
    pub drive: DriveGeometry,
    pub stale_frame_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mount: default_camera_mount(),
            drive: DriveGeometry::default(),
            stale_frame_ms: STALE_FRAME_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StandoffCheck {
    pub standoff: f64,
    pub target: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HoverMark {
    u: u32,
    v: u32,
    standoff: Option<f64>,
}

pub struct Session {
    config: SessionConfig,
    frames: Arc<FrameSource>,
    link: Box<dyn CommandLink>,
    state: SessionState,
    params: Parameters,
    last_hover: Option<HoverMark>,
    approach_target: f64,
}

impl Session {
    /// Opens a session with the robot at the scene's start pose.
    pub fn new(
        scene: Arc<SceneDescriptor>,
        config: SessionConfig,
        clock: Arc<dyn Clock>,
        link: Box<dyn CommandLink>,
    ) -> Result<Self, SessionError> {
        let pose = scene.start_pose;
        let frames = Arc::new(FrameSource::new(scene, config.mount, pose, clock)?);
        Ok(Self::with_frames(frames, config, link))
    }

    pub fn with_frames(frames: Arc<FrameSource>, config: SessionConfig, link: Box<dyn CommandLink>) -> Self {
        Self {
            config,
            frames,
            link,
            state: SessionState::AwaitWidthPoints,
            params: Parameters::default(),
            last_hover: None,
            approach_target: HANDLE_STANDOFF,
        }
    }

    pub fn current_state(&self) -> SessionState {
        self.state
    }

    pub fn parameters(&self) -> &Parameters {
        &self.params
    }

    pub fn pose(&self) -> BasePose {
        self.frames.pose()
    }

    pub fn frames(&self) -> &Arc<FrameSource> {
        &self.frames
    }

    pub fn frame(&self) -> Arc<Frame> {
        self.frames.latest()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Pixel of the latest frame that lands on `surface` nearest the world
    /// point `target`. This is how scripted operators click.
    pub fn aim(&self, target: &Point3, surface: SurfaceKind) -> Option<(u32, u32)> {
        let frame = self.frames.latest();
        aim(self.frames.scene(), &frame.camera_pose, target, surface)
    }

    fn wrong_state(&self, action: &str) -> SessionError {
        SessionError::WrongState {
            state: self.state,
            action: action.to_string(),
        }
    }

    /// Live readout under the cursor; also remembers the pixel for the
    /// approach step.
    pub fn hover(&mut self, u: u32, v: u32) -> Result<HoverReadout, SessionError> {
        let readout = HoverReadout::of(&self.frames.latest(), &self.config.mount, u, v)?;
        self.last_hover = Some(HoverMark {
            u,
            v,
            standoff: readout.standoff,
        });
        Ok(readout)
    }

    fn bound_frame(&self, selection: &PixelSelection) -> Arc<Frame> {
        let frame = self.frames.latest();
        let reference = selection.frame_timestamp.unwrap_or(frame.timestamp_ms);
        let now = self.frames.now_ms();
        let age = now.saturating_sub(frame.timestamp_ms);
        if age > self.config.stale_frame_ms || reference.abs_diff(frame.timestamp_ms) > self.config.stale_frame_ms {
            self.frames.capture()
        } else {
            frame
        }
    }

    pub fn select(&mut self, selection: PixelSelection) -> Result<SessionEvent, SessionError> {
        if selection.mode.state() != self.state {
            return Err(self.wrong_state(&format!("select {:?}", selection.mode)));
        }
        let frame = self.bound_frame(&selection);
        let (u, v) = (selection.u, selection.v);
        let depth = frame.depth_at(u, v)?;
        let Some(camera_point) = deproject(&frame, u, v)? else {
            return Err(SessionError::HolePick { u, v });
        };
        let base_point = transform_point(&self.config.mount, &camera_point)?;
        let pick = Pick {
            selection,
            frame_index: frame.index,
            depth,
            camera_point,
            base_point,
        };

        let mut next = self.params.clone();
        let mut next_state = self.state;
        let stored = SessionEvent::PointStored {
            mode: selection.mode,
            base_point,
        };
        let event = match selection.mode {
            PickMode::WidthP1 | PickMode::WidthP2 => {
                next.width_picks[(selection.mode == PickMode::WidthP2) as usize] = Some(pick);
                match next.width_picks {
                    [Some(a), Some(b)] => {
                        let m = dist_ori_compute(&a.base_point, &b.base_point)?;
                        if !(m.distance > 0.0) {
                            return Err(SessionError::DegenerateMeasurement("door width is zero".into()));
                        }
                        next.door = Some(m);
                        next_state = SessionState::Approaching;
                        SessionEvent::WidthMeasured {
                            width: m.distance,
                            rotation: m.rotation_direction,
                            height_difference: a.base_point.z() - b.base_point.z(),
                        }
                    }
                    _ => stored,
                }
            }
            PickMode::HandleP1 | PickMode::HandleP2 => {
                next.handle_picks[(selection.mode == PickMode::HandleP2) as usize] = Some(pick);
                match next.handle_picks {
                    [Some(a), Some(b)] => {
                        let m = dist_ori_compute(&a.base_point, &b.base_point)?;
                        let width = next.door.map_or(f64::INFINITY, |d| d.distance);
                        if !(m.distance > 0.0 && m.distance < width) {
                            return Err(SessionError::DegenerateMeasurement(format!(
                                "handle length {:.4} m must be positive and shorter than the door width {:.4} m",
                                m.distance, width
                            )));
                        }
                        next.handle = Some(m);
                        next_state = SessionState::AwaitNormalPoints;
                        SessionEvent::HandleMeasured {
                            length: m.distance,
                            rotation: m.rotation_direction,
                        }
                    }
                    _ => stored,
                }
            }
            PickMode::NormalPA | PickMode::NormalPB | PickMode::NormalPC => {
                let slot = match selection.mode {
                    PickMode::NormalPA => 0,
                    PickMode::NormalPB => 1,
                    _ => 2,
                };
                next.normal_picks[slot] = Some(pick);
                match next.normal_picks {
                    [Some(a), Some(b), Some(c)] => {
                        let n = plane_normal(&a.base_point, &b.base_point, &c.base_point)?;
                        let deviation = deviation_angle(&n)?;
                        next.normal = Some(n);
                        next.deviation = Some(deviation);
                        next_state = SessionState::Orienting;
                        SessionEvent::NormalMeasured {
                            normal: n,
                            deviation: deviation.radians(),
                        }
                    }
                    _ => stored,
                }
            }
            PickMode::Contact => {
                next.contact = Some(pick);
                next_state = SessionState::ReadyToSend;
                SessionEvent::ContactStored { base_point }
            }
        };
        self.params = next;
        self.state = next_state;
        Ok(event)
    }

    fn move_base(&mut self, body: MessageBody, pose: BasePose) -> Result<(), SessionError> {
        self.link.deliver(body)?;
        self.frames.set_pose(pose)?;
        Ok(())
    }

    /// Drives forward by the last hovered standoff minus `target`.
    pub fn begin_approach(&mut self, target: f64) -> Result<DriveCommand, SessionError> {
        if !matches!(self.state, SessionState::AwaitWidthPoints | SessionState::Approaching) {
            return Err(self.wrong_state("approach"));
        }
        if !target.is_finite() {
            return Err(SessionError::DegenerateMeasurement(
                "approach target must be finite".into(),
            ));
        }
        let standoff = self
            .last_hover
            .and_then(|h| h.standoff)
            .ok_or(SessionError::NoStandoff)?;
        let command = DriveCommand {
            distance: standoff - target,
        };
        let pose = motion::drive(&self.frames.pose(), command.distance);
        self.move_base(MessageBody::Drive(command), pose)?;
        self.approach_target = target;
        Ok(command)
    }

    /// Re-reads the standoff at the last hovered pixel. In `Approaching`
    /// this also opens the lever measurement.
    pub fn confirm_standoff(&mut self) -> Result<StandoffCheck, SessionError> {
        if !matches!(self.state, SessionState::AwaitWidthPoints | SessionState::Approaching) {
            return Err(self.wrong_state("confirm"));
        }
        let mark = self.last_hover.ok_or(SessionError::NoStandoff)?;
        let readout = HoverReadout::of(&self.frames.latest(), &self.config.mount, mark.u, mark.v)?;
        let standoff = readout.standoff.ok_or(SessionError::NoStandoff)?;
        self.last_hover = Some(HoverMark {
            standoff: Some(standoff),
            ..mark
        });
        if self.state == SessionState::Approaching {
            self.state = SessionState::AwaitHandlePoints;
        }
        Ok(StandoffCheck {
            standoff,
            target: self.approach_target,
            residual: standoff - self.approach_target,
        })
    }

    /// Turns the base in place by the captured deviation.
    pub fn orient(&mut self) -> Result<(DeviationAngle, WheelCommand), SessionError> {
        if self.state != SessionState::Orienting {
            return Err(self.wrong_state("orient"));
        }
        let deviation = self.params.deviation.ok_or_else(|| self.wrong_state("orient"))?;
        let (pose, wheels) = motion::orient(&self.frames.pose(), deviation, &self.config.drive);
        self.move_base(
            MessageBody::Orient(OrientCommand {
                theta_diff: deviation.radians(),
                wheels,
            }),
            pose,
        )?;
        self.params.wheel_command = Some(wheels);
        self.state = SessionState::AwaitContactPoint;
        Ok((deviation, wheels))
    }

    /// Manual in-place turn by the operator.
    pub fn turn(&mut self, angle: f64) -> Result<WheelCommand, SessionError> {
        if self.state >= SessionState::ReadyToSend {
            return Err(self.wrong_state("turn"));
        }
        if !angle.is_finite() {
            return Err(SessionError::DegenerateMeasurement("turn angle must be finite".into()));
        }
        let theta = DeviationAngle::new(angle);
        let (pose, wheels) = motion::orient(&self.frames.pose(), theta, &self.config.drive);
        self.move_base(
            MessageBody::Orient(OrientCommand {
                theta_diff: theta.radians(),
                wheels,
            }),
            pose,
        )?;
        Ok(wheels)
    }

    /// Manual straight drive by the operator.
    pub fn drive(&mut self, distance: f64) -> Result<DriveCommand, SessionError> {
        if self.state >= SessionState::ReadyToSend {
            return Err(self.wrong_state("drive"));
        }
        if !distance.is_finite() {
            return Err(SessionError::DegenerateMeasurement(
                "drive distance must be finite".into(),
            ));
        }
        let command = DriveCommand { distance };
        let pose = motion::drive(&self.frames.pose(), distance);
        self.move_base(MessageBody::Drive(command), pose)?;
        Ok(command)
    }

    /// Returns to an earlier (or the current) state and drops everything
    /// measured from that state on.
    pub fn reset_to(&mut self, state: SessionState) -> Result<(), SessionError> {
        if state > self.state {
            return Err(self.wrong_state(&format!("reset to {state}")));
        }
        self.params.clear_from(state);
        self.state = state;
        Ok(())
    }

    /// Ships the parameter set and moves to `Sent` once the slave
    /// acknowledges it. On failure the session stays ready to resend.
    pub fn finalize(&mut self) -> Result<(ParameterSet, Ack), SessionError> {
        if self.state != SessionState::ReadyToSend {
            return Err(self.wrong_state("finalize"));
        }
        let parameters = self
            .params
            .parameter_set()
            .ok_or_else(|| self.wrong_state("finalize"))?;
        parameters.validate().map_err(SessionError::DegenerateMeasurement)?;
        let ack = self.link.deliver(MessageBody::ParamSet(parameters))?;
        self.params.sent = Some(SentRecord {
            parameters,
            ack_sequence: ack.sequence,
        });
        self.state = SessionState::Sent;
        Ok((parameters, ack))
    }
}
