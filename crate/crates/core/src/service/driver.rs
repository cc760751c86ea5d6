use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::action::Action;
use crate::geometry::{Point3, RotationDirection, Vector3};
use crate::motion::{BasePose, WheelCommand};
use crate::protocol::{Ack, CommandLink, DriveCommand, LinkError, MessageBody, MessageType, ParameterSet};
use crate::session::{
    HoverReadout, PickMode, PixelSelection, Session, SessionError, SessionEvent, SessionState, StandoffCheck,
};

/// What an accepted action produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Hover(HoverReadout),
    Selected(SessionEvent),
    Approach {
        drive: DriveCommand,
    },
    Standoff(StandoffCheck),
    Oriented {
        deviation_rad: f64,
        wheels: WheelCommand,
    },
    Turned {
        wheels: WheelCommand,
    },
    Driven {
        distance: f64,
    },
    Reset {
        state: SessionState,
    },
    Finalized {
        parameters: ParameterSet,
        ack_sequence: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub code: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn of(e: &SessionError) -> Self {
        Self {
            line: None,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionRecord {
    pub u: u32,
    pub v: u32,
    pub mode: PickMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AckRecord {
    pub sequence: u64,
    pub message: MessageType,
}

/// Everything a run extracted. Frame timestamps and indices are left out so
/// that a live run and a scripted replay of the same actions compare equal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub state: SessionState,
    pub door_width: Option<f64>,
    pub door_rotation: Option<RotationDirection>,
    /// Base-z difference of the two width picks; the width is the full 3D
    /// distance, so a large value means the picks were not level.
    pub width_height_difference: Option<f64>,
    pub handle_length: Option<f64>,
    pub handle_rotation: Option<RotationDirection>,
    pub normal: Option<Vector3>,
    pub deviation_rad: Option<f64>,
    pub deviation_deg: Option<f64>,
    pub wheel_command: Option<WheelCommand>,
    pub contact_point: Option<Point3>,
    /// Parameter set acknowledged by the slave.
    pub sent: Option<ParameterSet>,
    pub pose: BasePose,
    pub selections: Vec<SelectionRecord>,
    pub state_trace: Vec<SessionState>,
    pub steps: Vec<StepRecord>,
    pub acks: Vec<AckRecord>,
    /// The error that stopped a script, if any.
    pub error: Option<ErrorRecord>,
}

struct RecordingLink {
    inner: Box<dyn CommandLink>,
    acks: Arc<Mutex<Vec<AckRecord>>>,
}

impl CommandLink for RecordingLink {
    fn deliver(&mut self, body: MessageBody) -> Result<Ack, LinkError> {
        let message = body.kind();
        let ack = self.inner.deliver(body)?;
        self.acks.lock().expect("ack lock").push(AckRecord {
            sequence: ack.sequence,
            message,
        });
        Ok(ack)
    }
}

/// Applies [`Action`]s to a session and keeps the record behind [`Report`].
/// Live connections and the script runner both go through this type.
pub struct SessionDriver {
    session: Session,
    acks: Arc<Mutex<Vec<AckRecord>>>,
    steps: Vec<StepRecord>,
    selections: Vec<SelectionRecord>,
    state_trace: Vec<SessionState>,
}

impl SessionDriver {
    /// `build` receives the link to hand to the session; the driver wraps
    /// it to record acknowledgements.
    pub fn new(
        link: Box<dyn CommandLink>,
        build: impl FnOnce(Box<dyn CommandLink>) -> Result<Session, SessionError>,
    ) -> Result<Self, SessionError> {
        let acks = Arc::new(Mutex::new(Vec::new()));
        let session = build(Box::new(RecordingLink {
            inner: link,
            acks: acks.clone(),
        }))?;
        let state_trace = vec![session.current_state()];
        Ok(Self {
            session,
            acks,
            steps: Vec::new(),
            selections: Vec::new(),
            state_trace,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn state(&self) -> SessionState {
        self.session.current_state()
    }

    /// Applies one action. Hovers are answered but not recorded.
    pub fn apply(&mut self, action: &Action) -> Result<Outcome, SessionError> {
        let result = self.dispatch(action);
        if !matches!(action, Action::Hover { .. }) {
            self.steps.push(StepRecord {
                action: action.clone(),
                outcome: result.as_ref().ok().cloned(),
                error: result.as_ref().err().map(ErrorRecord::of),
            });
        }
        let state = self.session.current_state();
        if self.state_trace.last() != Some(&state) {
            self.state_trace.push(state);
        }
        result
    }

    fn dispatch(&mut self, action: &Action) -> Result<Outcome, SessionError> {
        let s = &mut self.session;
        Ok(match *action {
            Action::Hover { u, v } => Outcome::Hover(s.hover(u, v)?),
            Action::Select {
                u,
                v,
                mode,
                frame_timestamp,
            } => {
                let event = s.select(PixelSelection {
                    u,
                    v,
                    mode,
                    frame_timestamp,
                })?;
                self.selections.push(SelectionRecord { u, v, mode });
                Outcome::Selected(event)
            }
            Action::Approach { target } => Outcome::Approach {
                drive: s.begin_approach(target)?,
            },
            Action::Confirm => Outcome::Standoff(s.confirm_standoff()?),
            Action::Orient => {
                let (deviation, wheels) = s.orient()?;
                Outcome::Oriented {
                    deviation_rad: deviation.radians(),
                    wheels,
                }
            }
            Action::Turn { angle } => Outcome::Turned { wheels: s.turn(angle)? },
            Action::Drive { distance } => Outcome::Driven {
                distance: s.drive(distance)?.distance,
            },
            Action::Reset { state } => {
                s.reset_to(state)?;
                Outcome::Reset { state }
            }
            Action::Finalize => {
                let (parameters, ack) = s.finalize()?;
                Outcome::Finalized {
                    parameters,
                    ack_sequence: ack.sequence,
                }
            }
        })
    }

    pub fn report(&self) -> Report {
        let p = self.session.parameters();
        Report {
            state: self.session.current_state(),
            door_width: p.door.map(|m| m.distance),
            door_rotation: p.door.map(|m| m.rotation_direction),
            width_height_difference: p.width_height_difference(),
            handle_length: p.handle.map(|m| m.distance),
            handle_rotation: p.handle.map(|m| m.rotation_direction),
            normal: p.normal,
            deviation_rad: p.deviation.map(|d| d.radians()),
            deviation_deg: p.deviation.map(|d| d.degrees()),
            wheel_command: p.wheel_command,
            contact_point: p.contact.map(|c| c.base_point),
            sent: p.sent.map(|s| s.parameters),
            pose: self.session.pose(),
            selections: self.selections.clone(),
            state_trace: self.state_trace.clone(),
            steps: self.steps.clone(),
            acks: self.acks.lock().expect("ack lock").clone(),
            error: None,
        }
    }
}
