use serde::{Deserialize, Serialize};

use crate::geometry::{FrameTag, Point3, RotationDirection};
use crate::motion::WheelCommand;

pub const PROTOCOL_VERSION: u32 = 1;

/// Everything the slave needs to plan the opening motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParameterSet", deny_unknown_fields)]
pub struct ParameterSet {
    pub door_width: f64,
    pub door_rotation: RotationDirection,
    pub handle_length: f64,
    pub handle_rotation: RotationDirection,
    /// Base-frame contact point on the lever.
    pub contact_point: Point3,
    /// Yaw deviation measured from the normal picks, radians.
    pub deviation_at_capture: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameterSet {
    door_width: f64,
    door_rotation: RotationDirection,
    handle_length: f64,
    handle_rotation: RotationDirection,
    contact_point: Point3,
    deviation_at_capture: f64,
}

impl TryFrom<RawParameterSet> for ParameterSet {
    type Error = String;
    fn try_from(r: RawParameterSet) -> Result<Self, Self::Error> {
        let p = ParameterSet {
            door_width: r.door_width,
            door_rotation: r.door_rotation,
            handle_length: r.handle_length,
            handle_rotation: r.handle_rotation,
            contact_point: r.contact_point,
            deviation_at_capture: r.deviation_at_capture,
        };
        p.validate()?;
        Ok(p)
    }
}

impl ParameterSet {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.door_width > self.handle_length && self.handle_length > 0.0) || !self.door_width.is_finite() {
            return Err(format!(
                "need door_width > handle_length > 0, got {} and {}",
                self.door_width, self.handle_length
            ));
        }
        if self.contact_point.frame() != FrameTag::Base {
            return Err("contact_point must be in the base frame".into());
        }
        if !self.deviation_at_capture.is_finite() {
            return Err("deviation_at_capture must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageType {
    Hello,
    ParamSet,
    Orient,
    Drive,
    Ack,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub peer: String,
    pub protocol_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientCommand {
    pub theta_diff: f64,
    pub wheels: WheelCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveCommand {
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorReport {
    pub code: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Hello(Hello),
    ParamSet(ParameterSet),
    Orient(OrientCommand),
    Drive(DriveCommand),
    Ack,
    Error(ErrorReport),
}

impl MessageBody {
    pub fn kind(&self) -> MessageType {
        match self {
            MessageBody::Hello(_) => MessageType::Hello,
            MessageBody::ParamSet(_) => MessageType::ParamSet,
            MessageBody::Orient(_) => MessageType::Orient,
            MessageBody::Drive(_) => MessageType::Drive,
            MessageBody::Ack => MessageType::Ack,
            MessageBody::Error(_) => MessageType::Error,
        }
    }
}

/// One protocol message. For `Ack` and `Error` replies the sequence echoes
/// the message being answered; otherwise it increases strictly per connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sequence: u64,
    pub body: MessageBody,
}

impl Message {
    pub fn new(sequence: u64, body: MessageBody) -> Self {
        Self { sequence, body }
    }

    pub fn ack(sequence: u64) -> Self {
        Self::new(sequence, MessageBody::Ack)
    }
}
