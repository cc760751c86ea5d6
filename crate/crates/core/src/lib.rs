//! Human-in-the-loop door parameter extraction on a simulated RGBD robot.
//!
//! An operator points at pixels of a simulated depth camera; the picks are
//! lifted into the robot base frame and turned into the door width, lever
//! length and rotation senses, the door-plane normal, and a contact point.
//! A differential-drive base turns in place to face the door squarely, and
//! the final parameter set is shipped to a motion-control endpoint over a
//! length-prefixed JSON protocol.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod motion;
pub mod protocol;
pub mod service;
pub mod session;
pub mod sim;
