use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::session::{PickMode, PixelSelection, SessionState, HANDLE_STANDOFF};

/// One operator action. Click scripts hold one per line and the operator
/// socket carries the same objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Hover {
        u: u32,
        v: u32,
    },
    Select {
        u: u32,
        v: u32,
        mode: PickMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_timestamp: Option<u64>,
    },
    Approach {
        #[serde(default = "default_target")]
        target: f64,
    },
    Confirm,
    Orient,
    /// In-place turn, radians, CCW positive.
    Turn {
        angle: f64,
    },
    /// Straight drive along the heading, meters.
    Drive {
        distance: f64,
    },
    Reset {
        state: SessionState,
    },
    Finalize,
}

fn default_target() -> f64 {
    HANDLE_STANDOFF
}

impl Action {
    pub fn select(selection: PixelSelection) -> Self {
        Action::Select {
            u: selection.u,
            v: selection.v,
            mode: selection.mode,
            frame_timestamp: selection.frame_timestamp,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Hover { .. } => "hover",
            Action::Select { .. } => "select",
            Action::Approach { .. } => "approach",
            Action::Confirm => "confirm",
            Action::Orient => "orient",
            Action::Turn { .. } => "turn",
            Action::Drive { .. } => "drive",
            Action::Reset { .. } => "reset",
            Action::Finalize => "finalize",
        }
    }
}

/// A parsed script action with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptLine {
    pub line: usize,
    pub action: Action,
}

/// Parses a JSON Lines click script. Blank lines and lines starting with
/// `#` are skipped.
pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, ServiceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let action = serde_json::from_str(trimmed).map_err(|e| ServiceError::ScriptParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ScriptLine { line: i + 1, action });
    }
    Ok(out)
}

/// Renders actions as a JSON Lines script.
pub fn write_script(actions: &[Action]) -> String {
    let mut out = String::new();
    for a in actions {
        out.push_str(&serde_json::to_string(a).expect("actions serialize"));
        out.push('\n');
    }
    out
}
