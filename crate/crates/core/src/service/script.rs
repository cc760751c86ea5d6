use std::path::Path;
use std::sync::Arc;

use log::{info, warn};

use super::action::{parse_script, ScriptLine};
use super::driver::{ErrorRecord, Report, SessionDriver};
use super::{ServiceConfig, ServiceError};
use crate::protocol::{CommandLink, SlaveLink, SlaveStub};
use crate::session::{ManualClock, Session};

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptRun {
    pub report: Report,
    /// 0 when every line ran without a state, contract or transport error.
    pub exit_code: i32,
}

impl ScriptRun {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }
}

/// Runs a click script headlessly against a fresh session. Without a slave
/// address a local slave stub is started for the duration of the run.
///
/// Operator rejections (hole picks, collinear normal picks and the like)
/// are recorded and the script continues; any other error stops it and
/// names the line.
pub fn run_script(config: &ServiceConfig, script_path: &Path) -> Result<ScriptRun, ServiceError> {
    config.validate()?;
    let text = std::fs::read_to_string(script_path)
        .map_err(|e| ServiceError::Io(format!("cannot read script {}: {e}", script_path.display())))?;
    let lines = parse_script(&text)?;
    let scene = Arc::new(config.load_scene()?);

    let mut stub = None;
    let slave_address = match &config.slave_address {
        Some(addr) => addr.clone(),
        None => {
            let s = SlaveStub::bind("127.0.0.1:0")
                .map_err(|e| ServiceError::Io(format!("cannot start slave stub: {e}")))?;
            let addr = s.addr().to_string();
            info!("started local slave stub on {addr}");
            stub = Some(s);
            addr
        }
    };
    let link: Box<dyn CommandLink> = Box::new(SlaveLink::new(slave_address));
    let session_config = config.session_config();
    let mut driver = SessionDriver::new(link, |link| {
        Session::new(scene, session_config, Arc::new(ManualClock::new(0)), link)
    })?;
    let run = execute(&mut driver, &lines);
    drop(stub);
    Ok(run)
}

/// Applies parsed lines in order; see [`run_script`] for the error policy.
pub fn execute(driver: &mut SessionDriver, lines: &[ScriptLine]) -> ScriptRun {
    for l in lines {
        match driver.apply(&l.action) {
            Ok(_) => {}
            Err(e) if e.is_rejection() => warn!("line {}: {e}", l.line),
            Err(e) => {
                let mut report = driver.report();
                report.error = Some(ErrorRecord {
                    line: Some(l.line),
                    ..ErrorRecord::of(&e)
                });
                return ScriptRun { report, exit_code: 1 };
            }
        }
    }
    ScriptRun {
        report: driver.report(),
        exit_code: 0,
    }
}
