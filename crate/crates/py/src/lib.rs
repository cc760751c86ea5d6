use std::path::PathBuf;
use std::sync::Arc;

use doorpick::geometry::{self, default_camera_mount, DeviationAngle, DriveGeometry, Point3, Vector3};
use doorpick::motion::{camera_pose_of, BasePose};
use doorpick::protocol::{self, CommandLink, LoopbackLink, SlaveLink};
use doorpick::service::{self, Action, ServiceConfig, SessionDriver};
use doorpick::session::{ManualClock, Session, SessionConfig};
use doorpick::sim::{self, HingeSide, SceneDescriptor};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

type Xyz = (f64, f64, f64);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn base(p: Xyz) -> Point3 {
    Point3::base(p.0, p.1, p.2)
}

fn drive_geometry(wheel_radius: f64, half_track: f64) -> PyResult<DriveGeometry> {
    DriveGeometry::new(wheel_radius, half_track).map_err(value_err)
}

/// Distance between two base-frame points and the door rotation sense
/// ("CW" or "CCW") their lateral order implies.
#[pyfunction]
fn dist_ori_compute(p1: Xyz, p2: Xyz) -> PyResult<(f64, &'static str)> {
    let r = geometry::dist_ori_compute(&base(p1), &base(p2)).map_err(value_err)?;
    Ok((r.distance, r.rotation_direction.as_str()))
}

/// Unnormalized normal of the plane through three base-frame points.
#[pyfunction]
fn plane_normal(a: Xyz, b: Xyz, c: Xyz) -> PyResult<Xyz> {
    let n = geometry::plane_normal(&base(a), &base(b), &base(c)).map_err(value_err)?;
    Ok((n.x, n.y, n.z))
}

/// Signed base rotation in radians that squares the robot to the plane.
#[pyfunction]
fn deviation_angle(normal: Xyz) -> PyResult<f64> {
    let n = Vector3::new(normal.0, normal.1, normal.2);
    Ok(geometry::deviation_angle(&n).map_err(value_err)?.radians())
}

/// Right-wheel rotation in radians for an in-place turn of `theta`.
#[pyfunction]
#[pyo3(signature = (theta, wheel_radius=0.10, half_track=0.25))]
fn wheel_rotation(theta: f64, wheel_radius: f64, half_track: f64) -> PyResult<f64> {
    let g = drive_geometry(wheel_radius, half_track)?;
    Ok(geometry::wheel_rotation(DeviationAngle::new(theta), &g))
}

/// Camera-frame point to base frame through the default mount.
#[pyfunction]
fn camera_to_base(p: Xyz) -> PyResult<Xyz> {
    let q = geometry::transform_point(&default_camera_mount(), &Point3::camera(p.0, p.1, p.2)).map_err(value_err)?;
    Ok((q.x(), q.y(), q.z()))
}

/// Reference scene as JSON. `hinge` is "left" or "right".
#[pyfunction]
#[pyo3(signature = (hinge="left"))]
fn reference_scene(hinge: &str) -> PyResult<String> {
    let side = match hinge {
        "left" => HingeSide::Left,
        "right" => HingeSide::Right,
        other => {
            return Err(PyValueError::new_err(format!(
                "hinge must be left or right, not {other:?}"
            )))
        }
    };
    Ok(SceneDescriptor::reference(side).to_json())
}

/// Renders the scene seen from a base pose. Returns (width, height, depth)
/// where depth is row-major little-endian f64 meters, 0.0 for holes.
#[pyfunction]
#[pyo3(signature = (scene_json, x, y, heading, frame_index=0))]
fn render<'py>(
    py: Python<'py>,
    scene_json: &str,
    x: f64,
    y: f64,
    heading: f64,
    frame_index: u64,
) -> PyResult<(u32, u32, Bound<'py, PyBytes>)> {
    let scene = SceneDescriptor::from_json(scene_json).map_err(value_err)?;
    let pose = camera_pose_of(&BasePose::new(x, y, heading), &default_camera_mount()).map_err(value_err)?;
    let frame = sim::render(&scene, &pose, frame_index, 0).map_err(value_err)?;
    let bytes: Vec<u8> = frame.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
    Ok((frame.width(), frame.height(), PyBytes::new(py, &bytes)))
}

/// Length-prefixed wire bytes for a message given as its payload JSON.
/// The payload is validated first, so malformed messages raise.
#[pyfunction]
fn encode<'py>(py: Python<'py>, payload_json: &str) -> PyResult<Bound<'py, PyBytes>> {
    let m = protocol::decode_payload(payload_json.as_bytes()).map_err(value_err)?;
    let bytes = protocol::encode(&m).map_err(value_err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Payload JSON of the single message framed in `data`.
#[pyfunction]
fn decode(data: &[u8]) -> PyResult<String> {
    let m = protocol::decode(data).map_err(value_err)?;
    let payload = protocol::encode_payload(&m).map_err(value_err)?;
    String::from_utf8(payload).map_err(value_err)
}

/// Runs a click script against a scene. Returns (exit_code, report_json).
#[pyfunction]
#[pyo3(signature = (scene_path, script_path, slave=None, noise=None))]
fn run_script(
    scene_path: PathBuf,
    script_path: PathBuf,
    slave: Option<String>,
    noise: Option<f64>,
) -> PyResult<(i32, String)> {
    let mut config = ServiceConfig::new(scene_path);
    config.slave_address = slave;
    config.noise_sigma = noise;
    let run = service::run_script(&config, &script_path).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((run.exit_code, run.to_json()))
}

/// An in-process session. Actions and outcomes travel as JSON strings in
/// the click-script format.
#[pyclass(name = "Session", unsendable)]
struct PySession {
    driver: SessionDriver,
}

#[pymethods]
impl PySession {
    /// Opens a session on `scene_json`. Without `slave` the commands go to
    /// an in-process loopback that acknowledges everything.
    #[new]
    #[pyo3(signature = (scene_json, slave=None))]
    fn new(scene_json: &str, slave: Option<String>) -> PyResult<Self> {
        let scene = Arc::new(SceneDescriptor::from_json(scene_json).map_err(value_err)?);
        let link: Box<dyn CommandLink> = match slave {
            Some(addr) => Box::new(SlaveLink::new(addr)),
            None => Box::new(LoopbackLink::new()),
        };
        let driver = SessionDriver::new(link, |link| {
            Session::new(scene, SessionConfig::default(), Arc::new(ManualClock::new(0)), link)
        })
        .map_err(value_err)?;
        Ok(Self { driver })
    }

    #[getter]
    fn state(&self) -> String {
        format!("{:?}", self.driver.state())
    }

    /// Applies one action; returns the outcome JSON or raises ValueError
    /// carrying the error code and message.
    fn apply(&mut self, action_json: &str) -> PyResult<String> {
        let action: Action = serde_json::from_str(action_json).map_err(value_err)?;
        match self.driver.apply(&action) {
            Ok(outcome) => serde_json::to_string(&outcome).map_err(value_err),
            Err(e) => Err(PyValueError::new_err(format!("{}: {e}", e.code()))),
        }
    }

    fn report(&self) -> PyResult<String> {
        serde_json::to_string(&self.driver.report()).map_err(value_err)
    }
}

#[pymodule]
fn doorpick_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dist_ori_compute, m)?)?;
    m.add_function(wrap_pyfunction!(plane_normal, m)?)?;
    m.add_function(wrap_pyfunction!(deviation_angle, m)?)?;
    m.add_function(wrap_pyfunction!(wheel_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(camera_to_base, m)?)?;
    m.add_function(wrap_pyfunction!(reference_scene, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(run_script, m)?)?;
    m.add_class::<PySession>()?;
    Ok(())
}
