//! Shared strategies, property bodies and oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use doorpick::geometry::{
    deviation_angle, dist_ori_compute, plane_normal, FrameTag, Mat3, Point3, RigidTransform, RotationDirection, Vector3,
};
use doorpick::motion::WheelCommand;
use doorpick::protocol::{DriveCommand, ErrorReport, Hello, Message, MessageBody, OrientCommand, ParameterSet};
use doorpick::sim::{project, CameraIntrinsics};
use nalgebra::{Matrix3xX, Vector3 as NVector3};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn coord() -> impl Strategy<Value = f64> {
    -10.0f64..10.0
}

pub fn vec3() -> impl Strategy<Value = Vector3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

pub fn base_point() -> impl Strategy<Value = Point3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Point3::base(x, y, z))
}

/// Rotation about a unit axis (Rodrigues).
pub fn axis_angle(axis: Vector3, angle: f64) -> Mat3 {
    let k = axis.normalized().expect("nonzero axis");
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    Mat3([
        [c + k.x * k.x * t, k.x * k.y * t - k.z * s, k.x * k.z * t + k.y * s],
        [k.y * k.x * t + k.z * s, c + k.y * k.y * t, k.y * k.z * t - k.x * s],
        [k.z * k.x * t - k.y * s, k.z * k.y * t + k.x * s, c + k.z * k.z * t],
    ])
}

pub fn rigid_transform() -> impl Strategy<Value = RigidTransform> {
    (vec3(), -PI..PI, vec3())
        .prop_filter("axis must be nonzero", |(axis, _, _)| axis.norm() > 1e-3)
        .prop_map(|(axis, angle, t)| {
            RigidTransform::new(axis_angle(axis, angle), t, FrameTag::Camera, FrameTag::Base).expect("proper rotation")
        })
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Distances survive a rigid transform and the inverse undoes it.
pub fn isometry(t: &RigidTransform, a: Vector3, b: Vector3) -> Result<(), TestCaseError> {
    let pa = Point3::camera(a.x, a.y, a.z);
    let pb = Point3::camera(b.x, b.y, b.z);
    let qa = t.apply(&pa).unwrap();
    let qb = t.apply(&pb).unwrap();
    let d0 = pa.distance(&pb).unwrap();
    let d1 = qa.distance(&qb).unwrap();
    check((d0 - d1).abs() <= 1e-9 * (1.0 + d0), || {
        format!("distance {d0} became {d1}")
    })?;
    let back = t.inverse().apply(&qa).unwrap();
    check(back.frame() == FrameTag::Camera, || {
        "inverse lands in the wrong frame".into()
    })?;
    check((back.coords() - a).norm() <= 1e-9 * (1.0 + a.norm()), || {
        format!("{back:?} != {a:?}")
    })
}

/// The three-point normal is orthogonal to both spanning edges.
pub fn cross_orthogonal(a: Point3, b: Point3, c: Point3) -> Result<(), TestCaseError> {
    let Ok(n) = plane_normal(&a, &b, &c) else {
        return Ok(());
    };
    let ab = a.vector_to(&b).unwrap();
    let ac = a.vector_to(&c).unwrap();
    // |n| ≤ |AB||AC|, and each dot product rounds within a few ulps of that.
    let tol = 8.0 * f64::EPSILON * ab.norm() * ac.norm() * (ab.norm() + ac.norm());
    check(n.dot(&ab).abs() <= tol, || format!("n·AB = {} > {tol}", n.dot(&ab)))?;
    check(n.dot(&ac).abs() <= tol, || format!("n·AC = {} > {tol}", n.dot(&ac)))
}

/// Scaling the normal by any nonzero factor, including a negative one,
/// leaves the deviation unchanged.
pub fn deviation_scale(n: Vector3, k: f64) -> Result<(), TestCaseError> {
    let (Ok(a), Ok(b)) = (deviation_angle(&n), deviation_angle(&(n * k))) else {
        return Ok(());
    };
    let diff = (a.radians() - b.radians()).abs();
    let wrapped = diff.min(2.0 * PI - diff);
    check(wrapped <= 1e-12, || {
        format!("{} vs {} for k = {k}", a.radians(), b.radians())
    })
}

/// Pixel → camera point → pixel is the identity inside the image.
pub fn deproject_round_trip(k: &CameraIntrinsics, u: f64, v: f64, depth: f64) -> Result<(), TestCaseError> {
    let p = k.deproject_depth(u, v, depth);
    let (u2, v2) = project(k, &p).unwrap();
    check((u - u2).abs() <= 1e-9 && (v - v2).abs() <= 1e-9, || {
        format!("({u}, {v}) -> ({u2}, {v2})")
    })?;
    check((p.z() - depth).abs() <= 1e-12, || format!("depth {depth} -> {}", p.z()))
}

/// Swapping the picks flips the direction unless the lateral coordinates tie.
pub fn swap_flips(a: Point3, b: Point3) -> Result<(), TestCaseError> {
    let ab = dist_ori_compute(&a, &b).unwrap();
    let ba = dist_ori_compute(&b, &a).unwrap();
    check(ab.distance == ba.distance, || "distance is not symmetric".into())?;
    if a.y() == b.y() {
        check(
            ab.rotation_direction == RotationDirection::Clockwise
                && ba.rotation_direction == RotationDirection::Clockwise,
            || "a tie must read CW both ways".into(),
        )
    } else {
        check(ab.rotation_direction == ba.rotation_direction.flipped(), || {
            "swap did not flip".into()
        })
    }
}

/// Unit normal of the total-least-squares plane through `points`: the left
/// singular vector of the centered cloud with the smallest singular value.
pub fn lsq_plane_normal(points: &[Vector3]) -> Vector3 {
    let n = points.len() as f64;
    let mean = points
        .iter()
        .fold(NVector3::zeros(), |acc, p| acc + NVector3::new(p.x, p.y, p.z))
        / n;
    let m = Matrix3xX::from_iterator(
        points.len(),
        points.iter().flat_map(|p| [p.x - mean.x, p.y - mean.y, p.z - mean.z]),
    );
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three singular values");
    let col = u.column(idx);
    Vector3::new(col[0], col[1], col[2])
}

/// Angle between two lines through the origin, degrees.
pub fn line_angle_deg(a: Vector3, b: Vector3) -> f64 {
    let c = (a.dot(&b).abs() / (a.norm() * b.norm())).clamp(0.0, 1.0);
    c.acos().to_degrees()
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -10.0f64..10.0,]
}

fn direction() -> impl Strategy<Value = RotationDirection> {
    prop_oneof![
        Just(RotationDirection::Clockwise),
        Just(RotationDirection::CounterClockwise)
    ]
}

pub fn parameter_set() -> impl Strategy<Value = ParameterSet> {
    (
        1e-6f64..5.0,
        0.01f64..0.99,
        direction(),
        direction(),
        (finite(), finite(), finite()),
        finite(),
    )
        .prop_map(|(width, frac, dr, hr, (x, y, z), dev)| ParameterSet {
            door_width: width,
            door_rotation: dr,
            handle_length: width * frac,
            handle_rotation: hr,
            contact_point: Point3::base(x, y, z),
            deviation_at_capture: dev,
        })
        .prop_filter("strict order after rounding", |p| {
            p.door_width > p.handle_length && p.handle_length > 0.0
        })
}

pub fn message_body() -> impl Strategy<Value = MessageBody> {
    prop_oneof![
        ("\\PC{0,40}", any::<u32>())
            .prop_map(|(peer, protocol_version)| MessageBody::Hello(Hello { peer, protocol_version })),
        parameter_set().prop_map(MessageBody::ParamSet),
        (finite(), finite(), finite()).prop_map(|(theta_diff, l, r)| MessageBody::Orient(OrientCommand {
            theta_diff,
            wheels: WheelCommand {
                left_rotation: l,
                right_rotation: r
            },
        })),
        finite().prop_map(|distance| MessageBody::Drive(DriveCommand { distance })),
        Just(MessageBody::Ack),
        ("[a-z_]{1,16}", "\\PC{0,80}").prop_map(|(code, text)| MessageBody::Error(ErrorReport { code, text })),
    ]
}

pub fn message() -> impl Strategy<Value = Message> {
    (1u64..u64::MAX, message_body()).prop_map(|(sequence, body)| Message::new(sequence, body))
}

/// Minimal operator console over the WebSocket API.
pub struct Console {
    ws: tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>,
    next_id: u64,
}

impl Console {
    pub fn connect(addr: std::net::SocketAddr) -> Self {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}")).expect("websocket handshake");
        if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(std::time::Duration::from_millis(20))).unwrap();
        }
        Self { ws, next_id: 0 }
    }

    /// Next JSON message, or `None` once `timeout` passes.
    pub fn recv(&mut self, timeout: std::time::Duration) -> Option<serde_json::Value> {
        let deadline = std::time::Instant::now() + timeout;
        while std::time::Instant::now() < deadline {
            match self.ws.read() {
                Ok(tungstenite::Message::Text(t)) => return Some(serde_json::from_str(t.as_str()).unwrap()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(e) => panic!("console read failed: {e}"),
            }
        }
        None
    }

    /// First message of `kind` within `timeout`, skipping others.
    pub fn expect(&mut self, kind: &str, timeout: std::time::Duration) -> serde_json::Value {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            let m = self
                .recv(left)
                .unwrap_or_else(|| panic!("no {kind} message within {timeout:?}"));
            if m["type"] == kind {
                return m;
            }
        }
    }

    pub fn send(&mut self, v: serde_json::Value) {
        self.ws.send(tungstenite::Message::text(v.to_string())).unwrap();
    }

    pub fn send_raw(&mut self, text: &str) {
        self.ws.send(tungstenite::Message::text(text.to_string())).unwrap();
    }

    /// Sends an action and waits for its result.
    pub fn act(&mut self, action: &doorpick::service::Action) -> serde_json::Value {
        self.next_id += 1;
        let id = self.next_id;
        self.send(serde_json::json!({ "type": "action", "id": id, "action": action }));
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            let m = self.recv(left).expect("action result");
            if m["type"] == "result" && m["id"] == id {
                return m;
            }
        }
    }

    pub fn report(&mut self) -> serde_json::Value {
        self.next_id += 1;
        let id = self.next_id;
        self.send(serde_json::json!({ "type": "report", "id": id }));
        let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            let m = self.recv(left).expect("report");
            if m["type"] == "report" && m["id"] == id {
                return m;
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}

/// Writes `scene` into `dir` and returns the path.
pub fn write_scene(dir: &std::path::Path, name: &str, scene: &doorpick::sim::SceneDescriptor) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, scene.to_json()).unwrap();
    path
}
