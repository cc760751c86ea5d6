use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::geometry::RigidTransform;
use crate::motion::{camera_pose_of, BasePose};
use crate::sim::{add_depth_noise, render_clean, Frame, SceneDescriptor};

use super::SessionError;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

/// Milliseconds since construction.
pub struct MonotonicClock {
    start: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
}

/// Clock that only moves when told to; headless runs use it so that frame
/// timestamps are reproducible.
#[derive(Default)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self {
            now: AtomicU64::new(start_ms),
        }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

struct SourceState {
    pose: BasePose,
    pose_version: u64,
    clean: Arc<Frame>,
    latest: Arc<Frame>,
    next_index: u64,
}

/// The simulated sensor bolted to the simulated base. Holds the current
/// pose and the most recent frame; shared between the session and the
/// streaming loop.
pub struct FrameSource {
    scene: Arc<SceneDescriptor>,
    mount: RigidTransform,
    clock: Arc<dyn Clock>,
    state: Mutex<SourceState>,
}

impl FrameSource {
    pub fn new(
        scene: Arc<SceneDescriptor>,
        mount: RigidTransform,
        pose: BasePose,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, SessionError> {
        let now = clock.now_ms();
        let clean = Arc::new(render_at(&scene, &mount, &pose, 0, now)?);
        let latest = Arc::new(noisy(&scene, &clean, 0, now));
        Ok(Self {
            scene,
            mount,
            clock,
            state: Mutex::new(SourceState {
                pose,
                pose_version: 0,
                clean,
                latest,
                next_index: 1,
            }),
        })
    }

    pub fn scene(&self) -> &Arc<SceneDescriptor> {
        &self.scene
    }

    pub fn mount(&self) -> &RigidTransform {
        &self.mount
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    pub fn latest(&self) -> Arc<Frame> {
        self.state.lock().expect("frame lock").latest.clone()
    }

    pub fn pose(&self) -> BasePose {
        self.state.lock().expect("frame lock").pose
    }

    /// Bumped on every pose change.
    pub fn pose_version(&self) -> u64 {
        self.state.lock().expect("frame lock").pose_version
    }

    /// Takes a fresh frame at the current pose and time.
    pub fn capture(&self) -> Arc<Frame> {
        let mut st = self.state.lock().expect("frame lock");
        let index = st.next_index;
        st.next_index += 1;
        let frame = Arc::new(noisy(&self.scene, &st.clean, index, self.clock.now_ms()));
        st.latest = frame.clone();
        frame
    }

    /// Moves the base and captures a frame from the new viewpoint.
    pub fn set_pose(&self, pose: BasePose) -> Result<Arc<Frame>, SessionError> {
        let mut st = self.state.lock().expect("frame lock");
        let index = st.next_index;
        let now = self.clock.now_ms();
        let clean = Arc::new(render_at(&self.scene, &self.mount, &pose, index, now)?);
        let frame = Arc::new(noisy(&self.scene, &clean, index, now));
        st.pose = pose;
        st.pose_version += 1;
        st.clean = clean;
        st.latest = frame.clone();
        st.next_index += 1;
        Ok(frame)
    }
}

fn render_at(
    scene: &SceneDescriptor,
    mount: &RigidTransform,
    pose: &BasePose,
    index: u64,
    now: u64,
) -> Result<Frame, SessionError> {
    let world_to_camera = camera_pose_of(pose, mount)?;
    Ok(render_clean(scene, &world_to_camera, index, now)?)
}

fn noisy(scene: &SceneDescriptor, clean: &Frame, index: u64, now: u64) -> Frame {
    let mut frame = clean.clone();
    frame.index = index;
    frame.timestamp_ms = now;
    add_depth_noise(&mut frame, scene.depth_noise_sigma_at_1m, scene.seed);
    frame
}
