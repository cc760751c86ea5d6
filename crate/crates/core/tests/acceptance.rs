//! Acceptance suite. Runs every criterion against simulator ground truth
//! and prints one PASS/FAIL line per criterion; exits nonzero on any FAIL.

// `ensure!` negates whole conditions so a NaN measurement fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod support;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use doorpick::geometry::{transform_point, FrameTag, RotationDirection, Vector3};
use doorpick::protocol::{decode, encode, FrameDecoder, MessageBody, ProtocolError, SlaveStub};
use doorpick::service::autopilot::Autopilot;
use doorpick::service::{parse_script, run_script, serve, Action, Outcome, ServiceConfig};
use doorpick::session::{PickMode, PixelSelection, SessionConfig, SessionError, SessionState, HANDLE_STANDOFF};
use doorpick::sim::{deproject, pixel_hit, HingeSide, SceneDescriptor, SurfaceKind};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Runner config without a regression file; failures print in the summary line.
fn cases(n: u32) -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(n)
    }
}

fn pilot(scene: SceneDescriptor) -> Autopilot {
    Autopilot::loopback(scene, SessionConfig::default()).expect("session opens")
}

fn step<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn width_run(sigma: f64, seed: u64) -> Result<f64, String> {
    let mut scene = SceneDescriptor::reference(HingeSide::Left);
    scene.depth_noise_sigma_at_1m = sigma;
    scene.seed = seed;
    let mut p = pilot(scene);
    step(p.measure_width())?;
    p.driver().report().door_width.ok_or_else(|| "no width".into())
}

fn width_extraction() -> Verdict {
    let start = Instant::now();
    let clean = width_run(0.0, 7)?;
    ensure!((clean - 0.90).abs() <= 0.01, "noise-free width {clean:.4} m");
    let mut errors = (0..20)
        .map(|seed| width_run(0.002, seed).map(|w| (w - 0.90).abs()))
        .collect::<Result<Vec<_>, _>>()?;
    errors.sort_by(f64::total_cmp);
    let median = (errors[9] + errors[10]) / 2.0;
    ensure!(median <= 0.02, "median |error| {median:.4} m at σ = 0.002");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "σ=0 width {clean:.4} m; σ=0.002 median |err| {median:.4} m over 20 seeds; {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn handle_extraction() -> Verdict {
    let mut p = pilot(SceneDescriptor::reference(HingeSide::Left));
    step(p.measure_width())?;
    step(p.approach_handle(HANDLE_STANDOFF))?;
    let residual = match p.driver().report().steps.last().and_then(|s| s.outcome.clone()) {
        Some(Outcome::Standoff(c)) => c.residual,
        other => return Err(format!("confirm gave {other:?}")),
    };
    ensure!(residual.abs() <= 0.01, "standoff residual {residual:.4} m");
    step(p.measure_handle())?;
    let len = p.driver().report().handle_length.ok_or("no handle length")?;
    ensure!((len - 0.11).abs() <= 0.005, "handle length {len:.4} m");
    Ok(format!(
        "length {len:.4} m at {:.3} m standoff",
        HANDLE_STANDOFF + residual
    ))
}

fn rotation_directions() -> Verdict {
    let mut seen = Vec::new();
    for (side, expected) in [
        (HingeSide::Left, RotationDirection::CounterClockwise),
        (HingeSide::Right, RotationDirection::Clockwise),
    ] {
        let mut p = pilot(SceneDescriptor::reference(side));
        step(p.measure_width())?;
        let got = p.driver().report().door_rotation.ok_or("no direction")?;
        ensure!(got == expected, "{side:?} hinge gave {got}");
        // Same edges, opposite order.
        step(p.driver_mut().apply(&Action::Reset {
            state: SessionState::AwaitWidthPoints,
        }))?;
        let (hinge, moving) = p.truth().width_points(doorpick::service::autopilot::WIDTH_PICK_HEIGHT);
        step(p.click(&moving, SurfaceKind::Door, PickMode::WidthP1))?;
        step(p.click(&hinge, SurfaceKind::Door, PickMode::WidthP2))?;
        let swapped = p.driver().report().door_rotation.ok_or("no direction")?;
        ensure!(
            swapped == expected.flipped(),
            "swapped picks on {side:?} gave {swapped}"
        );
        seen.push(format!("{side:?}={got}"));
    }
    let mut runner = TestRunner::new(cases(10_000));
    step(
        runner.run(&(base_point(), base_point(), proptest::bool::ANY), |(a, b, tie)| {
            let b = if tie {
                doorpick::geometry::Point3::base(b.x(), a.y(), b.z())
            } else {
                b
            };
            swap_flips(a, b)
        }),
    )?;
    Ok(format!(
        "{}; swap flips over 10^4 random pairs, ties read CW",
        seen.join(", ")
    ))
}

fn one_ulp(a: f64, b: f64) -> bool {
    let m = b.abs();
    let ulp = f64::from_bits(m.to_bits() + 1) - m;
    (a - b).abs() <= ulp
}

fn alignment_loop() -> Verdict {
    let mut worst_dev: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut worst_truth: f64 = 0.0;
    for alpha in [5.0f64, -5.0, 10.0, -10.0, 20.0, -20.0] {
        let mut scene = SceneDescriptor::reference(HingeSide::Left);
        scene.door.yaw = alpha.to_radians();
        let mut p = pilot(scene);
        step(p.measure_width()).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        step(p.approach_handle(HANDLE_STANDOFF)).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        step(p.measure_handle()).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        step(p.measure_normal()).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        let dev = p.driver().report().deviation_deg.ok_or("no deviation")?;
        ensure!((dev + alpha).abs() <= 0.5, "yaw {alpha}°: deviation {dev:.3}°");
        worst_dev = worst_dev.max((dev + alpha).abs());

        step(p.orient()).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        let r = p.driver().report();
        let wheels = r.wheel_command.ok_or("no wheel command")?;
        let g = p.driver().session().config().drive;
        let theta = r.deviation_rad.unwrap();
        ensure!(
            one_ulp(wheels.right_rotation * g.wheel_radius(), theta * g.half_track()),
            "θw·Rw = {:e}, θ·RB = {:e}",
            wheels.right_rotation * g.wheel_radius(),
            theta * g.half_track()
        );
        ensure!(wheels.left_rotation == -wheels.right_rotation, "wheels not opposed");

        // Ground truth: base heading against the door's inward normal.
        let truth = (p.driver().session().pose().heading() + alpha.to_radians())
            .to_degrees()
            .abs();
        worst_truth = worst_truth.max(truth);
        ensure!(truth <= 0.5, "yaw {alpha}°: true residual {truth:.3}°");

        // Measured: re-center on the lever and re-pick the normal.
        step(p.face_lever()).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        step(p.driver_mut().apply(&Action::Reset {
            state: SessionState::AwaitNormalPoints,
        }))
        .map_err(|e| format!("yaw {alpha}°: {e}"))?;
        step(p.measure_normal()).map_err(|e| format!("yaw {alpha}°: {e}"))?;
        let residual = p.driver().report().deviation_deg.ok_or("no deviation")?.abs();
        worst_residual = worst_residual.max(residual);
        ensure!(residual <= 0.5, "yaw {alpha}°: residual after orient {residual:.3}°");
    }
    let mut worst_noisy: f64 = 0.0;
    for alpha in [5.0f64, -5.0, 10.0, -10.0, 20.0, -20.0] {
        let mut residuals = (0..20)
            .map(|seed| noisy_residual(alpha, seed).map_err(|e| format!("yaw {alpha}° seed {seed}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        residuals.sort_by(f64::total_cmp);
        let median = (residuals[9] + residuals[10]) / 2.0;
        worst_noisy = worst_noisy.max(median);
        ensure!(median <= 2.0, "yaw {alpha}°: median residual {median:.3}° at σ = 0.002");
    }
    Ok(format!(
        "max |dev + α| {worst_dev:.4}°; max residual {worst_residual:.4}° measured, {worst_truth:.4}° true; \
         wheel arcs within 1 ulp; σ=0.002 worst median residual {worst_noisy:.3}°"
    ))
}

/// Full loop on a noisy scene; returns the re-measured |deviation| after orient.
fn noisy_residual(alpha: f64, seed: u64) -> Result<f64, String> {
    let mut scene = SceneDescriptor::reference(HingeSide::Left);
    scene.door.yaw = alpha.to_radians();
    scene.depth_noise_sigma_at_1m = 0.002;
    scene.seed = seed;
    let mut p = pilot(scene);
    step(p.measure_width())?;
    step(p.approach_handle(HANDLE_STANDOFF))?;
    step(p.measure_handle())?;
    step(p.measure_normal())?;
    step(p.orient())?;
    step(p.face_lever())?;
    step(p.driver_mut().apply(&Action::Reset {
        state: SessionState::AwaitNormalPoints,
    }))?;
    step(p.measure_normal())?;
    Ok(p.driver().report().deviation_deg.ok_or("no deviation")?.abs())
}

fn plane_normal_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for alpha in [0.0f64, 10.0, -20.0] {
        let mut scene = SceneDescriptor::reference(HingeSide::Left);
        scene.door.yaw = alpha.to_radians();
        let mut p = pilot(scene.clone());
        step(p.measure_width())?;
        step(p.approach_handle(HANDLE_STANDOFF))?;
        step(p.measure_handle())?;
        step(p.measure_normal())?;
        let three_point = p.driver().report().normal.ok_or("no normal")?;

        let session = p.driver().session();
        let frame = session.frame();
        let mount = session.config().mount;
        let mut candidates = Vec::new();
        for v in 0..frame.height() {
            for u in 0..frame.width() {
                let on_door =
                    pixel_hit(&scene, &frame.camera_pose, u, v).is_some_and(|h| h.surface == SurfaceKind::Door);
                if on_door && frame.depth_at(u, v).unwrap() > 0.0 {
                    candidates.push((u, v));
                }
            }
        }
        ensure!(candidates.len() >= 500, "only {} door pixels", candidates.len());
        let points: Vec<Vector3> = candidates
            .choose_multiple(&mut rng, 500)
            .map(|&(u, v)| {
                let c = deproject(&frame, u, v).unwrap().unwrap();
                transform_point(&mount, &c).unwrap().coords()
            })
            .collect();
        let fit = lsq_plane_normal(&points);
        let angle = line_angle_deg(three_point, fit);
        worst = worst.max(angle);
        ensure!(angle <= 0.2, "yaw {alpha}°: three-point vs least-squares {angle:.4}°");
    }
    Ok(format!(
        "max angle to 500-pixel SVD plane fit {worst:.5}° over 3 door yaws"
    ))
}

fn geometry_invariants() -> Verdict {
    let start = Instant::now();
    let cases = cases(10_000);
    step(TestRunner::new(cases.clone()).run(&(rigid_transform(), vec3(), vec3()), |(t, a, b)| isometry(&t, a, b)))?;
    step(
        TestRunner::new(cases.clone()).run(&(base_point(), base_point(), base_point()), |(a, b, c)| {
            cross_orthogonal(a, b, c)
        }),
    )?;
    let k_range = proptest::prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3];
    step(TestRunner::new(cases.clone()).run(&(vec3(), k_range), |(n, k)| deviation_scale(n, k)))?;
    let intr = doorpick::sim::CameraIntrinsics::default();
    step(
        TestRunner::new(cases).run(&(0.0f64..640.0, 0.0f64..480.0, 0.5f64..3.5), |(u, v, d)| {
            deproject_round_trip(&intr, u, v, d)
        }),
    )?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("4 properties × 10^4 cases in {:.2} s", elapsed.as_secs_f64()))
}

fn protocol() -> Verdict {
    let mut runner = TestRunner::new(cases(10_000));
    step(runner.run(&message(), |m| {
        let back = decode(&encode(&m).unwrap()).unwrap();
        proptest::prop_assert_eq!(back, m);
        Ok(())
    }))?;

    let mut runner = TestRunner::new_with_rng(
        cases(1),
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let strategy = message();
    for _ in 0..1000 {
        let m = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let bytes = encode(&m).map_err(|e| e.to_string())?;
        let mut decoder = FrameDecoder::new();
        for i in 0..bytes.len() {
            ensure!(
                matches!(decode(&bytes[..i]), Err(ProtocolError::Incomplete { .. })),
                "a {i}-byte prefix decoded"
            );
            decoder.push(&bytes[i..i + 1]);
            let got = step(decoder.next_message())?;
            ensure!(
                got.is_some() == (i + 1 == bytes.len()),
                "decoder yielded early at byte {i}"
            );
        }
    }

    let stub = step(SlaveStub::bind("127.0.0.1:0"))?;
    let mut config = ServiceConfig::new(repo_file("scenes/reference.json"));
    config.slave_address = Some(stub.addr().to_string());
    let run = step(run_script(&config, &repo_file("scenes/reference.script.jsonl")))?;
    ensure!(run.exit_code == 0, "script failed: {:?}", run.report.error);
    let sent = run.report.sent.ok_or("nothing sent")?;
    let param_sets: Vec<_> = stub
        .log()
        .into_iter()
        .filter_map(|m| match m.body {
            MessageBody::ParamSet(p) => Some(p),
            _ => None,
        })
        .collect();
    ensure!(param_sets.len() == 1, "{} ParamSets in the slave log", param_sets.len());
    let got = param_sets[0];
    let bits = |p: &doorpick::protocol::ParameterSet| {
        [
            p.door_width.to_bits(),
            p.handle_length.to_bits(),
            p.contact_point.x().to_bits(),
            p.contact_point.y().to_bits(),
            p.contact_point.z().to_bits(),
            p.deviation_at_capture.to_bits(),
        ]
    };
    ensure!(bits(&got) == bits(&sent), "doubles differ: {got:?} vs {sent:?}");
    ensure!(
        got.door_rotation == sent.door_rotation
            && got.handle_rotation == sent.handle_rotation
            && got.contact_point.frame() == FrameTag::Base,
        "enum fields differ"
    );
    Ok("10^4 round trips; 1000 messages fed byte by byte; one bit-exact ParamSet in the stub log".into())
}

fn specular_holes() -> Verdict {
    let scene = step(SceneDescriptor::load(&repo_file("scenes/specular_handle.json")))?;
    let mut p = pilot(scene.clone());
    let frame = p.driver().session().frame();
    let mut holes = Vec::new();
    let mut surfaces = std::collections::BTreeSet::new();
    for v in 0..frame.height() {
        for u in 0..frame.width() {
            if let Some(h) = pixel_hit(&scene, &frame.camera_pose, u, v) {
                if h.specular {
                    holes.push((u, v));
                    surfaces.insert(format!("{:?}", h.surface));
                }
            }
        }
    }
    ensure!(surfaces.len() == 2, "hole patches visible on {surfaces:?} only");
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut fabricated = 0;
    for _ in 0..1000 {
        let &(u, v) = holes.choose(&mut rng).unwrap();
        let mode = *[PickMode::WidthP1, PickMode::WidthP2].choose(&mut rng).unwrap();
        match p.driver_mut().apply(&Action::select(PixelSelection::new(u, v, mode))) {
            Err(SessionError::HolePick { .. }) => {}
            Err(e) => return Err(format!("pick at ({u}, {v}) gave {e}")),
            Ok(_) => fabricated += 1,
        }
    }
    let params = p.driver().session().parameters();
    ensure!(
        fabricated == 0 && params.width_picks.iter().all(Option::is_none),
        "{fabricated} fabricated points"
    );
    Ok(format!(
        "1000 picks over {} hole pixels on door and lever: all HolePick, 0 fabricated",
        holes.len()
    ))
}

fn script_live_equivalence() -> Verdict {
    let script = repo_file("scenes/reference.script.jsonl");
    let actions: Vec<Action> = step(parse_script(&step(std::fs::read_to_string(&script))?))?
        .into_iter()
        .map(|l| l.action)
        .collect();

    let scripted_stub = step(SlaveStub::bind("127.0.0.1:0"))?;
    let mut config = ServiceConfig::new(repo_file("scenes/reference.json"));
    config.noise_sigma = Some(0.0);
    config.slave_address = Some(scripted_stub.addr().to_string());
    let run = step(run_script(&config, &script))?;
    ensure!(run.exit_code == 0, "script failed: {:?}", run.report.error);
    let scripted = serde_json::to_value(&run.report).map_err(|e| e.to_string())?;

    let live_stub = step(SlaveStub::bind("127.0.0.1:0"))?;
    config.slave_address = Some(live_stub.addr().to_string());
    config.listen_address = "127.0.0.1:0".into();
    let handle = step(serve(&config))?;
    let mut console = Console::connect(handle.addr());
    console.expect("hello", Duration::from_secs(2));
    for a in &actions {
        let r = console.act(a);
        ensure!(r["ok"] == true, "live {} failed: {}", a.name(), r["error"]);
    }
    let live = console.report()["report"].clone();
    ensure!(live == scripted, "reports differ:\nlive {live}\nscript {scripted}");
    ensure!(live_stub.log() == scripted_stub.log(), "slave logs differ");
    let w = run.report.door_width.unwrap_or(f64::NAN);
    ensure!((0.89..=0.91).contains(&w), "door width {w}");
    Ok(format!(
        "{} actions; identical reports and slave logs; door width {w:.4} m",
        actions.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("width extraction", width_extraction),
        ("handle extraction", handle_extraction),
        ("rotation directions", rotation_directions),
        ("normal/alignment loop", alignment_loop),
        ("plane-normal oracle", plane_normal_oracle),
        ("geometry invariant suite", geometry_invariants),
        ("protocol", protocol),
        ("specular holes", specular_holes),
        ("script/live equivalence", script_live_equivalence),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name:<26} {secs:>6.2}s  {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name:<26} {secs:>6.2}s  {why}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
