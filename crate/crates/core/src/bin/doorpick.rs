use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use doorpick::geometry::{default_camera_mount, DriveGeometry};
use doorpick::motion::{camera_pose_of, BasePose};
use doorpick::protocol::{SlaveStub, DEFAULT_SLAVE_PORT};
use doorpick::service::{autopilot, run_script, serve, write_script, ServiceConfig, DEFAULT_FRAME_RATE_HZ};
use doorpick::session::SessionConfig;
use doorpick::sim::{render, save_color_png, save_depth_png, SceneDescriptor};

#[derive(Parser)]
#[command(
    name = "doorpick",
    version,
    about = "Door parameter extraction workbench on a simulated RGBD robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream frames to operator consoles and relay their actions.
    Serve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, env = "DOORPICK_LISTEN", default_value = "127.0.0.1:7400")]
        listen: String,
        /// Slave endpoint; a local stub is started when omitted.
        #[arg(long, env = "DOORPICK_SLAVE")]
        slave: Option<String>,
        #[arg(long, default_value_t = DEFAULT_FRAME_RATE_HZ)]
        fps: u32,
        /// Overrides the scene's depth noise at 1 m, meters.
        #[arg(long)]
        noise: Option<f64>,
        /// Wheel and base radius in meters, as `wheel,base`.
        #[arg(long)]
        drive: Option<DriveArg>,
    },
    /// Run a JSON Lines click script headlessly and write the report.
    RunScript {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "DOORPICK_SLAVE")]
        slave: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        drive: Option<DriveArg>,
    },
    /// Render a single frame to PNG files.
    RenderOnce {
        #[arg(long)]
        scene: PathBuf,
        /// Base pose as `x,y,heading` (meters, radians).
        #[arg(long, allow_hyphen_values = true)]
        pose: PoseArg,
        #[arg(long)]
        out_color: PathBuf,
        #[arg(long)]
        out_depth: PathBuf,
    },
    /// Write the ground-truth operator's click script for a scene.
    ReferenceScript {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the recording slave stub.
    SlaveStub {
        #[arg(long, env = "DOORPICK_SLAVE", default_value_t = format!("127.0.0.1:{DEFAULT_SLAVE_PORT}"))]
        listen: String,
    },
}

#[derive(Clone, Copy)]
struct PoseArg(BasePose);

impl FromStr for PoseArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = floats(s, 3)?;
        Ok(PoseArg(BasePose::new(v[0], v[1], v[2])))
    }
}

#[derive(Clone, Copy)]
struct DriveArg(DriveGeometry);

impl FromStr for DriveArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = floats(s, 2)?;
        DriveGeometry::new(v[0], v[1]).map(DriveArg).map_err(|e| e.to_string())
    }
}

fn floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(format!("expected {n} comma-separated finite numbers, got {s:?}"));
    }
    Ok(v)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve {
            scene,
            listen,
            slave,
            fps,
            noise,
            drive,
        } => {
            let config = ServiceConfig {
                scene_path: scene,
                listen_address: listen,
                slave_address: slave,
                frame_rate_hz: fps,
                noise_sigma: noise,
                drive_geometry: drive.map(|d| d.0),
            };
            let handle = serve(&config)?;
            info!("serving on ws://{}", handle.addr());
            handle.wait();
            Ok(ExitCode::SUCCESS)
        }
        Command::RunScript {
            scene,
            script,
            out,
            slave,
            noise,
            drive,
        } => {
            let mut config = ServiceConfig::new(scene);
            config.slave_address = slave;
            config.noise_sigma = noise;
            config.drive_geometry = drive.map(|d| d.0);
            let run = run_script(&config, &script)?;
            std::fs::write(&out, run.to_json()).with_context(|| format!("writing {}", out.display()))?;
            if let Some(e) = &run.report.error {
                eprintln!("line {}: {} ({})", e.line.unwrap_or(0), e.message, e.code);
            }
            Ok(ExitCode::from(run.exit_code as u8))
        }
        Command::RenderOnce {
            scene,
            pose,
            out_color,
            out_depth,
        } => {
            let scene = SceneDescriptor::load(&scene)?;
            let world_to_camera = camera_pose_of(&pose.0, &default_camera_mount())?;
            let frame = render(&scene, &world_to_camera, 0, 0)?;
            save_color_png(&frame, &out_color)?;
            save_depth_png(&frame, &out_depth)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ReferenceScript { scene, out } => {
            let scene = SceneDescriptor::load(&scene)?;
            let actions = autopilot::reference_actions(&scene, SessionConfig::default())?;
            std::fs::write(&out, write_script(&actions)).with_context(|| format!("writing {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SlaveStub { listen } => {
            let stub = SlaveStub::bind(&listen).with_context(|| format!("binding {listen}"))?;
            info!("slave stub listening on {}", stub.addr());
            loop {
                std::thread::park();
            }
        }
    }
}
