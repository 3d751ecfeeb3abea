use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_core::desktop::{detect_desktop, DetectParams};
use teleop_core::synth::{tabletop_cloud, TabletopSpec};
use teleop_core::Vec2;
use teleop_server::formats::{self, load_chain, load_scene, mesh_to_toml, read_cloud};
use teleop_server::replay::{read_log, replay};
use teleop_server::{serve, ClockMode, ServeOptions, WorldConfig};

#[derive(Parser)]
#[command(name = "teleop-server", version, about = "Scene server for task-centric robot teleoperation")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,
    #[command(flatten)]
    serve: ServeArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// Scene file (TOML).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Point cloud for the DesktopDetection service.
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long, default_value_t = 7447)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    bind: String,
    /// Append metrics records (NDJSON) to this file.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Time advances only through AdvanceClock and executed motions (default).
    #[arg(long, conflicts_with = "wall_clock")]
    sim_clock: bool,
    /// Time follows the wall clock.
    #[arg(long)]
    wall_clock: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Kinematic chain file; the built-in Gen3 model otherwise.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Directory served at /console.
    #[arg(long)]
    console_dir: Option<PathBuf>,
    /// Record the session for `replay`.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Detect the desktop in a point cloud and write it as a mesh file.
    Detect {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-run a recorded session and compare every reply.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Write a synthetic tabletop cloud (binary for `.cloud`, text otherwise).
    SynthCloud {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        height: f64,
        /// Table rectangle: min_x min_y max_x max_y.
        #[arg(long, num_args = 4, default_values_t = [-0.2, -0.6, 1.0, 0.6])]
        rect: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TELEOP_LOG_LEVEL", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        None => run_server(cli.serve),
        Some(Cmd::Detect { cloud, out, seed }) => detect(cloud, out, seed),
        Some(Cmd::Replay { log }) => run_replay(log),
        Some(Cmd::SynthCloud { out, points, height, rect, seed }) => synth(out, points, height, &rect, seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

type Res = Result<ExitCode, Box<dyn std::error::Error>>;

fn run_server(args: ServeArgs) -> Res {
    let scene_path = args.scene.ok_or("--scene is required")?;
    let loaded = load_scene(&scene_path, args.seed)?;
    let mut config = WorldConfig {
        seed: args.seed,
        clock: if args.wall_clock { ClockMode::Wall } else { ClockMode::Simulated },
        metrics: args.metrics,
        record: args.record,
        cloud_path: args.cloud.clone(),
        ..Default::default()
    };
    if let Some(c) = &args.chain {
        config.executor.chain = load_chain(c)?;
    }
    let cloud = match &args.cloud {
        Some(p) => Some(read_cloud(p)?),
        None => loaded.cloud,
    };
    let handle = serve(
        loaded.scene,
        cloud,
        config,
        (args.bind.as_str(), args.port),
        ServeOptions { console_dir: args.console_dir },
    )
    .map_err(|e| format!("cannot listen on port {}: {e}", args.port))?;
    info!("scene {} on {}; console at http://{}/console/", scene_path.display(), handle.local_addr(), handle.local_addr());
    handle.wait();
    Ok(ExitCode::SUCCESS)
}

fn detect(cloud: PathBuf, out: PathBuf, seed: u64) -> Res {
    let pc = read_cloud(&cloud)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = detect_desktop(&pc, &DetectParams::default(), &mut rng)
        .map_err(|source| formats::FormatError::Detect { path: cloud.clone(), source })?;
    std::fs::write(&out, mesh_to_toml(&mesh))?;
    let n = mesh.plane.normal;
    println!(
        "{} points -> plane n = ({:.4}, {:.4}, {:.4}), d = {:.4}; {} boundary vertices; area {:.4} m^2",
        pc.len(),
        n.x,
        n.y,
        n.z,
        mesh.plane.offset,
        mesh.boundary.len(),
        mesh.area()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_replay(log: PathBuf) -> Res {
    let entries = read_log(&log)?;
    let summary = replay(&entries, WorldConfig::default())?;
    println!(
        "{} requests, {} publications, {} ticks replayed; {} mismatches",
        summary.requests,
        summary.publications,
        summary.ticks,
        summary.mismatches.len()
    );
    for m in &summary.mismatches {
        println!("  {m}");
    }
    Ok(if summary.is_faithful() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn synth(out: PathBuf, points: usize, height: f64, rect: &[f64], seed: u64) -> Res {
    let spec = TabletopSpec {
        height,
        min: Vec2::new(rect[0], rect[1]),
        max: Vec2::new(rect[2], rect[3]),
        points,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cloud, _) = tabletop_cloud(&spec, &mut rng);
    if out.extension().is_some_and(|e| e == "cloud") {
        formats::write_cloud_binary(&out, &cloud)?;
    } else {
        formats::write_cloud_ascii(&out, &cloud)?;
    }
    println!("wrote {} points to {}", cloud.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
