//! `stride` — command-line surface for the walking planner stack.
//!
//! Subcommands: `gen-data` (synthesize a depth dataset), `train`, `eval`,
//! `rollout`, `render`, and `plot`. Exit codes: 0 on success, 2 on usage
//! errors (malformed flags), 1 on runtime errors (missing files, solver
//! failures, invalid data).

mod data;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use stride_core::autodiff::{load_checkpoint, save_checkpoint};
use stride_core::scene::{
    load_scene, render_depth, write_pgm16, CameraModel, PlanarPose, SceneKind,
};
use stride_core::sim::{
    metrics_eval, metrics_from_log, rollout, save_log, PlannerStack, SimConfig,
};
use stride_core::train::{TrainConfig, Trainer};

#[derive(Parser)]
#[command(
    name = "stride",
    version,
    about = "Self-supervised walking planner: data synthesis, training, evaluation, simulation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a depth-image dataset into a directory tree.
    GenData {
        /// Output directory; one subdirectory per scene kind and variant.
        #[arg(long)]
        out: PathBuf,
        /// Scene kinds to generate (comma separated).
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<SceneKind>>,
        /// Scene variants to generate (comma separated).
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<u64>>,
        /// Samples per scene.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// RNG seed for pose jitter.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplicative depth-noise sigma (0 disables).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Train the planner networks on a dataset directory.
    Train {
        /// Training configuration, TOML or JSON. Defaults apply if omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (as produced by gen-data).
        #[arg(long)]
        data: PathBuf,
        /// Path of the final checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Optional run directory for per-epoch checkpoints and history.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset and write metrics JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where the metrics JSON is written.
        #[arg(long)]
        json: PathBuf,
    },
    /// Run one closed-loop rollout in a scene and write a JSON-lines log.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        /// Scene JSON file.
        #[arg(long)]
        scene: PathBuf,
        /// Goal position "X,Y" (meters, world frame).
        #[arg(long, value_parser = parse_xy)]
        goal: std::vec::Vec<f64>,
        /// Log output path (JSON lines).
        #[arg(long)]
        log: PathBuf,
        /// Start pose "X,Y,THETA".
        #[arg(long, default_value = "0,0,0", value_parser = parse_pose)]
        start: PlanarPose,
        /// Simulated-time budget, seconds.
        #[arg(long, default_value_t = 30.0)]
        max_time: f64,
        /// Goal acceptance radius, meters.
        #[arg(long, default_value_t = 0.25)]
        goal_radius: f64,
    },
    /// Render the depth view from a pose in a scene to a 16-bit PGM.
    Render {
        /// Scene JSON file.
        #[arg(long)]
        scene: PathBuf,
        /// Camera pose "X,Y,THETA".
        #[arg(long, value_parser = parse_pose)]
        pose: PlanarPose,
        /// Output PGM path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a rollout log as a static SVG overlay.
    Plot {
        /// Rollout log (JSON lines).
        #[arg(long)]
        log: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        svg: PathBuf,
    },
}

fn parse_xy(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected X,Y but got '{s}'"));
    }
    let mut out = Vec::with_capacity(2);
    for p in parts {
        out.push(
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad coordinate '{p}': {e}"))?,
        );
    }
    Ok(out)
}

fn parse_pose(s: &str) -> Result<PlanarPose, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,THETA but got '{s}'"));
    }
    let mut v = [0.0f64; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad coordinate '{p}': {e}"))?;
    }
    Ok(PlanarPose {
        x: v[0],
        y: v[1],
        theta: v[2],
    })
}

/// Parse a training config from TOML (default) or JSON (.json extension).
fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let body = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&body).with_context(|| format!("parsing {}", path.display()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_stack(ckpt: &Path) -> Result<PlannerStack> {
    let (tensors, meta) = load_checkpoint(ckpt)?;
    let cfg_value = meta
        .get("config")
        .cloned()
        .with_context(|| format!("checkpoint {} has no `config` metadata", ckpt.display()))?;
    let cfg: TrainConfig = serde_json::from_value(cfg_value)
        .with_context(|| format!("checkpoint {} has malformed `config` metadata", ckpt.display()))?;
    Ok(PlannerStack::new(cfg, tensors)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData {
            out,
            kinds,
            variants,
            samples,
            seed,
            noise,
        } => {
            let kinds = kinds.unwrap_or_else(|| SceneKind::ALL.to_vec());
            let variants = variants.unwrap_or_else(|| vec![0]);
            let written = data::generate_dataset(&out, &kinds, &variants, samples, seed, noise)?;
            println!(
                "wrote {written} samples across {} scene(s) under {}",
                kinds.len() * variants.len(),
                out.display()
            );
        }
        Cmd::Train {
            config,
            data: data_dir,
            out,
            run_dir,
        } => {
            let cfg = match config {
                Some(path) => load_train_config(&path)?,
                None => TrainConfig::default(),
            };
            let dataset = data::load_dataset(&data_dir)?;
            let samples: Vec<_> = dataset.into_iter().map(|(_, s)| s).collect();
            let trainer = Trainer::new(cfg.clone())?;
            let result = trainer.train(&samples, run_dir.as_deref())?;
            let meta = serde_json::json!({
                "config": cfg,
                "epochs": cfg.epochs,
                "iterations": result.history.len(),
                "skipped": result.skipped,
            });
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            save_checkpoint(&out, &result.weights, meta)?;
            let first = result.history.first().map_or(f64::NAN, |r| r.loss.u_total);
            let last = result.history.last().map_or(f64::NAN, |r| r.loss.u_total);
            println!(
                "trained {} iterations ({} skipped); u_total {first:.6} -> {last:.6}; checkpoint {}",
                result.history.len(),
                result.skipped,
                out.display()
            );
        }
        Cmd::Eval { ckpt, data: data_dir, json } => {
            let stack = load_stack(&ckpt)?;
            let dataset = data::load_dataset(&data_dir)?;
            let report = metrics_eval(&dataset, &stack)?;
            let body = serde_json::to_string_pretty(&report)?;
            if let Some(parent) = json.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&json, &body)
                .with_context(|| format!("writing {}", json.display()))?;
            println!("{body}");
        }
        Cmd::Rollout {
            ckpt,
            scene,
            goal,
            log,
            start,
            max_time,
            goal_radius,
        } => {
            let stack = load_stack(&ckpt)?;
            let scene = load_scene(&scene)?;
            let mut cfg = SimConfig::new(scene, start, vec![[goal[0], goal[1]]]);
            cfg.max_sim_time = max_time;
            cfg.goal_radius = goal_radius;
            let result = rollout(&cfg, &stack)?;
            save_log(&log, &result)?;
            match metrics_from_log(&result) {
                Ok(m) => println!(
                    "outcome: {:?} at t={:.2}s; feasibility {:.4}, collision_risk {:.4}, evenness {:.6}",
                    result.outcome, result.outcome_t, m.feasibility, m.collision_risk, m.evenness
                ),
                Err(_) => println!(
                    "outcome: {:?} at t={:.2}s (no planning frames logged)",
                    result.outcome, result.outcome_t
                ),
            }
        }
        Cmd::Render { scene, pose, out } => {
            let scene = load_scene(&scene)?;
            let camera = CameraModel::desk_default();
            let depth = render_depth(&scene, &pose, &camera)?;
            // Same quantization as the dataset format: millil meters,
            // clamped to the camera range.
            let scale = stride_core::scene::DEFAULT_DEPTH_SCALE;
            let max_units = (camera.max_range / scale).round() as i64;
            let values: Vec<u16> = depth
                .values()
                .iter()
                .map(|d| ((d / scale).round() as i64).clamp(1, max_units) as u16)
                .collect();
            write_pgm16(&out, camera.width, camera.height, &values)?;
            println!("wrote {}x{} depth render to {}", camera.width, camera.height, out.display());
        }
        Cmd::Plot { log, svg } => {
            let rollout_log = stride_core::sim::load_log(&log)?;
            let body = plot::render_svg(&rollout_log);
            std::fs::write(&svg, &body)
                .with_context(|| format!("writing {}", svg.display()))?;
            println!("wrote plot to {}", svg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
