//! Offline tuning harness for the convergence acceptance runs: trains the
//! joint and path-only models on the four-scene suite, evaluates both on
//! held-out variants, and runs the closed-loop corridor check.

use std::time::Instant;

use stride_core::nets::init_weights;
use stride_core::scene::{synth_dataset, Bounds, PlanarPose, Sample, Scene2D, SceneKind, SynthConfig};
use stride_core::sim::{metrics_eval, metrics_from_log, rollout, PlannerStack, SimConfig};
use stride_core::train::{TrainConfig, TrainMode, Trainer};

fn suite(variant: u64, samples: usize, seed: u64, noise: f64) -> Vec<(String, Sample)> {
    let mut out = Vec::new();
    for kind in SceneKind::ALL {
        let cfg = SynthConfig {
            kinds: vec![kind],
            variant,
            samples_per_scene: samples,
            seed,
            noise_sigma: noise,
            ..SynthConfig::default()
        };
        for s in synth_dataset(&cfg).unwrap() {
            out.push((kind.name().to_string(), s));
        }
    }
    out
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5);
    let train_samples: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(15);
    let lambda_e: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let noise: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let lambda_wl: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let arch: u32 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0);
    let augment: bool = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(false);
    let t0 = Instant::now();

    let mut cfg = TrainConfig::default();
    cfg.adam.lr = lr;
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.augment = augment;
    cfg.lambda_e = lambda_e;
    cfg.lambda_w = lambda_wl;
    cfg.lambda_l = lambda_wl;
    match arch {
        1 => {
            cfg.net.pool_rows = 4;
            cfg.net.pool_cols = 8;
            cfg.net.path_hidden = [64, 64];
            cfg.net.step_hidden = [32, 32];
        }
        2 => {
            cfg.net.pool_rows = 4;
            cfg.net.pool_cols = 8;
            cfg.net.path_hidden = [32, 32];
            cfg.net.step_hidden = [24, 24];
        }
        _ => {}
    }
    println!(
        "lr={lr} seed={seed} epochs={epochs} samples/scene={train_samples} lambda_e={lambda_e} noise={noise} lambda_wl={lambda_wl} arch={arch} augment={augment} => {} iters",
        4 * train_samples * epochs * if augment { 2 } else { 1 }
    );

    let train_set: Vec<Sample> = suite(0, train_samples, 101, noise)
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let held_out = suite(1, 8, 202, 0.0);

    let mut joint_cfg = cfg.clone();
    joint_cfg.mode = TrainMode::Joint;
    let joint = Trainer::new(joint_cfg.clone())
        .unwrap()
        .train(&train_set, None)
        .unwrap();
    let first = joint.history.first().unwrap().loss.u_total;
    let last = joint.history.last().unwrap().loss.u_total;
    let tail: Vec<f64> = joint
        .history
        .iter()
        .rev()
        .take(10)
        .map(|r| r.loss.u_total)
        .collect();
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    println!(
        "joint: {} iters ({} skipped), u_total {first:.4} -> last {last:.4}, tail10 {tail_mean:.4}, ratio(last) {:.4}, ratio(tail) {:.4}",
        joint.history.len(),
        joint.skipped,
        last / first,
        tail_mean / first
    );
    let comp = |sel: fn(&stride_core::train::LossBreakdown) -> f64| {
        joint.history.iter().rev().take(10).map(|r| sel(&r.loss)).sum::<f64>() / 10.0
    };
    println!(
        "  tail10 components: u_path {:.4} mse {:.4} u_w {:.4} u_l {:.4} u_esdf {:.4}",
        comp(|l| l.u_path),
        comp(|l| l.u_mse_step),
        comp(|l| l.u_w),
        comp(|l| l.u_l),
        comp(|l| l.u_esdf)
    );

    let mut abl_cfg = cfg.clone();
    abl_cfg.mode = TrainMode::Ablation;
    let abl = Trainer::new(abl_cfg.clone())
        .unwrap()
        .train(&train_set, None)
        .unwrap();
    println!(
        "ablation: {} iters ({} skipped), u_total {:.4} -> {:.4}",
        abl.history.len(),
        abl.skipped,
        abl.history.first().unwrap().loss.u_total,
        abl.history.last().unwrap().loss.u_total
    );

    let joint_stack = PlannerStack::new(joint_cfg.clone(), joint.weights.clone()).unwrap();
    let abl_stack = PlannerStack::new(abl_cfg, abl.weights).unwrap();
    let mj = metrics_eval(&held_out, &joint_stack).unwrap();
    let ma = metrics_eval(&held_out, &abl_stack).unwrap();
    let mut wins = 0;
    for kind in SceneKind::ALL {
        let j = &mj.per_scene[kind.name()];
        let a = &ma.per_scene[kind.name()];
        let win = j.feasibility < a.feasibility && j.collision_risk < a.collision_risk;
        wins += win as u32;
        println!(
            "{:>9}: joint feas {:.4} risk {:.4} | abl feas {:.4} risk {:.4} | win={}",
            kind.name(),
            j.feasibility,
            j.collision_risk,
            a.feasibility,
            a.collision_risk,
            win
        );
    }
    println!("wins: {wins}/4   (train+eval {:.1}s)", t0.elapsed().as_secs_f64());

    // Probe: predicted waypoints and steps at a canonical mid-gait state in
    // an empty corridor, printed in the robot frame.
    let scene = Scene2D {
        bounds: Bounds { min: [-0.5, -1.2], max: [4.5, 1.2] },
        obstacles: vec![],
    };
    {
        let pose = PlanarPose::new(0.3, 0.0, 0.0);
        let depth = stride_core::scene::render_depth(
            &scene,
            &pose,
            &stride_core::scene::CameraModel::desk_default(),
        )
        .unwrap();
        let sample = Sample { depth, goal: [2.3, 0.0], pose, parity: 0 };
        let arts = Trainer::new(joint_cfg.clone())
            .unwrap()
            .evaluate_sample(&sample, &joint_stack.weights)
            .unwrap();
        let fmt = |pts: &[[f64; 2]]| {
            pts.iter().map(|p| format!("({:.3},{:.3})", p[0], p[1])).collect::<Vec<_>>().join(" ")
        };
        println!("probe phi:    {}", fmt(&arts.phi));
        println!("probe steps:  {}", fmt(&arts.steps));
        println!("probe s_star: {}", fmt(&arts.s_star));
    }

    // Closed-loop corridor check.
    let t1 = Instant::now();
    let sim_cfg = SimConfig::new(scene, PlanarPose::new(0.0, 0.0, 0.0), vec![[3.0, 0.0]]);
    let trained_log = rollout(&sim_cfg, &joint_stack).unwrap();
    let trained_metrics = metrics_from_log(&trained_log).unwrap();
    let untrained_stack =
        PlannerStack::new(joint_cfg.clone(), init_weights(&joint_cfg.net, joint_cfg.seed)).unwrap();
    let untrained_log = rollout(&sim_cfg, &untrained_stack).unwrap();
    let untrained_metrics = metrics_from_log(&untrained_log).unwrap();
    println!(
        "rollout trained: {:?} at {:.2}s, risk {:.6}, evenness {:.6e} ({} steps)",
        trained_log.outcome,
        trained_log.outcome_t,
        trained_metrics.collision_risk,
        trained_metrics.evenness,
        trained_log.step_count()
    );
    if std::env::var("TUNE_DUMP").is_ok() {
        stride_core::sim::save_log(std::path::Path::new("/tmp/tune-roll.jsonl"), &trained_log)
            .unwrap();
        for e in trained_log.events.iter().take(12) {
            println!("  {}", serde_json::to_string(e).unwrap());
        }
    }
    println!(
        "rollout untrained: {:?}, evenness {:.6e}, ratio {:.2}x   (rollouts {:.1}s)",
        untrained_log.outcome,
        untrained_metrics.evenness,
        untrained_metrics.evenness / trained_metrics.evenness.max(1e-300),
        t1.elapsed().as_secs_f64()
    );
}
