//! Self-supervised training of the two planner networks.
//!
//! No labels exist anywhere in the pipeline. For every depth sample the two
//! model-predictive solvers are run on the *network's own predictions* and
//! their outputs become the regression targets:
//!
//! * the unicycle tracker smooths the predicted waypoints into a
//!   dynamically feasible trajectory `phi*`,
//! * the step-to-step tracker snaps the predicted footsteps to a
//!   dynamically consistent sequence `S*`.
//!
//! The upper-level loss pulls the predictions toward those targets and adds
//! three shaping terms: step-width alternation, step-length regularity, and
//! collision risk sampled from the depth-derived field. Solver outputs are
//! constants of each iteration — gradients flow only through the networks.
//!
//! One iteration is: forward pass, solve both trackers, evaluate the losses,
//! one backward pass, one Adam step on both parameter sets. The two
//! mean-squared-error terms live inside the autodiff graph; the three
//! shaping terms are evaluated by [`losses`] and injected as gradient seeds
//! at the prediction nodes.

pub mod losses;

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    save_checkpoint, AdamHyper, AdamState, Bindings, Evaluation, Gradients, Graph, NodeId, Tensor,
};
use crate::error::{Error, Result};
use crate::field::{
    build_risk_field, frustum_grid, RiskField, DEFAULT_GRID_MARGIN, DEFAULT_HEIGHT_BAND,
    DEFAULT_RESOLUTION, DEFAULT_SIGMA_CELLS,
};
use crate::hlip::{
    deadbeat_gain, rollout as hlip_rollout, stance_feedback, step_sequence_track, HlipParams,
    HlipState, StanceState, StepPlan, StepWeights,
};
use crate::nets::{
    append_composed, encode_depth, init_weights, step_state_features, NetConfig,
};
use crate::scene::{project, Sample};
use crate::unicycle::{reference_from_positions, track, MpcWeights, TrackOptions, UniState};

pub use losses::{local_frame_map, u_esdf_loss, u_path_loss, u_wl_loss, WlLoss};

/// Which gradients update which network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// The full objective: the step losses back-propagate through the
    /// waypoints into the path network as well.
    Joint,
    /// Ablation: the path network sees only the waypoint tracking loss; the
    /// step network still trains on the full step loss, but its gradients
    /// stop at the waypoints.
    Ablation,
}

/// Everything a training run needs besides the dataset. Every field has a
/// default, so configuration files may specify only what they change.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub net: NetConfig,
    /// Weight of the step-width alternation loss.
    pub lambda_w: f64,
    /// Weight of the step-length regularity loss.
    pub lambda_l: f64,
    /// Weight of the collision-risk loss.
    pub lambda_e: f64,
    /// Desired step width (lateral alternation amplitude), m.
    pub w_bar: f64,
    /// Desired step length, m.
    pub l_bar: f64,
    pub adam: AdamHyper,
    pub epochs: usize,
    pub seed: u64,
    /// Mirror every sample left-right each epoch (doubles the iterations).
    pub augment: bool,
    pub mode: TrainMode,
    /// Waypoint tracker weights; the horizon must equal `net.waypoints`.
    pub unicycle: MpcWeights,
    pub hlip: HlipParams,
    pub step_weights: StepWeights,
    /// Risk-field cell size, m.
    pub field_resolution: f64,
    /// Risk-field blur radius, cells.
    pub field_sigma: f64,
    /// Extra margin around the camera frustum when sizing the field, m.
    pub field_margin: f64,
    /// Heights (m) of projected points that count as obstacles.
    pub height_band: [f64; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            lambda_w: 1.0,
            lambda_l: 1.0,
            lambda_e: 0.5,
            w_bar: 0.08,
            l_bar: 0.12,
            adam: AdamHyper::default(),
            epochs: 10,
            seed: 0,
            augment: true,
            mode: TrainMode::Joint,
            unicycle: MpcWeights::planner_default(),
            hlip: HlipParams::desk_default(),
            step_weights: StepWeights::default(),
            field_resolution: DEFAULT_RESOLUTION,
            field_sigma: DEFAULT_SIGMA_CELLS,
            field_margin: DEFAULT_GRID_MARGIN,
            height_band: DEFAULT_HEIGHT_BAND,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.unicycle.validate()?;
        self.hlip.validate()?;
        self.step_weights.validate()?;
        if self.unicycle.n != self.net.waypoints {
            return Err(Error::InvalidArgument(format!(
                "unicycle horizon {} must match the {} predicted waypoints",
                self.unicycle.n, self.net.waypoints
            )));
        }
        for (name, v) in [
            ("lambda_w", self.lambda_w),
            ("lambda_l", self.lambda_l),
            ("lambda_e", self.lambda_e),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "TrainConfig.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [("w_bar", self.w_bar), ("l_bar", self.l_bar)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "TrainConfig.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("TrainConfig.epochs must be >= 1".into()));
        }
        if !(self.field_resolution > 0.0) || !(self.field_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "field resolution must be > 0 and blur sigma >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Every loss term of one iteration, already weighted where noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean squared waypoint error against the unicycle tracker output.
    pub u_path: f64,
    /// Mean squared footstep error against the step tracker output.
    pub u_mse_step: f64,
    /// Step-width alternation loss (unweighted).
    pub u_w: f64,
    /// Step-length regularity loss (unweighted).
    pub u_l: f64,
    /// Collision-risk loss (unweighted).
    pub u_esdf: f64,
    /// `u_mse_step + lambda_w u_w + lambda_l u_l + lambda_e u_esdf`.
    pub u_step: f64,
    /// `u_path + u_step`.
    pub u_total: f64,
    /// Cost the unicycle tracker reported for its own solution.
    pub l_path: f64,
    /// Cost the step tracker reported for its own solution.
    pub l_step: f64,
}

impl LossBreakdown {
    /// Confirms the composition identities and sign/finiteness constraints.
    pub fn check(&self, cfg: &TrainConfig) -> Result<()> {
        let fields = [
            ("u_path", self.u_path),
            ("u_mse_step", self.u_mse_step),
            ("u_w", self.u_w),
            ("u_l", self.u_l),
            ("u_esdf", self.u_esdf),
            ("u_step", self.u_step),
            ("u_total", self.u_total),
            ("l_path", self.l_path),
            ("l_step", self.l_step),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "LossBreakdown.{name} = {v} is not a finite non-negative value"
                )));
            }
        }
        let step = self.u_mse_step
            + cfg.lambda_w * self.u_w
            + cfg.lambda_l * self.u_l
            + cfg.lambda_e * self.u_esdf;
        let tol = 1e-9 * (1.0 + step.abs());
        if (self.u_step - step).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "u_step identity violated: {} vs recomposed {step}",
                self.u_step
            )));
        }
        let total = self.u_path + self.u_step;
        if (self.u_total - total).abs() > 1e-9 * (1.0 + total.abs()) {
            return Err(Error::InvalidArgument(format!(
                "u_total identity violated: {} vs recomposed {total}",
                self.u_total
            )));
        }
        Ok(())
    }
}

/// One line of the persisted loss history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub flipped: bool,
    pub loss: LossBreakdown,
}

/// Result of [`Trainer::train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub weights: Bindings,
    pub history: Vec<HistoryRecord>,
    /// Iterations dropped because a solver rejected the prediction.
    pub skipped: usize,
}

/// Everything one iteration computed, exposed for evaluation and tests.
#[derive(Debug, Clone)]
pub struct IterationArtifacts {
    /// Predicted waypoints, robot frame.
    pub phi: Vec<[f64; 2]>,
    /// Predicted footsteps, robot frame.
    pub steps: Vec<[f64; 2]>,
    /// Waypoint targets from the unicycle tracker, robot frame.
    pub phi_star: Vec<[f64; 2]>,
    /// Footstep targets from the step tracker, robot frame.
    pub s_star: Vec<[f64; 2]>,
    pub loss: LossBreakdown,
}

/// Mirror a sample left-right: depth columns reversed, goal's lateral
/// component negated, stance parity toggled. An involution.
pub fn augment_flip(sample: &Sample) -> Sample {
    let mut depth = sample.depth.clone();
    depth.flip_horizontal();
    Sample {
        depth,
        goal: [sample.goal[0], -sample.goal[1]],
        pose: sample.pose,
        parity: sample.parity ^ 1,
    }
}

/// The walking state attributed to a dataset sample: the pre-impact state
/// of the nominal straight gait (step length `l_bar`, lateral alternation
/// `±w_bar`) placed at the sample pose, with the stance leg chosen by the
/// sample parity. Closed-loop execution settles into exactly this kind of
/// state after the first couple of steps, so attributing it to training
/// samples keeps the step network's input distribution consistent between
/// training and deployment.
///
/// The gait state is obtained by executing four feedback steps of the
/// nominal gait from standstill in a heading-aligned frame (the deadbeat
/// loop settles in two), then rotating the per-axis `(p, v)` pairs into the
/// world frame — valid because the two axes have identical linear dynamics.
pub fn stance_from_sample(
    sample: &Sample,
    params: &HlipParams,
    w_bar: f64,
    l_bar: f64,
) -> StanceState {
    let alpha0: f64 = if sample.parity == 0 { 1.0 } else { -1.0 };
    let gain = deadbeat_gain(params);
    // Heading-aligned gait: x forward, stance foot starting at lateral
    // offset -w_bar*alpha0 (opposite the first planned step), COM at the
    // origin, at rest.
    let mut fx = HlipState::new(0.0, 0.0, 0.0);
    let mut fy = HlipState::new(0.0, -w_bar * alpha0, 0.0);
    let mut last_u = [0.0, 0.0];
    for k in 0..4 {
        let alpha_k: f64 = if (k + sample.parity as usize) % 2 == 0 { 1.0 } else { -1.0 };
        let ux = stance_feedback(&fx, fx.foot() + l_bar, params, &gain);
        let uy = stance_feedback(&fy, w_bar * alpha_k, params, &gain);
        fx = hlip_rollout(params, &fx, &[ux]).0[1];
        fy = hlip_rollout(params, &fy, &[uy]).0[1];
        last_u = [ux, uy];
    }
    // Four steps return to the sample's parity; rotate into the world frame
    // and translate the COM onto the sample pose.
    let (st, ct) = sample.pose.theta.sin_cos();
    let rot = |x: f64, y: f64| [ct * x - st * y, st * x + ct * y];
    let p = rot(fx.p, fy.p);
    let v = rot(fx.v, fy.v);
    let prev_step = rot(last_u[0], last_u[1]);
    StanceState {
        axes: [
            HlipState::new(sample.pose.x, p[0], v[0]),
            HlipState::new(sample.pose.y, p[1], v[1]),
        ],
        stance_foot: [sample.pose.x + p[0], sample.pose.y + p[1]],
        parity: sample.parity,
        prev_step,
    }
}

/// Constant per-iteration solver targets (never part of the graph).
struct Targets {
    phi_star: Vec<[f64; 2]>,
    s_star: Vec<[f64; 2]>,
    l_path: f64,
    l_step: f64,
    field: RiskField,
}

/// Prebuilt training graph plus configuration.
pub struct Trainer {
    cfg: TrainConfig,
    graph: Graph,
    node_phi: NodeId,
    node_steps: NodeId,
    node_u_path: NodeId,
    node_u_mse: NodeId,
    node_supervised: NodeId,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut graph = Graph::new();
        let nodes = append_composed(&mut graph, &cfg.net)?;
        let k = cfg.net.waypoints;
        let m = cfg.net.steps;
        let phi_star = graph.input("phi_star", vec![k, 2])?;
        let s_star = graph.input("s_star", vec![m, 2])?;
        let d_phi = graph.sub(nodes.phi, phi_star)?;
        let d_phi2 = graph.square(d_phi)?;
        let sum_phi = graph.sum(d_phi2)?;
        let node_u_path = graph.scale(sum_phi, 1.0 / k as f64)?;
        let d_s = graph.sub(nodes.steps, s_star)?;
        let d_s2 = graph.square(d_s)?;
        let sum_s = graph.sum(d_s2)?;
        let node_u_mse = graph.scale(sum_s, 1.0 / m as f64)?;
        let node_supervised = graph.add(node_u_path, node_u_mse)?;
        Ok(Self {
            cfg,
            graph,
            node_phi: nodes.phi,
            node_steps: nodes.steps,
            node_u_path,
            node_u_mse,
            node_supervised,
        })
    }

    pub fn cfg(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Fresh parameters for this configuration, seeded by the config seed.
    pub fn init_weights(&self) -> Bindings {
        init_weights(&self.cfg.net, self.cfg.seed)
    }

    /// Bind sample-derived inputs next to the parameters. Target inputs are
    /// zeroed; they only matter to the loss nodes.
    fn bindings_for(&self, sample: &Sample, weights: &Bindings) -> (Bindings, StanceState) {
        let cfg = &self.cfg;
        let features = encode_depth(&sample.depth, cfg.net.pool_rows, cfg.net.pool_cols);
        let stance = stance_from_sample(sample, &cfg.hlip, cfg.w_bar, cfg.l_bar);
        let state = step_state_features(&stance, &sample.pose);
        let mut bindings = weights.clone();
        bindings.insert("features".into(), Tensor::vector(&features));
        bindings.insert("goal".into(), Tensor::vector(&sample.goal));
        bindings.insert("state".into(), Tensor::vector(&state));
        bindings.insert("phi_star".into(), Tensor::zeros(vec![cfg.net.waypoints, 2]));
        bindings.insert("s_star".into(), Tensor::zeros(vec![cfg.net.steps, 2]));
        (bindings, stance)
    }

    /// Run both lower-level solvers on the predictions and build the risk
    /// field for the frame. Everything returned is a constant of the
    /// iteration.
    fn solve_targets(
        &self,
        sample: &Sample,
        stance: &StanceState,
        phi: &[[f64; 2]],
        steps: &[[f64; 2]],
    ) -> Result<Targets> {
        let cfg = &self.cfg;
        let pose = &sample.pose;

        // Waypoint smoothing: track the predicted waypoints from the
        // robot's current state (origin of the robot frame).
        let reference = reference_from_positions(phi);
        let state_feat = step_state_features(stance, pose);
        let x0 = UniState::new(0.0, 0.0, state_feat[2], 0.0);
        let mpc = track(&reference, &x0, &cfg.unicycle, &TrackOptions::default())?;
        let phi_star: Vec<[f64; 2]> = mpc.states.iter().map(|s| [s.x, s.y]).collect();

        // Collision field from the projected depth frame, world frame.
        let grid = frustum_grid(
            pose,
            sample.depth.camera(),
            cfg.field_resolution,
            cfg.field_margin,
        )?;
        let points = project(&sample.depth, pose);
        let field = build_risk_field(&points, grid, cfg.field_sigma, cfg.height_band)?;

        // Footstep snapping, world frame.
        let steps_world: Vec<[f64; 2]> = steps.iter().map(|s| pose.to_world(*s)).collect();
        let plan = StepPlan::new(steps_world, sample.parity);
        let solve = step_sequence_track(&plan, stance, &cfg.hlip, &cfg.step_weights)?;
        let s_star: Vec<[f64; 2]> = solve.plan.steps.iter().map(|s| pose.to_local(*s)).collect();

        Ok(Targets {
            phi_star,
            s_star,
            l_path: mpc.cost,
            l_step: solve.cost,
            field,
        })
    }

    /// Evaluate the loss heads and assemble the gradient seeds for the
    /// prediction nodes. Returns the breakdown and the seeds
    /// `(d/d phi, d/d steps)` of the non-graph loss terms.
    fn heads(
        &self,
        sample: &Sample,
        phi: &[[f64; 2]],
        steps: &[[f64; 2]],
        field: &RiskField,
    ) -> Result<(f64, f64, f64, Tensor, Tensor)> {
        let cfg = &self.cfg;
        let wl = u_wl_loss(steps, phi, cfg.w_bar, cfg.l_bar, sample.parity)?;

        let pose = &sample.pose;
        let steps_world: Vec<[f64; 2]> = steps.iter().map(|s| pose.to_world(*s)).collect();
        let (u_e, grads_world) = u_esdf_loss(&steps_world, field)?;
        let (ct, st) = (pose.theta.cos(), pose.theta.sin());

        let mut seed_phi = vec![0.0; 2 * phi.len()];
        for (j, (gw, gl)) in wl.d_phi_w.iter().zip(&wl.d_phi_l).enumerate() {
            seed_phi[2 * j] = cfg.lambda_w * gw[0] + cfg.lambda_l * gl[0];
            seed_phi[2 * j + 1] = cfg.lambda_w * gw[1] + cfg.lambda_l * gl[1];
        }
        let mut seed_steps = vec![0.0; 2 * steps.len()];
        for k in 0..steps.len() {
            // World-frame field gradient pulled back to the robot frame.
            let g = grads_world[k];
            let g_robot = [ct * g[0] + st * g[1], -st * g[0] + ct * g[1]];
            seed_steps[2 * k] = cfg.lambda_w * wl.d_steps_w[k][0]
                + cfg.lambda_l * wl.d_steps_l[k][0]
                + cfg.lambda_e * g_robot[0];
            seed_steps[2 * k + 1] = cfg.lambda_w * wl.d_steps_w[k][1]
                + cfg.lambda_l * wl.d_steps_l[k][1]
                + cfg.lambda_e * g_robot[1];
        }
        let seed_phi = Tensor::from_vec(vec![phi.len(), 2], seed_phi)?;
        let seed_steps = Tensor::from_vec(vec![steps.len(), 2], seed_steps)?;
        Ok((wl.u_w, wl.u_l, u_e, seed_phi, seed_steps))
    }

    /// Gradient of the full objective for the current mode.
    fn gradients(
        &self,
        eval: &Evaluation,
        seed_phi: Tensor,
        seed_steps: Tensor,
    ) -> Result<Gradients> {
        match self.cfg.mode {
            TrainMode::Joint => self.graph.backward_seeded(
                eval,
                &[
                    (self.node_supervised, Tensor::scalar(1.0)),
                    (self.node_phi, seed_phi),
                    (self.node_steps, seed_steps),
                ],
            ),
            TrainMode::Ablation => {
                // Path network: waypoint tracking only.
                let path_grads = self.graph.backward(eval, self.node_u_path, 1.0)?;
                // Step network: the full step loss (its gradients toward
                // path parameters are discarded).
                let step_grads = self.graph.backward_seeded(
                    eval,
                    &[
                        (self.node_u_mse, Tensor::scalar(1.0)),
                        (self.node_phi, seed_phi),
                        (self.node_steps, seed_steps),
                    ],
                )?;
                let mut merged = Gradients::new();
                for (name, g) in path_grads {
                    if name.starts_with("path.") {
                        merged.insert(name, g);
                    }
                }
                for (name, g) in step_grads {
                    if name.starts_with("step.") {
                        merged.insert(name, g);
                    }
                }
                Ok(merged)
            }
        }
    }

    /// One full optimization iteration on one sample. Errors indicate the
    /// iteration could not be completed (solver rejection, non-finite
    /// prediction); the caller decides whether to skip or abort.
    pub fn train_iteration(
        &self,
        sample: &Sample,
        weights: &mut Bindings,
        adam: &mut AdamState,
    ) -> Result<LossBreakdown> {
        let (artifacts, grads) = self.iteration_core(sample, weights)?;
        adam.step(weights, &grads)?;
        Ok(artifacts.loss)
    }

    /// The read-only part of an iteration: forward, targets, losses,
    /// gradients. Exposed so evaluation can reuse it without stepping.
    pub fn evaluate_sample(
        &self,
        sample: &Sample,
        weights: &Bindings,
    ) -> Result<IterationArtifacts> {
        Ok(self.iteration_core(sample, weights)?.0)
    }

    fn iteration_core(
        &self,
        sample: &Sample,
        weights: &Bindings,
    ) -> Result<(IterationArtifacts, Gradients)> {
        sample.validate()?;
        let cfg = &self.cfg;
        let (mut bindings, stance) = self.bindings_for(sample, weights);

        // Phase one: predictions only (target inputs still zero).
        let eval = self.graph.evaluate(&bindings)?;
        let phi = eval.value(self.node_phi).to_points()?;
        let steps = eval.value(self.node_steps).to_points()?;

        // Lower-level solves on the detached predictions.
        let targets = self.solve_targets(sample, &stance, &phi, &steps)?;

        // Phase two: rebind the targets so the loss nodes are real.
        bindings.insert("phi_star".into(), Tensor::from_points(&targets.phi_star));
        bindings.insert("s_star".into(), Tensor::from_points(&targets.s_star));
        let eval = self.graph.evaluate(&bindings)?;
        let u_path = eval.value(self.node_u_path).item()?;
        let u_mse_step = eval.value(self.node_u_mse).item()?;

        let (u_w, u_l, u_esdf, seed_phi, seed_steps) =
            self.heads(sample, &phi, &steps, &targets.field)?;

        let grads = self.gradients(&eval, seed_phi, seed_steps)?;

        let u_step =
            u_mse_step + cfg.lambda_w * u_w + cfg.lambda_l * u_l + cfg.lambda_e * u_esdf;
        let loss = LossBreakdown {
            u_path,
            u_mse_step,
            u_w,
            u_l,
            u_esdf,
            u_step,
            u_total: u_path + u_step,
            l_path: targets.l_path,
            l_step: targets.l_step,
        };
        loss.check(cfg)?;

        Ok((
            IterationArtifacts {
                phi,
                steps,
                phi_star: targets.phi_star,
                s_star: targets.s_star,
                loss,
            },
            grads,
        ))
    }

    /// Full training run: seeded shuffles, optional flip augmentation,
    /// per-epoch checkpoints and a JSON-lines loss history when `out_dir`
    /// is given.
    pub fn train(&self, dataset: &[Sample], out_dir: Option<&Path>) -> Result<TrainOutput> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("training dataset is empty".into()));
        }
        let cfg = &self.cfg;
        let mut weights = self.init_weights();
        let mut adam = AdamState::new(cfg.adam);
        let mut history = Vec::new();
        let mut skipped = 0usize;

        let mut history_file = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("history.jsonl");
                Some(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?)
            }
            None => None,
        };

        for epoch in 0..cfg.epochs {
            let mut order: Vec<(usize, bool)> =
                (0..dataset.len()).map(|i| (i, false)).collect();
            if cfg.augment {
                order.extend((0..dataset.len()).map(|i| (i, true)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x51),
            );
            order.shuffle(&mut rng);

            for (iteration, &(idx, flipped)) in order.iter().enumerate() {
                let mirrored;
                let sample = if flipped {
                    mirrored = augment_flip(&dataset[idx]);
                    &mirrored
                } else {
                    &dataset[idx]
                };
                match self.train_iteration(sample, &mut weights, &mut adam) {
                    Ok(loss) => {
                        let record = HistoryRecord { epoch, iteration, flipped, loss };
                        if let Some(file) = history_file.as_mut() {
                            let line = serde_json::to_string(&record)?;
                            writeln!(file, "{line}")
                                .map_err(|e| Error::io("history.jsonl", e))?;
                        }
                        history.push(record);
                    }
                    Err(err) => {
                        log::warn!(
                            "skipping sample {idx} (epoch {epoch}, iteration {iteration}): {err}"
                        );
                        skipped += 1;
                    }
                }
            }

            if let Some(dir) = out_dir {
                let path = dir.join(format!("checkpoint-{epoch:03}.json"));
                save_checkpoint(
                    &path,
                    &weights,
                    serde_json::json!({
                        "epoch": epoch,
                        "seed": cfg.seed,
                        "mode": cfg.mode,
                    }),
                )?;
            }
        }

        Ok(TrainOutput { weights, history, skipped })
    }
}

/// Current stance parity after `executed` steps from an initial parity.
pub fn parity_after(initial: u8, executed: usize) -> u8 {
    (initial as usize + executed) as u8 % 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_dataset, CameraModel, SceneKind, SynthConfig};
    use rand::Rng;

    /// Small but real configuration: tiny nets, coarse camera, short
    /// horizons — every code path exercised, fast enough for sweeps.
    fn tiny_config() -> TrainConfig {
        let net = NetConfig::tiny();
        let mut unicycle = MpcWeights::planner_default();
        unicycle.n = net.waypoints;
        TrainConfig {
            net,
            unicycle,
            augment: false,
            epochs: 1,
            ..TrainConfig::default()
        }
    }

    fn tiny_camera() -> CameraModel {
        CameraModel {
            width: 32,
            height: 16,
            fx: 16.0 / (0.87_f64).tan(),
            fy: 16.0 / (0.87_f64).tan(),
            cx: 16.0,
            cy: 8.0,
            ..CameraModel::desk_default()
        }
    }

    fn corridor_samples(n: usize) -> Vec<Sample> {
        let cfg = SynthConfig {
            kinds: vec![SceneKind::Corridor],
            variant: 0,
            samples_per_scene: n,
            seed: 71,
            camera: tiny_camera(),
            noise_sigma: 0.0,
        };
        synth_dataset(&cfg).unwrap()
    }

    #[test]
    fn flip_is_involution() {
        let sample = corridor_samples(1).remove(0);
        let once = augment_flip(&sample);
        assert_eq!(once.goal, [sample.goal[0], -sample.goal[1]]);
        assert_eq!(once.parity, sample.parity ^ 1);
        let w = sample.depth.width();
        for v in 0..sample.depth.height() {
            assert_eq!(once.depth.at(v, 0), sample.depth.at(v, w - 1));
        }
        let twice = augment_flip(&once);
        assert_eq!(twice.goal, sample.goal);
        assert_eq!(twice.parity, sample.parity);
        assert_eq!(twice.depth.values(), sample.depth.values());
        assert_eq!(twice.pose, sample.pose);
    }

    #[test]
    fn iteration_produces_finite_consistent_losses() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let samples = corridor_samples(3);
        let mut weights = trainer.init_weights();
        let mut adam = AdamState::new(trainer.cfg().adam);
        for sample in &samples {
            let loss = trainer.train_iteration(sample, &mut weights, &mut adam).unwrap();
            loss.check(trainer.cfg()).unwrap();
            assert!(loss.u_total > 0.0);
        }
    }

    #[test]
    fn path_loss_never_touches_step_weights() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let sample = corridor_samples(1).remove(0);
        let weights = trainer.init_weights();
        let (bindings, _) = trainer.bindings_for(&sample, &weights);
        let eval = trainer.graph.evaluate(&bindings).unwrap();
        let grads = trainer.graph.backward(&eval, trainer.node_u_path, 1.0).unwrap();
        for (name, g) in &grads {
            if name.starts_with("step.") {
                assert!(
                    g.data().iter().all(|v| *v == 0.0),
                    "waypoint loss leaked into {name}"
                );
            }
        }
        // And it does reach the path weights.
        let reached = grads
            .iter()
            .filter(|(n, _)| n.starts_with("path."))
            .any(|(_, g)| g.data().iter().any(|v| *v != 0.0));
        assert!(reached);
    }

    #[test]
    fn step_loss_reaches_path_weights_with_correct_values() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let cfg = trainer.cfg().clone();
        let sample = corridor_samples(1).remove(0);
        let weights = trainer.init_weights();

        // Base iteration: capture predictions, targets, and field once.
        let (mut bindings, stance) = trainer.bindings_for(&sample, &weights);
        let eval = trainer.graph.evaluate(&bindings).unwrap();
        let phi = eval.value(trainer.node_phi).to_points().unwrap();
        let steps = eval.value(trainer.node_steps).to_points().unwrap();
        let targets = trainer.solve_targets(&sample, &stance, &phi, &steps).unwrap();
        bindings.insert("s_star".into(), Tensor::from_points(&targets.s_star));
        let eval = trainer.graph.evaluate(&bindings).unwrap();
        let (_, _, _, seed_phi, seed_steps) =
            trainer.heads(&sample, &phi, &steps, &targets.field).unwrap();

        // Analytic gradient of the full step loss.
        let grads = trainer
            .graph
            .backward_seeded(
                &eval,
                &[
                    (trainer.node_u_mse, Tensor::scalar(1.0)),
                    (trainer.node_phi, seed_phi),
                    (trainer.node_steps, seed_steps),
                ],
            )
            .unwrap();

        // Step-loss value as a pure function of the weights, targets and
        // field held fixed.
        let u_step_of = |w: &Bindings| -> f64 {
            let mut b = bindings.clone();
            for (name, t) in w {
                b.insert(name.clone(), t.clone());
            }
            let e = trainer.graph.evaluate(&b).unwrap();
            let u_mse = e.value(trainer.node_u_mse).item().unwrap();
            let phi = e.value(trainer.node_phi).to_points().unwrap();
            let steps = e.value(trainer.node_steps).to_points().unwrap();
            let wl = u_wl_loss(&steps, &phi, cfg.w_bar, cfg.l_bar, sample.parity).unwrap();
            let steps_world: Vec<[f64; 2]> =
                steps.iter().map(|s| sample.pose.to_world(*s)).collect();
            let (u_e, _) = u_esdf_loss(&steps_world, &targets.field).unwrap();
            u_mse + cfg.lambda_w * wl.u_w + cfg.lambda_l * wl.u_l + cfg.lambda_e * u_e
        };

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = 1e-6;
        let mut nonzero = false;
        for name in ["path.w1", "path.w2", "path.w3", "path.b1", "path.b2"] {
            let tensor = &weights[name];
            let idx = rng.random_range(0..tensor.numel());
            let probe = |delta: f64| {
                let mut w = weights.clone();
                let t = w.get_mut(name).unwrap();
                t.data_mut()[idx] += delta;
                u_step_of(&w)
            };
            let fd = (probe(h) - probe(-h)) / (2.0 * h);
            let a = grads[name].data()[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "{name}[{idx}]: analytic {a} vs fd {fd} (rel {rel})");
            if a != 0.0 {
                nonzero = true;
            }
        }
        assert!(nonzero, "step loss produced no gradient on any sampled path weight");
    }

    #[test]
    fn ablation_mode_blocks_step_loss_from_path_weights() {
        let mut cfg = tiny_config();
        cfg.mode = TrainMode::Ablation;
        let trainer = Trainer::new(cfg).unwrap();
        let joint = Trainer::new(tiny_config()).unwrap();
        let sample = corridor_samples(1).remove(0);
        let weights = trainer.init_weights();

        let (_, grads_ablation) = trainer.iteration_core(&sample, &weights).unwrap();
        let (_, grads_joint) = joint.iteration_core(&sample, &weights).unwrap();

        let mut differs = false;
        for (name, g) in &grads_joint {
            if name.starts_with("path.") {
                let a = &grads_ablation[name];
                if a.data() != g.data() {
                    differs = true;
                }
            } else {
                // Step-net gradients agree between modes.
                assert_eq!(grads_ablation[name].data(), g.data(), "{name} differs");
            }
        }
        assert!(differs, "ablation left path gradients identical to joint");
    }

    #[test]
    fn rollout_reference_is_a_fixed_point() {
        // A waypoint sequence that is already a feasible rollout tracks to
        // itself: a straight constant-velocity line costs nothing.
        let weights = MpcWeights::planner_default();
        let v = 0.45;
        let phi: Vec<[f64; 2]> = (0..weights.n)
            .map(|k| [v * weights.dt * k as f64, 0.0])
            .collect();
        let reference = reference_from_positions(&phi);
        let x0 = UniState::new(0.0, 0.0, v, 0.0);
        let result = track(&reference, &x0, &weights, &TrackOptions::default()).unwrap();
        let phi_star: Vec<[f64; 2]> = result.states.iter().map(|s| [s.x, s.y]).collect();
        let (u_path, _) = u_path_loss(&phi, &phi_star).unwrap();
        assert!(u_path < 1e-6, "u_path = {u_path}");
    }

    #[test]
    fn training_converges_on_one_sample() {
        let mut cfg = tiny_config();
        cfg.epochs = 50;
        cfg.adam.lr = 3e-3;
        let trainer = Trainer::new(cfg).unwrap();
        let dataset = corridor_samples(1);
        let out = trainer.train(&dataset, None).unwrap();
        assert_eq!(out.skipped, 0);
        let initial = out.history.first().unwrap().loss.u_total;
        let last = out.history.last().unwrap().loss.u_total;
        assert!(
            last < 0.2 * initial,
            "u_total went from {initial} to {last}, not below 0.2x"
        );
    }

    #[test]
    fn training_is_seed_deterministic() {
        let mut cfg = tiny_config();
        cfg.epochs = 2;
        cfg.augment = true;
        let dataset = corridor_samples(2);
        let a = Trainer::new(cfg.clone()).unwrap().train(&dataset, None).unwrap();
        let b = Trainer::new(cfg).unwrap().train(&dataset, None).unwrap();
        assert_eq!(
            serde_json::to_string(&a.history).unwrap(),
            serde_json::to_string(&b.history).unwrap()
        );
        for (name, t) in &a.weights {
            assert_eq!(t.data(), b.weights[name].data(), "weights diverged at {name}");
        }
    }

    #[test]
    fn augmentation_doubles_iterations() {
        let mut cfg = tiny_config();
        cfg.epochs = 2;
        let dataset = corridor_samples(2);
        let plain = Trainer::new(cfg.clone()).unwrap().train(&dataset, None).unwrap();
        cfg.augment = true;
        let doubled = Trainer::new(cfg).unwrap().train(&dataset, None).unwrap();
        assert_eq!(plain.history.len() + plain.skipped, 4);
        assert_eq!(doubled.history.len() + doubled.skipped, 8);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        assert!(trainer.train(&[], None).is_err());
    }
}
