//! Closed-loop planar walking simulation and metric evaluation.
//!
//! The robot is a kinematic surrogate: a disk-shaped body whose center of
//! mass follows the step-to-step pendulum dynamics. Two planners run on a
//! simulated clock — the path network re-plans waypoints at `path_rate`
//! from freshly rendered depth, and the step network proposes footsteps at
//! `step_rate`, of which only the first is executed through the stance
//! feedback controller. The loop terminates when the goal list is
//! exhausted, the body disk touches an obstacle or the world boundary, or
//! the clock runs out.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Bindings;
use crate::error::{Error, Result};
use crate::field::{build_risk_field, frustum_grid};
use crate::hlip::{deadbeat_gain, rollout as hlip_rollout, stance_feedback, StanceState, StepPlan};
use crate::nets::{encode_depth, step_state_features, Planner};
use crate::scene::{render_depth, CameraModel, PlanarPose, Sample, Scene2D};
use crate::train::{stance_from_sample, TrainConfig};
use crate::unicycle::{reference_from_positions, track, TrackOptions, UniState};

/// Body disk radius used for collision checks, meters.
pub const DEFAULT_BODY_RADIUS: f64 = 0.12;

/// A rollout scenario: the world, the schedule, and the stop conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Path re-planning rate, Hz.
    pub path_rate: f64,
    /// Step planning/execution rate, Hz.
    pub step_rate: f64,
    /// A goal counts as reached within this distance, m.
    pub goal_radius: f64,
    /// Simulated-clock budget, s.
    pub max_sim_time: f64,
    pub scene: Scene2D,
    pub start: PlanarPose,
    /// World-frame goals, visited in order; the rollout succeeds when the
    /// last one is reached.
    pub goals: Vec<[f64; 2]>,
    pub camera: CameraModel,
    /// Body disk radius for collision checks, m.
    pub body_radius: f64,
}

impl SimConfig {
    pub fn new(scene: Scene2D, start: PlanarPose, goals: Vec<[f64; 2]>) -> Self {
        Self {
            path_rate: 15.0,
            step_rate: 4.0,
            goal_radius: 0.25,
            max_sim_time: 30.0,
            scene,
            start,
            goals,
            camera: CameraModel::desk_default(),
            body_radius: DEFAULT_BODY_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.camera.validate()?;
        for (name, v) in [
            ("path_rate", self.path_rate),
            ("step_rate", self.step_rate),
            ("goal_radius", self.goal_radius),
            ("max_sim_time", self.max_sim_time),
            ("body_radius", self.body_radius),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "SimConfig.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.goals.is_empty() {
            return Err(Error::InvalidArgument("SimConfig.goals must not be empty".into()));
        }
        if self
            .goals
            .iter()
            .any(|g| !g[0].is_finite() || !g[1].is_finite())
        {
            return Err(Error::NonFinite("SimConfig.goals".into()));
        }
        Ok(())
    }
}

/// Trained weights bundled with the configuration they were trained under,
/// plus the forward-pass machinery.
pub struct PlannerStack {
    pub train: TrainConfig,
    pub weights: Bindings,
    planner: Planner,
}

impl PlannerStack {
    pub fn new(train: TrainConfig, weights: Bindings) -> Result<Self> {
        train.validate()?;
        for (name, shape) in train.net.param_specs() {
            match weights.get(&name) {
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "weights are missing parameter `{name}`"
                    )))
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::shape(
                        "PlannerStack::new",
                        format!("parameter `{name}` has shape {:?}, expected {shape:?}", t.shape()),
                    ))
                }
                Some(_) => {}
            }
        }
        let planner = Planner::new(train.net.clone())?;
        Ok(Self { train, weights, planner })
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }
}

/// How a rollout ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every goal was visited.
    Reached,
    /// The body disk touched an obstacle footprint or the world boundary.
    Collided,
    /// The clock ran out first.
    Timeout,
}

/// One logged simulation event.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    /// A path re-planning tick.
    Path {
        t: f64,
        pose: PlanarPose,
        /// Predicted waypoints, world frame.
        waypoints_world: Vec<[f64; 2]>,
        /// Tracking cost the waypoint solver reported for this prediction.
        l_path: f64,
        /// Variance of consecutive-waypoint spacings, m^2.
        evenness: f64,
    },
    /// A step planning/execution tick.
    Step {
        t: f64,
        /// Pose after the step was executed.
        pose: PlanarPose,
        /// Walking state after the step was executed.
        stance: StanceState,
        /// Predicted footsteps, world frame.
        steps_world: Vec<[f64; 2]>,
        /// Where the executed (first) step actually landed, world frame.
        executed_foot: [f64; 2],
        /// Tracking cost the step solver reported for this prediction.
        l_step: f64,
        /// Sum of risk-field samples at the predicted footsteps.
        collision_risk: f64,
    },
    /// A lower-level solver rejected the current prediction; the rollout
    /// continued on the previous plan.
    Failure { t: f64, solver: String, message: String },
}

impl SimEvent {
    pub fn t(&self) -> f64 {
        match self {
            SimEvent::Path { t, .. } | SimEvent::Step { t, .. } | SimEvent::Failure { t, .. } => *t,
        }
    }
}

/// Full record of one rollout.
///
/// Event timestamps are strictly increasing: when two ticks land on the
/// same simulated instant the path tick is processed first and later
/// records are nudged forward by a nanosecond.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutLog {
    pub scene: Scene2D,
    pub start: PlanarPose,
    pub goals: Vec<[f64; 2]>,
    pub body_radius: f64,
    pub events: Vec<SimEvent>,
    pub outcome: Outcome,
    /// Simulated time at which the outcome was decided.
    pub outcome_t: f64,
}

impl RolloutLog {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            let t = e.t();
            if !t.is_finite() {
                return Err(Error::NonFinite("event timestamp".into()));
            }
            if t <= last {
                return Err(Error::InvalidArgument(format!(
                    "event timestamps must be strictly increasing ({t} after {last})"
                )));
            }
            last = t;
        }
        if !self.outcome_t.is_finite() || self.outcome_t < last {
            return Err(Error::InvalidArgument(format!(
                "outcome time {} precedes the last event at {last}",
                self.outcome_t
            )));
        }
        Ok(())
    }

    pub fn path_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, SimEvent::Path { .. }))
            .count()
    }

    pub fn step_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, SimEvent::Step { .. }))
            .count()
    }

    /// Body-center trajectory: start pose plus the pose after each step.
    pub fn trajectory(&self) -> Vec<[f64; 2]> {
        let mut out = vec![[self.start.x, self.start.y]];
        for e in &self.events {
            if let SimEvent::Step { pose, .. } = e {
                out.push([pose.x, pose.y]);
            }
        }
        out
    }
}

/// The latest accepted path plan, kept until a newer one succeeds.
struct PathPlan {
    /// Waypoints in the frame of `pose`.
    phi_local: Vec<[f64; 2]>,
    /// Pose the plan was made from.
    pose: PlanarPose,
    field: crate::field::RiskField,
}

/// Heading (relative to the planning pose) of the first waypoint segment
/// with measurable extent; `None` when the whole path is degenerate.
/// Arc distance ahead of the plan origin used to pick the heading target.
const HEADING_LOOKAHEAD: f64 = 0.3;
/// Largest heading change applied per executed step, rad.
const MAX_TURN_PER_STEP: f64 = 0.4;

/// Direction from the plan origin to the first predicted waypoint at least
/// `HEADING_LOOKAHEAD` metres away (or the farthest non-degenerate one).
/// Individual waypoints carry prediction noise, so aiming at a point a fixed
/// distance down the path keeps the heading stable where a single segment
/// tangent would not.
fn local_path_heading(phi: &[[f64; 2]]) -> Option<f64> {
    let mut best: Option<[f64; 2]> = None;
    for w in phi {
        let d2 = w[0] * w[0] + w[1] * w[1];
        if d2 > 1e-10 {
            best = Some(*w);
            if d2 >= HEADING_LOOKAHEAD * HEADING_LOOKAHEAD {
                break;
            }
        }
    }
    best.map(|w| w[1].atan2(w[0]))
}

/// Wrap an angle to `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Population variance of consecutive-waypoint distances, m^2.
pub fn waypoint_evenness(points: &[[f64; 2]]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let dists: Vec<f64> = points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / dists.len() as f64
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Append an event, nudging its timestamp forward by a nanosecond if
/// needed to keep the log strictly increasing.
fn push_event(log: &mut RolloutLog, last_t: &mut f64, mut e: SimEvent) {
    if e.t() <= *last_t {
        let bumped = *last_t + 1e-9;
        match &mut e {
            SimEvent::Path { t, .. } | SimEvent::Step { t, .. } | SimEvent::Failure { t, .. } => {
                *t = bumped
            }
        }
    }
    *last_t = e.t();
    log.events.push(e);
}

/// Run one closed-loop rollout.
pub fn rollout(cfg: &SimConfig, stack: &PlannerStack) -> Result<RolloutLog> {
    cfg.validate()?;
    let train = &stack.train;
    let mut log = RolloutLog {
        scene: cfg.scene.clone(),
        start: cfg.start,
        goals: cfg.goals.clone(),
        body_radius: cfg.body_radius,
        events: Vec::new(),
        outcome: Outcome::Timeout,
        outcome_t: cfg.max_sim_time,
    };
    let mut last_t = f64::NEG_INFINITY;

    // Walking state: standing at the start pose, stance foot laterally
    // offset by the nominal step width (the same convention the trainer
    // attributes to dataset samples).
    let mut pose = cfg.start;
    let alpha0 = 1.0; // parity 0
    let stance_foot = pose.to_world([0.0, -train.w_bar * alpha0]);
    let mut stance = StanceState::standing([pose.x, pose.y], stance_foot, 0);
    let gain = deadbeat_gain(&train.hlip);

    // Goals already satisfied at the start count as visited immediately.
    let mut goal_idx = 0usize;
    while goal_idx < cfg.goals.len() && dist([pose.x, pose.y], cfg.goals[goal_idx]) <= cfg.goal_radius
    {
        goal_idx += 1;
    }
    if goal_idx == cfg.goals.len() {
        log.outcome = Outcome::Reached;
        log.outcome_t = 0.0;
        return Ok(log);
    }
    if cfg.scene.collides(pose.x, pose.y, cfg.body_radius) {
        log.outcome = Outcome::Collided;
        log.outcome_t = 0.0;
        return Ok(log);
    }

    let mut plan: Option<PathPlan> = None;
    let mut prev_l_step = 0.0;
    let mut path_k = 0u64;
    let mut step_k = 0u64;

    loop {
        let tp = path_k as f64 / cfg.path_rate;
        // Step ticks sit mid-interval so the first path plan exists before
        // the first step and the two schedules rarely collide.
        let ts = (step_k as f64 + 0.5) / cfg.step_rate;
        let (t, is_path) = if tp <= ts { (tp, true) } else { (ts, false) };
        if t > cfg.max_sim_time {
            log.outcome = Outcome::Timeout;
            log.outcome_t = cfg.max_sim_time;
            break;
        }

        if is_path {
            path_k += 1;
            let depth = render_depth(&cfg.scene, &pose, &cfg.camera)?;
            let features = encode_depth(&depth, train.net.pool_rows, train.net.pool_cols);
            let goal_local = pose.to_local(cfg.goals[goal_idx]);
            let phi = stack.planner.path_forward(&features, goal_local, &stack.weights)?;

            let state_feat = step_state_features(&stance, &pose);
            let x0 = UniState::new(0.0, 0.0, state_feat[2], 0.0);
            let reference = reference_from_positions(&phi.waypoints);
            let tracked = track(&reference, &x0, &train.unicycle, &TrackOptions::default());
            match tracked {
                Ok(mpc) => {
                    let grid = frustum_grid(
                        &pose,
                        depth.camera(),
                        train.field_resolution,
                        train.field_margin,
                    )?;
                    let points = crate::scene::project(&depth, &pose);
                    let field = build_risk_field(&points, grid, train.field_sigma, train.height_band)?;
                    let evenness = waypoint_evenness(&phi.waypoints);
                    let waypoints_world: Vec<[f64; 2]> =
                        phi.waypoints.iter().map(|w| pose.to_world(*w)).collect();
                    push_event(
                        &mut log,
                        &mut last_t,
                        SimEvent::Path {
                            t,
                            pose,
                            waypoints_world,
                            l_path: mpc.cost,
                            evenness,
                        },
                    );
                    plan = Some(PathPlan {
                        phi_local: phi.waypoints,
                        pose,
                        field,
                    });
                }
                Err(err) => {
                    push_event(
                        &mut log,
                        &mut last_t,
                        SimEvent::Failure {
                            t,
                            solver: "unicycle".into(),
                            message: err.to_string(),
                        },
                    );
                }
            }
        } else {
            step_k += 1;
            let Some(plan) = plan.as_ref() else {
                // No accepted path plan yet; nothing to step toward.
                continue;
            };

            // Everything below happens in the plan's frame, matching how
            // the step network was trained.
            let tensor_phi = crate::nets::PathPrediction {
                waypoints: plan.phi_local.clone(),
            };
            let state_feat = step_state_features(&stance, &plan.pose);
            let pred = stack
                .planner
                .step_forward(&tensor_phi, &state_feat, &stack.weights)?;
            let steps_world: Vec<[f64; 2]> =
                pred.steps.iter().map(|s| plan.pose.to_world(*s)).collect();

            // Step-tracking cost for the metrics; execution does not depend
            // on it succeeding.
            let l_step = match crate::hlip::step_sequence_track(
                &StepPlan::new(steps_world.clone(), stance.parity),
                &stance,
                &train.hlip,
                &train.step_weights,
            ) {
                Ok(solve) => {
                    prev_l_step = solve.cost;
                    solve.cost
                }
                Err(err) => {
                    push_event(
                        &mut log,
                        &mut last_t,
                        SimEvent::Failure {
                            t,
                            solver: "step".into(),
                            message: err.to_string(),
                        },
                    );
                    prev_l_step
                }
            };

            let collision_risk: f64 = {
                let mut sum = 0.0;
                for s in &steps_world {
                    sum += plan.field.sample(s[0], s[1])?.0;
                }
                sum
            };

            // Execute only the first predicted step through the stance
            // feedback controller over one single-stance period.
            let target = steps_world[0];
            let mut next = stance;
            let mut executed = [0.0; 2];
            let mut foot = [0.0; 2];
            for axis in 0..2 {
                let u = stance_feedback(&stance.axes[axis], target[axis], &train.hlip, &gain);
                let (states, feet) = hlip_rollout(&train.hlip, &stance.axes[axis], &[u]);
                next.axes[axis] = states[1];
                foot[axis] = feet[1];
                executed[axis] = u;
            }
            next.stance_foot = foot;
            next.parity ^= 1;
            next.prev_step = executed;
            stance = next;

            // The body advances to the new stance configuration; heading
            // turns toward the predicted path's lookahead point at a bounded
            // rate per step.
            let heading = match local_path_heading(&plan.phi_local) {
                Some(h) => {
                    let delta = wrap_angle(plan.pose.theta + h - pose.theta);
                    pose.theta + delta.clamp(-MAX_TURN_PER_STEP, MAX_TURN_PER_STEP)
                }
                None => pose.theta,
            };
            pose = PlanarPose {
                x: stance.axes[0].mu,
                y: stance.axes[1].mu,
                theta: heading,
            };

            push_event(
                &mut log,
                &mut last_t,
                SimEvent::Step {
                    t,
                    pose,
                    stance,
                    steps_world,
                    executed_foot: foot,
                    l_step,
                    collision_risk,
                },
            );

            if cfg.scene.collides(pose.x, pose.y, cfg.body_radius) {
                log.outcome = Outcome::Collided;
                log.outcome_t = last_t;
                break;
            }
            while goal_idx < cfg.goals.len()
                && dist([pose.x, pose.y], cfg.goals[goal_idx]) <= cfg.goal_radius
            {
                goal_idx += 1;
            }
            if goal_idx == cfg.goals.len() {
                log.outcome = Outcome::Reached;
                log.outcome_t = last_t;
                break;
            }
        }
    }

    log.validate()?;
    Ok(log)
}

/// The three evaluation metrics. Lower is better for all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean lower-level tracking cost (path + step) of the predictions.
    pub feasibility: f64,
    /// Mean summed risk-field value at the predicted footsteps.
    pub collision_risk: f64,
    /// Mean variance of consecutive-waypoint spacings, m^2.
    pub evenness: f64,
}

impl Metrics {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feasibility", self.feasibility),
            ("collision_risk", self.collision_risk),
            ("evenness", self.evenness),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "Metrics.{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// Metrics grouped by scene label plus the overall aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_scene: BTreeMap<String, Metrics>,
    pub aggregate: Metrics,
}

#[derive(Default, Clone, Copy)]
struct MetricsAccum {
    feas: f64,
    risk: f64,
    even: f64,
    frames: usize,
}

impl MetricsAccum {
    fn add(&mut self, feas: f64, risk: f64, even: f64) {
        self.feas += feas;
        self.risk += risk;
        self.even += even;
        self.frames += 1;
    }

    fn finish(&self) -> Result<Metrics> {
        if self.frames == 0 {
            return Err(Error::InvalidArgument("no frames to evaluate".into()));
        }
        let n = self.frames as f64;
        let m = Metrics {
            feasibility: self.feas / n,
            collision_risk: self.risk / n,
            evenness: self.even / n,
        };
        m.validate()?;
        Ok(m)
    }
}

/// One sample through the full prediction pipeline, returning
/// `(feasibility, collision_risk, evenness)`.
fn eval_sample(stack: &PlannerStack, sample: &Sample) -> Result<(f64, f64, f64)> {
    sample.validate()?;
    let train = &stack.train;
    let features = encode_depth(&sample.depth, train.net.pool_rows, train.net.pool_cols);
    let phi = stack
        .planner
        .path_forward(&features, sample.goal, &stack.weights)?;
    let stance = stance_from_sample(sample, &train.hlip, train.w_bar, train.l_bar);
    let state = step_state_features(&stance, &sample.pose);
    let pred = stack.planner.step_forward(&phi, &state, &stack.weights)?;

    let x0 = UniState::new(0.0, 0.0, state[2], 0.0);
    let reference = reference_from_positions(&phi.waypoints);
    let mpc = track(&reference, &x0, &train.unicycle, &TrackOptions::default())?;

    let steps_world: Vec<[f64; 2]> = pred.steps.iter().map(|s| sample.pose.to_world(*s)).collect();
    let solve = crate::hlip::step_sequence_track(
        &StepPlan::new(steps_world.clone(), sample.parity),
        &stance,
        &train.hlip,
        &train.step_weights,
    )?;

    let grid = frustum_grid(
        &sample.pose,
        sample.depth.camera(),
        train.field_resolution,
        train.field_margin,
    )?;
    let points = crate::scene::project(&sample.depth, &sample.pose);
    let field = build_risk_field(&points, grid, train.field_sigma, train.height_band)?;
    let mut risk = 0.0;
    for s in &steps_world {
        risk += field.sample(s[0], s[1])?.0;
    }

    Ok((
        mpc.cost + solve.cost,
        risk,
        waypoint_evenness(&phi.waypoints),
    ))
}

/// Evaluate a labeled dataset: one prediction pipeline pass per sample,
/// metrics averaged per scene label and over everything.
pub fn metrics_eval(dataset: &[(String, Sample)], stack: &PlannerStack) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("evaluation dataset is empty".into()));
    }
    let mut groups: BTreeMap<String, MetricsAccum> = BTreeMap::new();
    let mut all = MetricsAccum::default();
    for (label, sample) in dataset {
        let (feas, risk, even) = eval_sample(stack, sample)?;
        groups.entry(label.clone()).or_default().add(feas, risk, even);
        all.add(feas, risk, even);
    }
    let mut per_scene = BTreeMap::new();
    for (label, acc) in groups {
        per_scene.insert(label, acc.finish()?);
    }
    Ok(MetricsReport {
        per_scene,
        aggregate: all.finish()?,
    })
}

/// Metrics from a rollout log: step frames carry the step cost and risk,
/// the most recent path frame supplies the path cost and evenness.
pub fn metrics_from_log(log: &RolloutLog) -> Result<Metrics> {
    let mut acc = MetricsAccum::default();
    let mut l_path = 0.0;
    let mut evenness = 0.0;
    let mut have_path = false;
    for e in &log.events {
        match e {
            SimEvent::Path {
                l_path: lp,
                evenness: ev,
                ..
            } => {
                l_path = *lp;
                evenness = *ev;
                have_path = true;
            }
            SimEvent::Step {
                l_step,
                collision_risk,
                ..
            } => {
                if have_path {
                    acc.add(l_path + l_step, *collision_risk, evenness);
                }
            }
            SimEvent::Failure { .. } => {}
        }
    }
    acc.finish()
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    scene: Scene2D,
    start: PlanarPose,
    goals: Vec<[f64; 2]>,
    body_radius: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LogLine {
    Header(LogHeader),
    Event(SimEvent),
    Outcome { outcome: Outcome, t: f64 },
}

/// Write a rollout log as JSON lines: one header line, one line per event,
/// one trailing outcome line.
pub fn save_log(path: &Path, log: &RolloutLog) -> Result<()> {
    let mut out = Vec::new();
    let header = LogLine::Header(LogHeader {
        scene: log.scene.clone(),
        start: log.start,
        goals: log.goals.clone(),
        body_radius: log.body_radius,
    });
    writeln!(out, "{}", serde_json::to_string(&header)?).expect("vec write");
    for e in &log.events {
        writeln!(out, "{}", serde_json::to_string(&LogLine::Event(e.clone()))?)
            .expect("vec write");
    }
    let outcome = LogLine::Outcome {
        outcome: log.outcome,
        t: log.outcome_t,
    };
    writeln!(out, "{}", serde_json::to_string(&outcome)?).expect("vec write");
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a rollout log written by [`save_log`].
pub fn load_log(path: &Path) -> Result<RolloutLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut header: Option<LogHeader> = None;
    let mut events = Vec::new();
    let mut outcome: Option<(Outcome, f64)> = None;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(&line)? {
            LogLine::Header(h) => {
                if header.is_some() {
                    return Err(Error::Format {
                        path: path.display().to_string(),
                        detail: "duplicate header line".into(),
                    });
                }
                header = Some(h);
            }
            LogLine::Event(e) => events.push(e),
            LogLine::Outcome { outcome: o, t } => {
                if outcome.is_some() {
                    return Err(Error::Format {
                        path: path.display().to_string(),
                        detail: "outcome recorded more than once".into(),
                    });
                }
                outcome = Some((o, t));
            }
        }
    }
    let header = header.ok_or_else(|| Error::Format {
        path: path.display().to_string(),
        detail: "missing header line".into(),
    })?;
    let (outcome, outcome_t) = outcome.ok_or_else(|| Error::Format {
        path: path.display().to_string(),
        detail: "missing outcome line".into(),
    })?;
    let log = RolloutLog {
        scene: header.scene,
        start: header.start,
        goals: header.goals,
        body_radius: header.body_radius,
        events,
        outcome,
        outcome_t,
    };
    log.validate()?;
    Ok(log)
}
