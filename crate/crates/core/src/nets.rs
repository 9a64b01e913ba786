//! The two trainable planners: a path network mapping pooled depth features
//! and a goal to a waypoint sequence, and a step network mapping waypoints
//! plus walking state to footstep locations.
//!
//! Both are small fully connected networks with tanh hidden layers, built on
//! the [`autodiff`](crate::autodiff) graph so gradients flow end to end —
//! in particular from the step network's loss back through the waypoints
//! into the path network's weights. Outputs live in the robot frame
//! (x forward, y left); callers convert to world coordinates with the
//! current pose.
//!
//! Network parameters are stored as named tensors in a flat
//! [`Bindings`] map (`path.w1`, `path.b1`, ..., `step.b3`), which is also
//! the on-disk checkpoint format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::hlip::StanceState;
use crate::scene::{DepthFrame, PlanarPose};

/// Number of scalar walking-state features fed to the step network:
/// stance-foot offset (2), velocity (2), stance-parity sign, and a bias.
pub const STATE_FEATURE_DIM: usize = 6;

/// Architecture hyperparameters shared by both networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Depth pooling grid height (cells along the image's vertical axis).
    pub pool_rows: usize,
    /// Depth pooling grid width (cells along the image's horizontal axis).
    pub pool_cols: usize,
    /// Number of predicted path waypoints K.
    pub waypoints: usize,
    /// Number of predicted footsteps M.
    pub steps: usize,
    /// Hidden layer widths of the path network.
    pub path_hidden: [usize; 2],
    /// Hidden layer widths of the step network.
    pub step_hidden: [usize; 2],
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            pool_rows: 8,
            pool_cols: 16,
            waypoints: 8,
            steps: 6,
            path_hidden: [256, 128],
            step_hidden: [64, 64],
        }
    }
}

impl NetConfig {
    /// A deliberately tiny architecture for exhaustive finite-difference
    /// sweeps in tests.
    pub fn tiny() -> Self {
        Self {
            pool_rows: 2,
            pool_cols: 4,
            waypoints: 3,
            steps: 2,
            path_hidden: [8, 8],
            step_hidden: [6, 6],
        }
    }

    /// Length of the pooled depth feature vector.
    pub fn feature_dim(&self) -> usize {
        self.pool_rows * self.pool_cols
    }

    /// Input width of the path network (features plus goal).
    pub fn path_input_dim(&self) -> usize {
        self.feature_dim() + 2
    }

    /// Input width of the step network (flattened waypoints plus state).
    pub fn step_input_dim(&self) -> usize {
        2 * self.waypoints + STATE_FEATURE_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("pool_rows", self.pool_rows),
            ("pool_cols", self.pool_cols),
            ("waypoints", self.waypoints),
            ("steps", self.steps),
            ("path_hidden[0]", self.path_hidden[0]),
            ("path_hidden[1]", self.path_hidden[1]),
            ("step_hidden[0]", self.step_hidden[0]),
            ("step_hidden[1]", self.step_hidden[1]),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::InvalidArgument(format!(
                    "NetConfig.{name} must be positive"
                )));
            }
        }
        if self.waypoints < 2 {
            return Err(Error::InvalidArgument(
                "NetConfig.waypoints must be at least 2 (losses need a polyline)".into(),
            ));
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter tensor, in checkpoint order.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        let mut mlp = |prefix: &str, dims: [usize; 4]| {
            for layer in 0..3 {
                let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
                specs.push((format!("{prefix}.w{}", layer + 1), vec![fan_out, fan_in]));
                specs.push((format!("{prefix}.b{}", layer + 1), vec![fan_out]));
            }
        };
        mlp(
            "path",
            [
                self.path_input_dim(),
                self.path_hidden[0],
                self.path_hidden[1],
                2 * self.waypoints,
            ],
        );
        mlp(
            "step",
            [
                self.step_input_dim(),
                self.step_hidden[0],
                self.step_hidden[1],
                2 * self.steps,
            ],
        );
        specs
    }
}

/// Predicted path: K waypoints in the robot frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPrediction {
    pub waypoints: Vec<[f64; 2]>,
}

/// Predicted footsteps: M locations in the robot frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPrediction {
    pub steps: Vec<[f64; 2]>,
}

/// Average-pool a depth image to `rows x cols` cells, then squash each cell
/// mean through `f = 1 / (1 + d)` so far returns map near zero and close
/// obstacles near one. Cell boundaries are proportional, so grids that do
/// not divide the image evenly simply get cells of slightly uneven size
/// (never empty: boundaries are clamped to cover at least one pixel).
pub fn encode_depth(frame: &DepthFrame, rows: usize, cols: usize) -> Vec<f64> {
    let (h, w) = (frame.height(), frame.width());
    let mut features = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let v0 = (r * h / rows).min(h - 1);
        let v1 = ((r + 1) * h / rows).max(v0 + 1).min(h);
        for c in 0..cols {
            let u0 = (c * w / cols).min(w - 1);
            let u1 = ((c + 1) * w / cols).max(u0 + 1).min(w);
            let mut sum = 0.0;
            for v in v0..v1 {
                for u in u0..u1 {
                    sum += frame.at(v, u);
                }
            }
            let mean = sum / ((v1 - v0) * (u1 - u0)) as f64;
            features.push(1.0 / (1.0 + mean));
        }
    }
    features
}

/// Walking-state features for the step network, in the robot frame of
/// `pose`: stance-foot offset from the center of mass, velocity, the sign
/// of the first step's lateral alternation, and a constant bias.
pub fn step_state_features(state: &StanceState, pose: &PlanarPose) -> [f64; 6] {
    let (ct, st) = (pose.theta.cos(), pose.theta.sin());
    let rot = |x: f64, y: f64| [ct * x + st * y, -st * x + ct * y];
    let p = rot(state.axes[0].p, state.axes[1].p);
    let v = rot(state.axes[0].v, state.axes[1].v);
    let alpha0 = if state.parity == 0 { 1.0 } else { -1.0 };
    [p[0], p[1], v[0], v[1], alpha0, 1.0]
}

/// Append one `tanh`-hidden three-layer perceptron to `graph`, reading its
/// parameters from inputs named `{prefix}.w1 ... {prefix}.b3`.
fn append_mlp(
    graph: &mut Graph,
    prefix: &str,
    x: NodeId,
    dims: [usize; 4],
) -> Result<NodeId> {
    let mut h = x;
    for layer in 0..3 {
        let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
        let w = graph.input(&format!("{prefix}.w{}", layer + 1), vec![fan_out, fan_in])?;
        let b = graph.input(&format!("{prefix}.b{}", layer + 1), vec![fan_out])?;
        let wx = graph.matmul(w, h)?;
        h = graph.add(wx, b)?;
        if layer < 2 {
            h = graph.tanh(h)?;
        }
    }
    Ok(h)
}

/// Append the path network. Declares inputs `features` (pooled depth) and
/// `goal`, plus the `path.*` parameters; returns the `[K, 2]` waypoint node.
pub fn append_path_net(graph: &mut Graph, cfg: &NetConfig) -> Result<NodeId> {
    let features = graph.input("features", vec![cfg.feature_dim()])?;
    let goal = graph.input("goal", vec![2])?;
    let x = graph.concat(features, goal)?;
    let out = append_mlp(
        graph,
        "path",
        x,
        [
            cfg.path_input_dim(),
            cfg.path_hidden[0],
            cfg.path_hidden[1],
            2 * cfg.waypoints,
        ],
    )?;
    graph.reshape(out, vec![cfg.waypoints, 2])
}

/// Append the step network downstream of an existing `[K, 2]` waypoint node.
/// Declares the `state` input and the `step.*` parameters; returns the
/// `[M, 2]` footstep node.
pub fn append_step_net_from(graph: &mut Graph, cfg: &NetConfig, phi: NodeId) -> Result<NodeId> {
    let flat = graph.reshape(phi, vec![2 * cfg.waypoints])?;
    let state = graph.input("state", vec![STATE_FEATURE_DIM])?;
    let x = graph.concat(flat, state)?;
    let out = append_mlp(
        graph,
        "step",
        x,
        [
            cfg.step_input_dim(),
            cfg.step_hidden[0],
            cfg.step_hidden[1],
            2 * cfg.steps,
        ],
    )?;
    graph.reshape(out, vec![cfg.steps, 2])
}

/// Nodes of the two networks chained end to end in one graph.
#[derive(Debug, Clone, Copy)]
pub struct ComposedNodes {
    /// `[K, 2]` waypoint prediction.
    pub phi: NodeId,
    /// `[M, 2]` footstep prediction, downstream of `phi`.
    pub steps: NodeId,
}

/// Append the full pipeline `depth features -> waypoints -> footsteps` to
/// one graph, so a single backward pass reaches both parameter sets.
pub fn append_composed(graph: &mut Graph, cfg: &NetConfig) -> Result<ComposedNodes> {
    let phi = append_path_net(graph, cfg)?;
    let steps = append_step_net_from(graph, cfg, phi)?;
    Ok(ComposedNodes { phi, steps })
}

/// Draw fresh parameters: uniform in `±sqrt(6 / fan_in)` for weight
/// matrices, zero for biases. Deterministic in the seed. All tensors are
/// marked as requiring gradients.
pub fn init_weights(cfg: &NetConfig, seed: u64) -> Bindings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Bindings::new();
    for (name, shape) in cfg.param_specs() {
        let tensor = if shape.len() == 2 {
            let limit = (6.0 / shape[1] as f64).sqrt();
            let data: Vec<f64> = (0..shape[0] * shape[1])
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Tensor::from_vec(shape, data).expect("sized by construction")
        } else {
            Tensor::zeros(shape)
        };
        weights.insert(name, tensor.with_grad());
    }
    weights
}

/// Both planner networks with their graphs built once up front.
pub struct Planner {
    cfg: NetConfig,
    path_graph: Graph,
    path_out: NodeId,
    step_graph: Graph,
    step_out: NodeId,
}

impl Planner {
    pub fn new(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut path_graph = Graph::new();
        let path_out = append_path_net(&mut path_graph, &cfg)?;
        let mut step_graph = Graph::new();
        let phi_in = step_graph.input("phi", vec![cfg.waypoints, 2])?;
        let step_out = append_step_net_from(&mut step_graph, &cfg, phi_in)?;
        Ok(Self { cfg, path_graph, path_out, step_graph, step_out })
    }

    pub fn cfg(&self) -> &NetConfig {
        &self.cfg
    }

    /// Predict waypoints from pooled depth features and a robot-frame goal.
    pub fn path_forward(
        &self,
        features: &[f64],
        goal: [f64; 2],
        weights: &Bindings,
    ) -> Result<PathPrediction> {
        if features.len() != self.cfg.feature_dim() {
            return Err(Error::shape(
                "path_forward",
                format!(
                    "expected {} depth features, got {}",
                    self.cfg.feature_dim(),
                    features.len()
                ),
            ));
        }
        let mut bindings = weights.clone();
        bindings.insert("features".into(), Tensor::vector(features));
        bindings.insert("goal".into(), Tensor::vector(&goal));
        let eval = self.path_graph.evaluate(&bindings)?;
        Ok(PathPrediction {
            waypoints: eval.value(self.path_out).to_points()?,
        })
    }

    /// Predict footsteps from waypoints and walking-state features.
    pub fn step_forward(
        &self,
        phi: &PathPrediction,
        state_features: &[f64; STATE_FEATURE_DIM],
        weights: &Bindings,
    ) -> Result<StepPrediction> {
        if phi.waypoints.len() != self.cfg.waypoints {
            return Err(Error::shape(
                "step_forward",
                format!(
                    "expected {} waypoints, got {}",
                    self.cfg.waypoints,
                    phi.waypoints.len()
                ),
            ));
        }
        let mut bindings = weights.clone();
        bindings.insert("phi".into(), Tensor::from_points(&phi.waypoints));
        bindings.insert("state".into(), Tensor::vector(state_features));
        let eval = self.step_graph.evaluate(&bindings)?;
        Ok(StepPrediction {
            steps: eval.value(self.step_out).to_points()?,
        })
    }
}
