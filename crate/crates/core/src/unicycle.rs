//! Discrete unicycle dynamics and an iLQR tracking solver.
//!
//! The body planner treats the robot as a planar unicycle with state
//! `[x, y, v, theta]` driven by angular velocity and linear acceleration.
//! Given the network's waypoints as a reference, `track` solves the
//! finite-horizon tracking problem with iLQR: linearize the dynamics around
//! the current rollout, run a Riccati backward pass (with Levenberg-style
//! regularization), and line-search the forward pass so the cost never
//! increases.  The optimizer's trajectory is dynamically feasible by
//! construction and is consumed by the learning loop as a constant target.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
}

impl UniState {
    pub fn new(x: f64, y: f64, v: f64, theta: f64) -> Self {
        UniState { x, y, v, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.theta.is_finite()
    }

    fn to_vec(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.v, self.theta)
    }

}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniControl {
    pub omega: f64,
    pub accel: f64,
}

impl UniControl {
    pub fn new(omega: f64, accel: f64) -> Self {
        UniControl { omega, accel }
    }

    pub const ZERO: UniControl = UniControl {
        omega: 0.0,
        accel: 0.0,
    };

    fn to_vec(self) -> Vector2<f64> {
        Vector2::new(self.omega, self.accel)
    }
}

/// One step of the discrete unicycle map.  Position advances with the
/// pre-update velocity and heading; velocity and heading then integrate their
/// controls.
pub fn step_dynamics(s: &UniState, u: &UniControl, dt: f64) -> UniState {
    UniState {
        x: s.x + s.v * s.theta.cos() * dt,
        y: s.y + s.v * s.theta.sin() * dt,
        v: s.v + u.accel * dt,
        theta: s.theta + u.omega * dt,
    }
}

/// Jacobians of [`step_dynamics`] with respect to state and control.
fn linearize(s: &UniState, dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let (st, ct) = s.theta.sin_cos();
    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, ct * dt, -s.v * st * dt,
        0.0, 1.0, st * dt,  s.v * ct * dt,
        0.0, 0.0, 1.0,      0.0,
        0.0, 0.0, 0.0,      1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        0.0, 0.0,
        0.0, 0.0,
        0.0, dt,
        dt,  0.0,
    );
    (a, b)
}

/// Quadratic tracking weights and horizon for [`track`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcWeights {
    pub q: Matrix4<f64>,
    pub r: Matrix2<f64>,
    pub dt: f64,
    pub n: usize,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self::planner_default()
    }
}

impl MpcWeights {
    /// Positions tracked with unit weight, velocity and heading free,
    /// mild effort penalty; horizon matching the eight-waypoint planner at
    /// 0.25 s per step.
    pub fn planner_default() -> Self {
        MpcWeights {
            q: Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 0.0, 0.0)),
            r: Matrix2::from_diagonal(&Vector2::new(0.1, 0.1)),
            dt: 0.25,
            n: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mpc dt must be positive, got {}",
                self.dt
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "mpc horizon must be at least 2, got {}",
                self.n
            )));
        }
        let sym_err = (self.q - self.q.transpose()).abs().max();
        if sym_err > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "state weight Q must be symmetric (asymmetry {sym_err:.2e})"
            )));
        }
        let eig = self.q.symmetric_eigenvalues();
        if eig.min() < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "state weight Q must be positive semidefinite (min eigenvalue {:.2e})",
                eig.min()
            )));
        }
        let sym_err_r = (self.r - self.r.transpose()).abs().max();
        if sym_err_r > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "control weight R must be symmetric (asymmetry {sym_err_r:.2e})"
            )));
        }
        if self.r.cholesky().is_none() {
            return Err(Error::InvalidArgument(
                "control weight R must be positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Reference trajectory entry: full 4D target `[x, y, v, theta]`.  Rows of Q
/// that are zero make the matching entries irrelevant.
pub type Waypoint4 = [f64; 4];

/// Lifts planar waypoints into 4D references with zero velocity/heading
/// targets (meant for position-only Q).
pub fn reference_from_positions(points: &[[f64; 2]]) -> Vec<Waypoint4> {
    points.iter().map(|p| [p[0], p[1], 0.0, 0.0]).collect()
}

/// Exact tracking cost: per-state quadratic error plus per-control effort.
/// States and reference must both have the horizon length; controls one less.
pub fn l_path_cost(
    states: &[UniState],
    controls: &[UniControl],
    reference: &[Waypoint4],
    weights: &MpcWeights,
) -> Result<f64> {
    if states.len() != reference.len() || states.len() != controls.len() + 1 {
        return Err(Error::shape(
            "l_path_cost",
            format!(
                "got {} states, {} controls, {} reference entries",
                states.len(),
                controls.len(),
                reference.len()
            ),
        ));
    }
    let mut cost = 0.0;
    for (s, r) in states.iter().zip(reference) {
        let e = s.to_vec() - Vector4::new(r[0], r[1], r[2], r[3]);
        cost += (e.transpose() * weights.q * e)[0];
    }
    for u in controls {
        let uv = u.to_vec();
        cost += (uv.transpose() * weights.r * uv)[0];
    }
    Ok(cost)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpcResult {
    /// Optimized, dynamically consistent trajectory; first entry is the
    /// given initial state.
    pub states: Vec<UniState>,
    pub controls: Vec<UniControl>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration (cost, regularization, step length) when tracing.
    pub trace: Option<Vec<TraceRow>>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub mu: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct TrackOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub warm_start: Option<Vec<UniControl>>,
    pub trace: bool,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            max_iters: 100,
            tol: 1e-8,
            warm_start: None,
            trace: false,
        }
    }
}

const MU_MIN: f64 = 1e-8;
const MU_MAX: f64 = 1e8;

fn rollout(x0: &UniState, controls: &[UniControl], dt: f64) -> Vec<UniState> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    for u in controls {
        let next = step_dynamics(states.last().unwrap(), u, dt);
        states.push(next);
    }
    states
}

/// iLQR tracking of a waypoint reference.
///
/// Accepted iterations strictly decrease the cost; the solver stops when the
/// relative decrease falls below `tol`, the predicted improvement vanishes,
/// or the iteration/regularization budget runs out.  Non-convergence is not
/// an error — the best iterate is returned with `converged = false`.
pub fn track(
    reference: &[Waypoint4],
    x0: &UniState,
    weights: &MpcWeights,
    opts: &TrackOptions,
) -> Result<MpcResult> {
    weights.validate()?;
    if reference.len() != weights.n {
        return Err(Error::shape(
            "track",
            format!("reference has {} waypoints, horizon is {}", reference.len(), weights.n),
        ));
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("track initial state".into()));
    }
    for (k, r) in reference.iter().enumerate() {
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("reference waypoint {k}")));
        }
    }

    let n = weights.n;
    let dt = weights.dt;
    let mut controls = match &opts.warm_start {
        Some(w) if w.len() == n - 1 => w.clone(),
        Some(w) => {
            return Err(Error::shape(
                "track",
                format!("warm start has {} controls, horizon wants {}", w.len(), n - 1),
            ))
        }
        None => vec![UniControl::ZERO; n - 1],
    };
    let mut states = rollout(x0, &controls, dt);
    let mut cost = l_path_cost(&states, &controls, reference, weights)?;
    if !cost.is_finite() {
        return Err(Error::NonFinite(format!("initial rollout cost {cost}")));
    }

    let mut mu = MU_MIN;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace: Vec<TraceRow> = Vec::new();

    let q2 = 2.0 * weights.q;
    let r2 = 2.0 * weights.r;

    'outer: for iter in 1..=opts.max_iters {
        iterations = iter;

        // Backward Riccati pass; on an indefinite control Hessian, raise the
        // regularization and retry.
        let (ks, kfs, d1, d2) = loop {
            match backward_pass(&states, &controls, reference, weights, &q2, &r2, mu) {
                Some(out) => break out,
                None => {
                    mu *= 10.0;
                    if mu > MU_MAX {
                        break 'outer;
                    }
                }
            }
        };

        // Predicted improvement already negligible: stationary point.
        let scale = 1.0 + cost.abs();
        if d1.abs() < 1e-12 * scale && d2.abs() < 1e-12 * scale {
            converged = true;
            if opts.trace {
                trace.push(TraceRow { iteration: iter, cost, mu, alpha: 0.0 });
            }
            break;
        }

        // Forward pass with backtracking line search; require strict decrease.
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..12 {
            let mut new_controls = Vec::with_capacity(n - 1);
            let mut new_states = Vec::with_capacity(n);
            new_states.push(*x0);
            let mut ok = true;
            for k in 0..n - 1 {
                let dx = new_states[k].to_vec() - states[k].to_vec();
                let du = alpha * ks[k] + kfs[k] * dx;
                let u = UniControl::new(controls[k].omega + du[0], controls[k].accel + du[1]);
                if !u.omega.is_finite() || !u.accel.is_finite() {
                    ok = false;
                    break;
                }
                let next = step_dynamics(&new_states[k], &u, dt);
                new_controls.push(u);
                new_states.push(next);
            }
            if ok {
                let new_cost = l_path_cost(&new_states, &new_controls, reference, weights)?;
                if !new_cost.is_finite() {
                    return Err(Error::NonFinite(format!("line-search cost {new_cost}")));
                }
                if new_cost < cost {
                    let rel = (cost - new_cost) / cost.abs().max(1e-300);
                    states = new_states;
                    controls = new_controls;
                    cost = new_cost;
                    mu = (mu / 10.0).max(MU_MIN);
                    accepted = true;
                    if opts.trace {
                        trace.push(TraceRow { iteration: iter, cost, mu, alpha });
                    }
                    if rel < opts.tol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            alpha *= 0.5;
        }

        if !accepted {
            mu *= 10.0;
            if mu > MU_MAX {
                break;
            }
        }
    }

    Ok(MpcResult {
        states,
        controls,
        cost,
        iterations,
        converged,
        trace: opts.trace.then_some(trace),
    })
}

type BackwardOut = (Vec<Vector2<f64>>, Vec<Matrix2x4<f64>>, f64, f64);

/// One Riccati sweep.  Returns feedforward gains, feedback gains, and the
/// expected-improvement terms (d1 = sum k'Qu, d2 = sum k'Quu k / 2), or None
/// when the regularized control Hessian is not positive definite.
#[allow(clippy::too_many_arguments)]
fn backward_pass(
    states: &[UniState],
    controls: &[UniControl],
    reference: &[Waypoint4],
    weights: &MpcWeights,
    q2: &Matrix4<f64>,
    r2: &Matrix2<f64>,
    mu: f64,
) -> Option<BackwardOut> {
    let n = states.len();
    let err = |k: usize| {
        let r = reference[k];
        states[k].to_vec() - Vector4::new(r[0], r[1], r[2], r[3])
    };

    let mut vx: Vector4<f64> = q2 * err(n - 1);
    let mut vxx: Matrix4<f64> = *q2;
    let mut ks = vec![Vector2::zeros(); n - 1];
    let mut kfs = vec![Matrix2x4::zeros(); n - 1];
    let (mut d1, mut d2) = (0.0, 0.0);

    for k in (0..n - 1).rev() {
        let (a, b) = linearize(&states[k], weights.dt);
        let qx = q2 * err(k) + a.transpose() * vx;
        let qu = r2 * controls[k].to_vec() + b.transpose() * vx;
        let qxx = q2 + a.transpose() * vxx * a;
        let qux = b.transpose() * vxx * a;
        let quu = r2 + b.transpose() * vxx * b;
        let quu_reg = quu + Matrix2::identity() * mu;

        let chol = quu_reg.cholesky()?;
        let kff = -chol.solve(&qu);
        let kfb = -chol.solve(&qux);

        d1 += kff.dot(&qu);
        d2 += 0.5 * (kff.transpose() * quu * kff)[0];

        vx = qx
            + kfb.transpose() * quu * kff
            + kfb.transpose() * qu
            + qux.transpose() * kff;
        vxx = qxx
            + kfb.transpose() * quu * kfb
            + kfb.transpose() * qux
            + qux.transpose() * kfb;
        vxx = (vxx + vxx.transpose()) * 0.5;

        ks[k] = kff;
        kfs[k] = kfb;
    }
    Some((ks, kfs, d1, d2))
}

/// Largest per-coordinate defect between the stored states and a re-rollout
/// of the stored controls — zero for any result produced by [`track`].
pub fn dynamics_defect(result: &MpcResult, dt: f64) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..result.controls.len() {
        let next = step_dynamics(&result.states[k], &result.controls[k], dt);
        let s = &result.states[k + 1];
        worst = worst
            .max((next.x - s.x).abs())
            .max((next.y - s.y).abs())
            .max((next.v - s.v).abs())
            .max((next.theta - s.theta).abs());
    }
    worst
}
