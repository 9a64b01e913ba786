//! Step-to-step footstep planning for a walking robot.
//!
//! The robot's lateral/sagittal balance between touchdowns is modeled as a
//! linear inverted pendulum with a fixed center-of-mass height. Integrating
//! the pendulum across one single-support phase and relabeling the stance
//! foot at touchdown yields an exact discrete *step-to-step* linear system:
//! one state per horizontal axis, advanced once per footstep. On top of that
//! map this module provides
//!
//! * [`s2s_matrices`] — the exact discrete transition `(A, B)`,
//! * [`rollout`] — iterate the map and track stance-foot positions,
//! * [`step_sequence_track`] — a condensed least-squares tracker that turns a
//!   desired footstep sequence into the closest dynamically consistent one,
//! * [`stance_feedback`] — per-step deadbeat feedback used when executing the
//!   first planned step in closed loop.
//!
//! The two horizontal axes are decoupled: the same scalar machinery runs once
//! for x and once for y. Double support is treated as instantaneous.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the step-to-step model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HlipParams {
    /// Center-of-mass height above the ground plane, meters.
    pub z0: f64,
    /// Duration of one single-support phase, seconds.
    pub t_ssp: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl Default for HlipParams {
    fn default() -> Self {
        Self::desk_default()
    }
}

impl HlipParams {
    /// Defaults sized for a desk-scale biped (~0.6 m tall).
    pub fn desk_default() -> Self {
        Self { z0: 0.4, t_ssp: 0.3, gravity: 9.81 }
    }

    /// Natural frequency `sqrt(gravity / z0)` of the pendulum, 1/s.
    pub fn lambda(&self) -> f64 {
        (self.gravity / self.z0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("z0", self.z0), ("t_ssp", self.t_ssp), ("gravity", self.gravity)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "HlipParams.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Pre-touchdown pendulum state along one horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlipState {
    /// Absolute center-of-mass position, meters.
    pub mu: f64,
    /// Stance-foot position relative to the center of mass, meters
    /// (stance foot = `mu + p`).
    pub p: f64,
    /// Center-of-mass velocity, m/s.
    pub v: f64,
}

impl HlipState {
    pub fn new(mu: f64, p: f64, v: f64) -> Self {
        Self { mu, p, v }
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite() && self.p.is_finite() && self.v.is_finite()
    }

    /// Absolute stance-foot position for this state.
    pub fn foot(&self) -> f64 {
        self.mu + self.p
    }

    fn to_vec(self) -> Vector3<f64> {
        Vector3::new(self.mu, self.p, self.v)
    }

    fn from_vec(x: Vector3<f64>) -> Self {
        Self { mu: x[0], p: x[1], v: x[2] }
    }
}

/// A sequence of planned footsteps in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    /// Planned stance-foot locations, world xy, meters. One entry per step.
    pub steps: Vec<[f64; 2]>,
    /// Which foot takes the *first* step of the plan: 0 or 1.
    pub parity: u8,
    /// Tracking cost split by axis `[x, y]` (zero for hand-built plans).
    pub costs: [f64; 2],
}

impl StepPlan {
    pub fn new(steps: Vec<[f64; 2]>, parity: u8) -> Self {
        Self { steps, parity, costs: [0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidArgument("StepPlan needs at least one step".into()));
        }
        if self.parity > 1 {
            return Err(Error::InvalidArgument(format!(
                "StepPlan.parity must be 0 or 1, got {}",
                self.parity
            )));
        }
        if !self.steps.iter().all(|s| s[0].is_finite() && s[1].is_finite()) {
            return Err(Error::NonFinite("StepPlan.steps".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Full walking state fed to the step tracker: both axes of the pendulum
/// plus bookkeeping for the stance foot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceState {
    /// Pendulum state along world x and y.
    pub axes: [HlipState; 2],
    /// Absolute stance-foot position, world xy, meters.
    pub stance_foot: [f64; 2],
    /// Which foot is currently in stance: 0 or 1.
    pub parity: u8,
    /// Step displacement executed on the previous step, world xy, meters.
    /// Used to regularize the first planned step; zero when standing.
    pub prev_step: [f64; 2],
}

impl StanceState {
    /// A robot standing still: zero velocity, center of mass above `com`,
    /// stance foot at `stance_foot`.
    pub fn standing(com: [f64; 2], stance_foot: [f64; 2], parity: u8) -> Self {
        Self {
            axes: [
                HlipState::new(com[0], stance_foot[0] - com[0], 0.0),
                HlipState::new(com[1], stance_foot[1] - com[1], 0.0),
            ],
            stance_foot,
            parity,
            prev_step: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.axes.iter().all(HlipState::is_finite)
            && self.stance_foot.iter().all(|v| v.is_finite())
            && self.prev_step.iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::NonFinite("StanceState".into()));
        }
        if self.parity > 1 {
            return Err(Error::InvalidArgument(format!(
                "StanceState.parity must be 0 or 1, got {}",
                self.parity
            )));
        }
        Ok(())
    }
}

/// Weights of the step-tracking objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepWeights {
    /// Weight on squared foot-placement error.
    pub q_s: f64,
    /// Weight on squared step-to-step control change (must be positive; it
    /// is what keeps the normal equations nonsingular).
    pub r_s: f64,
}

impl Default for StepWeights {
    fn default() -> Self {
        Self { q_s: 1.0, r_s: 0.01 }
    }
}

impl StepWeights {
    pub fn validate(&self) -> Result<()> {
        if !self.q_s.is_finite() || self.q_s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "StepWeights.q_s must be finite and >= 0, got {}",
                self.q_s
            )));
        }
        if !self.r_s.is_finite() || self.r_s <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "StepWeights.r_s must be finite and > 0, got {}",
                self.r_s
            )));
        }
        Ok(())
    }
}

/// Output of [`step_sequence_track`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSolve {
    /// The feasible plan closest to the requested one; `costs` holds the
    /// per-axis objective values at the optimum.
    pub plan: StepPlan,
    /// Optimal step displacements, world xy, one per planned step.
    pub controls: Vec<[f64; 2]>,
    /// Total objective value (sum over both axes).
    pub cost: f64,
}

/// Exact one-step transition of the pendulum state `[mu, p, v]` under a step
/// displacement `u` (new stance foot = old stance foot + `u`).
///
/// The step happens at the *start* of the interval: the stance foot is
/// relabeled, then the pendulum swings freely for `t_ssp` seconds. With
/// `C = cosh(lambda t_ssp)` and `S = sinh(lambda t_ssp)`:
///
/// ```text
/// A = [[1, 1-C,  S/l ]       B = [ 1-C ]
///      [0,  C,  -S/l ]           [  C  ]
///      [0, -l S,  C  ]]          [-l S ]
/// ```
pub fn s2s_matrices(params: &HlipParams) -> (Matrix3<f64>, Vector3<f64>) {
    let l = params.lambda();
    let c = (l * params.t_ssp).cosh();
    let s = (l * params.t_ssp).sinh();
    let a = Matrix3::new(
        1.0, 1.0 - c, s / l, //
        0.0, c, -s / l, //
        0.0, -l * s, c,
    );
    let b = Vector3::new(1.0 - c, c, -l * s);
    (a, b)
}

/// The `[p, v]` block of [`s2s_matrices`]: the controllable subsystem the
/// deadbeat gain acts on (`mu` is a pure integrator of the rest).
pub fn s2s_sub_matrices(params: &HlipParams) -> (Matrix2<f64>, Vector2<f64>) {
    let (a, b) = s2s_matrices(params);
    (
        Matrix2::new(a[(1, 1)], a[(1, 2)], a[(2, 1)], a[(2, 2)]),
        Vector2::new(b[1], b[2]),
    )
}

/// Iterate the step-to-step map from `x0` under the given step displacements.
///
/// Returns the state after each step (length `u_seq.len() + 1`, including
/// `x0`) and the matching absolute stance-foot positions. Foot positions
/// telescope exactly: `foot[k+1] = foot[k] + u_seq[k]`.
pub fn rollout(params: &HlipParams, x0: &HlipState, u_seq: &[f64]) -> (Vec<HlipState>, Vec<f64>) {
    let (a, b) = s2s_matrices(params);
    let mut states = Vec::with_capacity(u_seq.len() + 1);
    let mut feet = Vec::with_capacity(u_seq.len() + 1);
    let mut x = x0.to_vec();
    let mut foot = x0.foot();
    states.push(*x0);
    feet.push(foot);
    for &u in u_seq {
        x = a * x + b * u;
        // The new stance foot is *defined* as the old one displaced by u;
        // mu + p of the advanced state agrees up to rounding.
        foot += u;
        states.push(HlipState::from_vec(x));
        feet.push(foot);
    }
    (states, feet)
}

/// The unique period-1 gait for a constant per-step displacement `d`:
/// returns `(p*, v*)` such that stepping by `d` from `[mu, p*, v*]` restores
/// `p*` and `v*` while the center of mass advances by exactly `d`.
pub fn periodic_orbit(params: &HlipParams, d: f64) -> (f64, f64) {
    let (a_sub, b_sub) = s2s_sub_matrices(params);
    // (I - A_sub) x* = B_sub d. det(I - A_sub) = 2 (1 - cosh) < 0, so the
    // 2x2 system is always solvable in closed form.
    let m = Matrix2::identity() - a_sub;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let rhs = b_sub * d;
    let p = (m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det;
    let v = (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det;
    (p, v)
}

/// Track a desired footstep sequence with the closest dynamically consistent
/// one.
///
/// Per axis this solves the condensed least-squares problem
///
/// ```text
/// min_u  sum_k q_s (foot_k(u) - target_k)^2  +  r_s (u_k - u_{k-1})^2
/// ```
///
/// where `foot_k(u)` telescopes from the current stance foot and `u_{-1}` is
/// the previously executed step from `state.prev_step`. The normal equations
/// are symmetric positive definite for `r_s > 0` and solved by Cholesky
/// factorization. The two axes decouple and are solved independently.
pub fn step_sequence_track(
    targets: &StepPlan,
    state: &StanceState,
    params: &HlipParams,
    weights: &StepWeights,
) -> Result<StepSolve> {
    targets.validate()?;
    state.validate()?;
    params.validate()?;
    weights.validate()?;

    let m = targets.len();
    let mut feet = vec![[0.0; 2]; m];
    let mut controls = vec![[0.0; 2]; m];
    let mut costs = [0.0; 2];

    for axis in 0..2 {
        let f0 = state.stance_foot[axis];
        let goal: Vec<f64> = targets.steps.iter().map(|s| s[axis]).collect();
        let u = solve_axis(&goal, f0, state.prev_step[axis], weights)?;
        // Reconstruct feet by telescoping and evaluate the objective.
        let mut f = f0;
        let mut prev = state.prev_step[axis];
        let mut cost = 0.0;
        for k in 0..m {
            f += u[k];
            feet[k][axis] = f;
            controls[k][axis] = u[k];
            let e = f - goal[k];
            let du = u[k] - prev;
            cost += weights.q_s * e * e + weights.r_s * du * du;
            prev = u[k];
        }
        costs[axis] = cost;
    }

    Ok(StepSolve {
        plan: StepPlan { steps: feet, parity: targets.parity, costs },
        controls,
        cost: costs[0] + costs[1],
    })
}

/// Solve one axis of the tracking problem. `goal` holds the target foot
/// positions, `f0` the current stance foot, `u_prev` the last executed step.
fn solve_axis(goal: &[f64], f0: f64, u_prev: f64, weights: &StepWeights) -> Result<Vec<f64>> {
    let m = goal.len();
    // H = q_s L'L + r_s D'D with L lower-triangular ones (cumulative sum)
    // and D the first-difference matrix with u_prev folded into the rhs.
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    // (L'L)[i][j] = m - max(i, j); (L' r)[i] = sum_{k >= i} r[k].
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] = weights.q_s * (m - i.max(j)) as f64;
        }
    }
    let mut acc = 0.0;
    for i in (0..m).rev() {
        acc += goal[i] - f0;
        rhs[i] = weights.q_s * acc;
    }
    // D'D is tridiagonal: 2 on the diagonal except the last entry (1),
    // -1 off-diagonal; D' e_0 u_prev adds r_s u_prev to the first row.
    for i in 0..m {
        let diag = if i + 1 < m { 2.0 } else { 1.0 };
        h[(i, i)] += weights.r_s * diag;
        if i + 1 < m {
            h[(i, i + 1)] -= weights.r_s;
            h[(i + 1, i)] -= weights.r_s;
        }
    }
    rhs[0] += weights.r_s * u_prev;

    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("step tracking normal equations".into()))?;
    let u = chol.solve(&rhs);
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("step tracking solution".into()));
    }
    Ok(u.as_slice().to_vec())
}

/// Gain placing both eigenvalues of the closed-loop `[p, v]` subsystem at
/// zero, so placement errors die out in at most two steps.
pub fn deadbeat_gain(params: &HlipParams) -> [f64; 2] {
    let l = params.lambda();
    let c = (l * params.t_ssp).cosh();
    let s = (l * params.t_ssp).sinh();
    [-1.0, c / (l * s)]
}

/// Step displacement executing one step toward `target_next_foot` along one
/// axis.
///
/// The nominal displacement points straight at the target; the feedback term
/// `gain . ([p, v] - [p*, v*])` corrects deviations from the period-1 gait
/// that realizes that displacement. With [`deadbeat_gain`] the correction
/// cancels any `[p, v]` error within two steps.
pub fn stance_feedback(
    x: &HlipState,
    target_next_foot: f64,
    params: &HlipParams,
    gain: &[f64; 2],
) -> f64 {
    let d = target_next_foot - x.foot();
    let (p_star, v_star) = periodic_orbit(params, d);
    d + gain[0] * (x.p - p_star) + gain[1] * (x.v - v_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// One-step oracle: relabel the stance foot, then integrate the
    /// continuous pendulum (c'' = lambda^2 (c - foot)) with RK4.
    fn rk4_step_map(params: &HlipParams, x: &HlipState, u: f64) -> HlipState {
        let l2 = params.gravity / params.z0;
        let foot = x.foot() + u;
        let n = 4000;
        let h = params.t_ssp / n as f64;
        let (mut c, mut v) = (x.mu, x.v);
        let acc = |c: f64| l2 * (c - foot);
        for _ in 0..n {
            let (k1c, k1v) = (v, acc(c));
            let (k2c, k2v) = (v + 0.5 * h * k1v, acc(c + 0.5 * h * k1c));
            let (k3c, k3v) = (v + 0.5 * h * k2v, acc(c + 0.5 * h * k2c));
            let (k4c, k4v) = (v + h * k3v, acc(c + h * k3c));
            c += h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        HlipState { mu: c, p: foot - c, v }
    }

    /// Extract the linear map of `rk4_step_map` column by column.
    fn rk4_matrices(params: &HlipParams) -> (Matrix3<f64>, Vector3<f64>) {
        let mut a = Matrix3::zeros();
        for j in 0..3 {
            let mut e = Vector3::zeros();
            e[j] = 1.0;
            let out = rk4_step_map(params, &HlipState::from_vec(e), 0.0).to_vec();
            a.set_column(j, &out);
        }
        let b = rk4_step_map(params, &HlipState::new(0.0, 0.0, 0.0), 1.0).to_vec();
        (a, b)
    }

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn transition_matches_integration_oracle() {
        let params = HlipParams::desk_default();
        let (a, b) = s2s_matrices(&params);
        let (a_ref, b_ref) = rk4_matrices(&params);
        assert!(max_abs(&(a - a_ref)) < 1e-9, "A mismatch: {}", max_abs(&(a - a_ref)));
        assert!((b - b_ref).abs().max() < 1e-9);
    }

    #[test]
    fn transition_matches_oracle_across_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let params = HlipParams {
                z0: rng.random_range(0.2..1.2),
                t_ssp: rng.random_range(0.1..0.6),
                gravity: 9.81,
            };
            let (a, b) = s2s_matrices(&params);
            let (a_ref, b_ref) = rk4_matrices(&params);
            assert!(
                max_abs(&(a - a_ref)) < 1e-9 && (b - b_ref).abs().max() < 1e-9,
                "oracle mismatch at z0={} t={}",
                params.z0,
                params.t_ssp
            );
        }
    }

    #[test]
    fn slow_pendulum_limit() {
        // For lambda*T -> 0 the transition approaches the double-integrator
        // form up to O((lambda T)^2).
        let params = HlipParams { z0: 1.0e4, t_ssp: 0.05, gravity: 9.81 };
        let l2 = params.gravity / params.z0;
        let t = params.t_ssp;
        let lt2 = l2 * t * t; // (lambda T)^2
        let (a, b) = s2s_matrices(&params);
        let a_lim = Matrix3::new(1.0, 0.0, t, 0.0, 1.0, -t, 0.0, -l2 * t, 1.0);
        let b_lim = Vector3::new(0.0, 1.0, -l2 * t);
        assert!(max_abs(&(a - a_lim)) < lt2);
        assert!((b - b_lim).abs().max() < lt2);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let params = HlipParams::desk_default();
        let x0 = HlipState::new(1.7, 0.0, 0.0);
        let (states, feet) = rollout(&params, &x0, &[0.0; 5]);
        for st in &states {
            assert!((st.mu - 1.7).abs() < 1e-12);
            assert!(st.p.abs() < 1e-12);
            assert!(st.v.abs() < 1e-12);
        }
        for f in &feet {
            assert!((f - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn feet_telescope_exactly() {
        let params = HlipParams::desk_default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x0 = HlipState::new(0.3, -0.05, 0.2);
        let u: Vec<f64> = (0..8).map(|_| rng.random_range(-0.2..0.2)).collect();
        let (_, feet) = rollout(&params, &x0, &u);
        for k in 0..u.len() {
            assert_eq!(feet[k + 1], feet[k] + u[k]);
        }
    }

    #[test]
    fn periodic_orbit_reproduces_itself() {
        let params = HlipParams::desk_default();
        let d = 0.12;
        let (p_star, v_star) = periodic_orbit(&params, d);
        let x0 = HlipState::new(0.0, p_star, v_star);
        let (states, _) = rollout(&params, &x0, &[d; 10]);
        for (k, st) in states.iter().enumerate() {
            assert!((st.p - p_star).abs() < 1e-9, "p drifted at step {k}");
            assert!((st.v - v_star).abs() < 1e-9, "v drifted at step {k}");
            assert!((st.mu - k as f64 * d).abs() < 1e-9, "mu drifted at step {k}");
        }
    }

    #[test]
    fn tracker_recovers_feasible_targets() {
        let params = HlipParams::desk_default();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for trial in 0..5 {
            let state = StanceState {
                axes: [
                    HlipState::new(rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1), 0.1),
                    HlipState::new(rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1), 0.0),
                ],
                stance_foot: [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
                parity: 0,
                prev_step: [0.0, 0.0],
            };
            let mut feet = Vec::new();
            let mut f = state.stance_foot;
            for _ in 0..6 {
                f = [
                    f[0] + rng.random_range(-0.15..0.15),
                    f[1] + rng.random_range(-0.15..0.15),
                ];
                feet.push(f);
            }
            let targets = StepPlan::new(feet.clone(), 0);
            let weights = StepWeights { q_s: 1.0, r_s: 1e-9 };
            let solve = step_sequence_track(&targets, &state, &params, &weights).unwrap();
            for (got, want) in solve.plan.steps.iter().zip(&feet) {
                assert!(
                    (got[0] - want[0]).abs() < 1e-8 && (got[1] - want[1]).abs() < 1e-8,
                    "trial {trial}: recovered {got:?} vs target {want:?}"
                );
            }
        }
    }

    #[test]
    fn tracker_stays_put_for_trivial_target() {
        let params = HlipParams::desk_default();
        let state = StanceState::standing([0.4, 0.1], [0.4, 0.1], 1);
        let targets = StepPlan::new(vec![[0.4, 0.1]], 1);
        let solve =
            step_sequence_track(&targets, &state, &params, &StepWeights::default()).unwrap();
        assert!(solve.controls[0][0].abs() < 1e-9);
        assert!(solve.controls[0][1].abs() < 1e-9);
        assert!(solve.cost < 1e-12);
        assert_eq!(solve.plan.parity, 1);
    }

    #[test]
    fn tracker_is_best_effort_for_distant_targets() {
        let params = HlipParams::desk_default();
        let state = StanceState::standing([0.0, 0.0], [0.0, 0.0], 0);
        let targets = StepPlan::new(vec![[10.0, 0.0], [10.0, 0.0], [10.0, 0.0]], 0);
        let solve =
            step_sequence_track(&targets, &state, &params, &StepWeights::default()).unwrap();
        assert!(solve.cost > 0.0);
        assert!(solve.cost.is_finite());
        assert!(solve.plan.steps.iter().all(|s| s[0].is_finite()));
    }

    /// Objective evaluated the long way, for optimality spot checks.
    fn naive_cost(
        u: &[[f64; 2]],
        targets: &StepPlan,
        state: &StanceState,
        weights: &StepWeights,
    ) -> f64 {
        let mut total = 0.0;
        for axis in 0..2 {
            let mut f = state.stance_foot[axis];
            let mut prev = state.prev_step[axis];
            for k in 0..u.len() {
                f += u[k][axis];
                let e = f - targets.steps[k][axis];
                let du = u[k][axis] - prev;
                total += weights.q_s * e * e + weights.r_s * du * du;
                prev = u[k][axis];
            }
        }
        total
    }

    #[test]
    fn tracker_solution_is_locally_optimal() {
        let params = HlipParams::desk_default();
        let weights = StepWeights::default();
        let state = StanceState {
            axes: [HlipState::new(0.1, -0.02, 0.3), HlipState::new(-0.2, 0.04, -0.1)],
            stance_foot: [0.08, -0.16],
            parity: 1,
            prev_step: [0.1, -0.05],
        };
        let targets = StepPlan::new(
            vec![[0.2, -0.1], [0.35, -0.02], [0.5, -0.12], [0.66, 0.0], [0.8, -0.1], [0.95, 0.0]],
            1,
        );
        let solve = step_sequence_track(&targets, &state, &params, &weights).unwrap();
        let base = naive_cost(&solve.controls, &targets, &state, &weights);
        assert!((base - solve.cost).abs() < 1e-10);
        for k in 0..solve.controls.len() {
            for axis in 0..2 {
                for delta in [1e-4, -1e-4] {
                    let mut u = solve.controls.clone();
                    u[k][axis] += delta;
                    let perturbed = naive_cost(&u, &targets, &state, &weights);
                    assert!(
                        perturbed >= base - 1e-15,
                        "perturbing u[{k}][{axis}] by {delta} lowered the cost"
                    );
                }
            }
        }
    }

    #[test]
    fn axes_decouple() {
        // Solving both axes in one joint least-squares system (interleaved
        // ordering) must match the per-axis solver exactly.
        let params = HlipParams::desk_default();
        let weights = StepWeights::default();
        let state = StanceState {
            axes: [HlipState::new(0.0, 0.01, 0.2), HlipState::new(0.0, -0.03, 0.05)],
            stance_foot: [0.02, -0.03],
            parity: 0,
            prev_step: [0.04, 0.01],
        };
        let targets = StepPlan::new(
            vec![[0.15, 0.06], [0.3, -0.05], [0.45, 0.07], [0.6, -0.04]],
            0,
        );
        let m = targets.len();
        let n = 2 * m;
        let mut h = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        // Rows: tracking residuals then smoothness residuals, both axes
        // interleaved as [u0x, u0y, u1x, u1y, ...].
        for axis in 0..2 {
            for k in 0..m {
                // q_s (f0 + sum_{j<=k} u_j - target)^2
                let mut row = DVector::<f64>::zeros(n);
                for j in 0..=k {
                    row[2 * j + axis] = 1.0;
                }
                let b = targets.steps[k][axis] - state.stance_foot[axis];
                h += weights.q_s * &row * row.transpose();
                rhs += weights.q_s * b * row;
            }
            for k in 0..m {
                let mut row = DVector::<f64>::zeros(n);
                row[2 * k + axis] = 1.0;
                let mut b = 0.0;
                if k == 0 {
                    b = state.prev_step[axis];
                } else {
                    row[2 * (k - 1) + axis] = -1.0;
                }
                h += weights.r_s * &row * row.transpose();
                rhs += weights.r_s * b * row;
            }
        }
        let joint = h.cholesky().unwrap().solve(&rhs);
        let solve = step_sequence_track(&targets, &state, &params, &weights).unwrap();
        for k in 0..m {
            for axis in 0..2 {
                assert!(
                    (joint[2 * k + axis] - solve.controls[k][axis]).abs() < 1e-10,
                    "joint vs per-axis mismatch at step {k} axis {axis}"
                );
            }
        }
    }

    #[test]
    fn deadbeat_gain_is_nilpotent() {
        let params = HlipParams::desk_default();
        let (a_sub, b_sub) = s2s_sub_matrices(&params);
        let k = deadbeat_gain(&params);
        let a_cl = a_sub + b_sub * nalgebra::RowVector2::new(k[0], k[1]);
        let sq = a_cl * a_cl;
        assert!(sq.abs().max() < 1e-9, "closed loop not nilpotent: {sq}");
    }

    #[test]
    fn deadbeat_feedback_kills_errors_in_two_steps() {
        let params = HlipParams::desk_default();
        let gain = deadbeat_gain(&params);
        let (a, b) = s2s_matrices(&params);
        let d = 0.1;
        let (p_star, v_star) = periodic_orbit(&params, d);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..20 {
            let mut x = HlipState::new(
                0.0,
                p_star + rng.random_range(-0.5..0.5),
                v_star + rng.random_range(-0.5..0.5),
            );
            for _ in 0..2 {
                // Target always one nominal displacement ahead of the
                // current foot, so the desired gait stays fixed at d.
                let u = stance_feedback(&x, x.foot() + d, &params, &gain);
                let next = a * x.to_vec() + b * u;
                x = HlipState::from_vec(next);
            }
            assert!(
                (x.p - p_star).abs() < 1e-9 && (x.v - v_star).abs() < 1e-9,
                "residual error p={} v={}",
                (x.p - p_star).abs(),
                (x.v - v_star).abs()
            );
        }
    }

    #[test]
    fn feedback_on_orbit_is_feedforward() {
        let params = HlipParams::desk_default();
        let d = -0.07;
        let (p_star, v_star) = periodic_orbit(&params, d);
        let x = HlipState::new(0.9, p_star, v_star);
        let u = stance_feedback(&x, x.foot() + d, &params, &deadbeat_gain(&params));
        assert!((u - d).abs() < 1e-9);
    }

    #[test]
    fn zero_gain_is_pure_feedforward() {
        let params = HlipParams::desk_default();
        let x = HlipState::new(0.2, 0.05, -0.4);
        let u = stance_feedback(&x, 1.0, &params, &[0.0, 0.0]);
        assert!((u - (1.0 - x.foot())).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let params = HlipParams { z0: -0.4, ..HlipParams::desk_default() };
        assert!(params.validate().is_err());
        let weights = StepWeights { q_s: 1.0, r_s: 0.0 };
        assert!(weights.validate().is_err());
        let plan = StepPlan::new(vec![], 0);
        assert!(plan.validate().is_err());
        let plan = StepPlan::new(vec![[f64::NAN, 0.0]], 0);
        assert!(plan.validate().is_err());
    }
}
