//! Supervision losses evaluated on network predictions.
//!
//! Two of them (waypoint and footstep mean squared error against the
//! solver outputs) are simple enough to live inside the autodiff graph. The
//! three here are not expressible with the graph's primitive set — they
//! involve polyline projections and field lookups — so each returns its
//! value *and* analytic gradients, which the trainer feeds back into the
//! graph as seeds at the prediction nodes.
//!
//! Sign conventions: paths and steps are planar, x forward, y left of
//! travel. A step's local frame relative to the predicted path is
//! `(l, w)` where `l` is arc length advanced along the polyline since the
//! previous step's projection and `w` is the signed lateral offset
//! (positive on the left of the direction of travel).

use crate::error::{Error, Result};
use crate::field::RiskField;

/// Mean squared waypoint error and its gradient with respect to the
/// prediction: `(1/K) sum_k |phi_k - star_k|^2`, `d/dphi_k = (2/K)(phi_k - star_k)`.
/// The target is a constant (solver output).
pub fn u_path_loss(
    phi_hat: &[[f64; 2]],
    phi_star: &[[f64; 2]],
) -> Result<(f64, Vec<[f64; 2]>)> {
    if phi_hat.len() != phi_star.len() || phi_hat.is_empty() {
        return Err(Error::shape(
            "u_path_loss",
            format!("{} predictions vs {} targets", phi_hat.len(), phi_star.len()),
        ));
    }
    let k = phi_hat.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(phi_hat.len());
    for (p, s) in phi_hat.iter().zip(phi_star) {
        let (dx, dy) = (p[0] - s[0], p[1] - s[1]);
        loss += (dx * dx + dy * dy) / k;
        grad.push([2.0 * dx / k, 2.0 * dy / k]);
    }
    Ok((loss, grad))
}

/// Sum of risk-field samples at the given world-frame step locations, with
/// the field's spatial gradient at each one. The field is a constant of the
/// current frame.
pub fn u_esdf_loss(
    steps_world: &[[f64; 2]],
    field: &RiskField,
) -> Result<(f64, Vec<[f64; 2]>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(steps_world.len());
    for s in steps_world {
        let (value, grad) = field.sample(s[0], s[1])?;
        total += value;
        grads.push(grad);
    }
    Ok((total, grads))
}

/// A step's projection onto the path polyline.
#[derive(Debug, Clone, Copy)]
struct Projection {
    /// Index of the containing segment.
    seg: usize,
    /// Unclamped segment parameter `(r . d) / |d|^2` (drives the lateral
    /// gradients even when the foot of the projection is clamped).
    t_raw: f64,
    /// Arc length of the projection foot from the polyline start.
    arc: f64,
    /// Signed lateral offset, positive left of travel.
    w: f64,
    /// Unit tangent of the containing segment.
    tangent: [f64; 2],
    /// Unit left normal of the containing segment.
    normal: [f64; 2],
    /// Length of the containing segment.
    seg_len: f64,
}

/// Project `point` onto the polyline, picking the closest segment (first on
/// ties). `cum[i]` is the arc length at vertex `i`.
fn project_onto(polyline: &[[f64; 2]], cum: &[f64], point: [f64; 2]) -> Result<Projection> {
    let mut best: Option<(f64, Projection)> = None;
    for i in 0..polyline.len() - 1 {
        let a = polyline[i];
        let b = polyline[i + 1];
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        if len2 <= f64::EPSILON * f64::EPSILON {
            continue; // zero-length segment contributes no direction
        }
        let len = len2.sqrt();
        let r = [point[0] - a[0], point[1] - a[1]];
        let t_raw = (r[0] * d[0] + r[1] * d[1]) / len2;
        let t = t_raw.clamp(0.0, 1.0);
        let c = [a[0] + t * d[0], a[1] + t * d[1]];
        let dist2 = (point[0] - c[0]).powi(2) + (point[1] - c[1]).powi(2);
        if best.map_or(true, |(bd, _)| dist2 < bd - 1e-15) {
            let tangent = [d[0] / len, d[1] / len];
            let normal = [-tangent[1], tangent[0]];
            let w = normal[0] * r[0] + normal[1] * r[1];
            best = Some((
                dist2,
                Projection {
                    seg: i,
                    t_raw,
                    arc: cum[i] + t * len,
                    w,
                    tangent,
                    normal,
                    seg_len: len,
                },
            ));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::Degenerate("path polyline has no extent (all waypoints coincide)".into())
    })
}

fn cumulative_arcs(polyline: &[[f64; 2]]) -> Result<Vec<f64>> {
    if polyline.len() < 2 {
        return Err(Error::InvalidArgument(
            "local frame needs a polyline of at least 2 waypoints".into(),
        ));
    }
    if !polyline.iter().all(|p| p[0].is_finite() && p[1].is_finite()) {
        return Err(Error::NonFinite("path polyline".into()));
    }
    let mut cum = Vec::with_capacity(polyline.len());
    cum.push(0.0);
    for i in 0..polyline.len() - 1 {
        let d = [
            polyline[i + 1][0] - polyline[i][0],
            polyline[i + 1][1] - polyline[i][1],
        ];
        cum.push(cum[i] + (d[0] * d[0] + d[1] * d[1]).sqrt());
    }
    Ok(cum)
}

/// Map a step location into the path's local frame.
///
/// Returns `(l, w, arc)`: the arc length advanced from `prev_arc` to this
/// step's projection, the signed lateral offset, and the absolute arc of
/// the projection (pass it as `prev_arc` for the next step; use `0.0` for
/// the first one). `l` is negative when the step projects behind the
/// previous one.
pub fn local_frame_map(
    step: [f64; 2],
    polyline: &[[f64; 2]],
    prev_arc: f64,
) -> Result<(f64, f64, f64)> {
    let cum = cumulative_arcs(polyline)?;
    let proj = project_onto(polyline, &cum, step)?;
    Ok((proj.arc - prev_arc, proj.w, proj.arc))
}

/// Value and gradients of the step-shape losses.
#[derive(Debug, Clone)]
pub struct WlLoss {
    /// Mean squared deviation of lateral offsets from the alternating
    /// target `w_bar * alpha_k`.
    pub u_w: f64,
    /// Mean squared deviation of per-step arc advances from `l_bar`.
    pub u_l: f64,
    /// `d u_w / d step_k`.
    pub d_steps_w: Vec<[f64; 2]>,
    /// `d u_l / d step_k`.
    pub d_steps_l: Vec<[f64; 2]>,
    /// `d u_w / d waypoint_j`.
    pub d_phi_w: Vec<[f64; 2]>,
    /// `d u_l / d waypoint_j`.
    pub d_phi_l: Vec<[f64; 2]>,
}

/// Step-width and step-length losses with analytic gradients with respect
/// to the steps *and* the path waypoints.
///
/// With `alpha_k = +1` when `k + parity` is even and `-1` otherwise:
///
/// ```text
/// u_w = mean_k (w_k - w_bar alpha_k)^2
/// u_l = mean_k (l_k - l_bar)^2
/// ```
///
/// where `(l_k, w_k)` come from [`local_frame_map`] chained along the step
/// sequence (the first step measured from arc 0).
pub fn u_wl_loss(
    steps: &[[f64; 2]],
    polyline: &[[f64; 2]],
    w_bar: f64,
    l_bar: f64,
    parity: u8,
) -> Result<WlLoss> {
    if steps.is_empty() {
        return Err(Error::InvalidArgument("u_wl_loss needs at least one step".into()));
    }
    if parity > 1 {
        return Err(Error::InvalidArgument(format!("parity must be 0 or 1, got {parity}")));
    }
    if !steps.iter().all(|s| s[0].is_finite() && s[1].is_finite()) {
        return Err(Error::NonFinite("steps".into()));
    }
    let cum = cumulative_arcs(polyline)?;
    let m = steps.len();
    let mf = m as f64;

    let projections: Vec<Projection> = steps
        .iter()
        .map(|&s| project_onto(polyline, &cum, s))
        .collect::<Result<_>>()?;

    // Residuals of both losses.
    let mut res_w = Vec::with_capacity(m);
    let mut res_l = Vec::with_capacity(m);
    let mut prev_arc = 0.0;
    for (k, proj) in projections.iter().enumerate() {
        let alpha = if (k + parity as usize) % 2 == 0 { 1.0 } else { -1.0 };
        res_w.push(proj.w - w_bar * alpha);
        res_l.push(proj.arc - prev_arc - l_bar);
        prev_arc = proj.arc;
    }
    let u_w = res_w.iter().map(|r| r * r).sum::<f64>() / mf;
    let u_l = res_l.iter().map(|r| r * r).sum::<f64>() / mf;

    // Gradients. Each step's loss terms depend on its own projection; the
    // arc of step k additionally appears (negated) in step k+1's length.
    let mut d_steps_w = vec![[0.0; 2]; m];
    let mut d_steps_l = vec![[0.0; 2]; m];
    let mut d_phi_w = vec![[0.0; 2]; polyline.len()];
    let mut d_phi_l = vec![[0.0; 2]; polyline.len()];

    for (k, proj) in projections.iter().enumerate() {
        let i = proj.seg;
        let (t_hat, n_hat, len) = (proj.tangent, proj.normal, proj.seg_len);

        // --- width: w = n . (s - a); the projection foot may be clamped
        // but the lateral offset formula (and its gradients, in t_raw) is
        // the same either way.
        let g_w = 2.0 * res_w[k] / mf;
        d_steps_w[k][0] += g_w * n_hat[0];
        d_steps_w[k][1] += g_w * n_hat[1];
        let ca = g_w * (proj.t_raw - 1.0);
        let cb = -g_w * proj.t_raw;
        d_phi_w[i][0] += ca * n_hat[0];
        d_phi_w[i][1] += ca * n_hat[1];
        d_phi_w[i + 1][0] += cb * n_hat[0];
        d_phi_w[i + 1][1] += cb * n_hat[1];

        // --- length: arc_k enters l_k with +1 and l_{k+1} with -1.
        let g_arc = 2.0 * (res_l[k] - res_l.get(k + 1).copied().unwrap_or(0.0)) / mf;
        if proj.t_raw > 0.0 && proj.t_raw < 1.0 {
            // Interior projection: arc = cum[i] + tangent . (s - a).
            d_steps_l[k][0] += g_arc * t_hat[0];
            d_steps_l[k][1] += g_arc * t_hat[1];
            let wl = proj.w / len;
            d_phi_l[i][0] += g_arc * (-wl * n_hat[0] - t_hat[0]);
            d_phi_l[i][1] += g_arc * (-wl * n_hat[1] - t_hat[1]);
            d_phi_l[i + 1][0] += g_arc * wl * n_hat[0];
            d_phi_l[i + 1][1] += g_arc * wl * n_hat[1];
        } else if proj.t_raw >= 1.0 {
            // Clamped to the far vertex: arc = cum[i] + |b - a|.
            d_phi_l[i][0] -= g_arc * t_hat[0];
            d_phi_l[i][1] -= g_arc * t_hat[1];
            d_phi_l[i + 1][0] += g_arc * t_hat[0];
            d_phi_l[i + 1][1] += g_arc * t_hat[1];
        }
        // Clamped to the near vertex: arc = cum[i], no local dependence.

        // Arc prefix cum[i]: every earlier segment's length moves with its
        // endpoints.
        for j in 0..i {
            let a = polyline[j];
            let b = polyline[j + 1];
            let d = [b[0] - a[0], b[1] - a[1]];
            let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if l <= f64::EPSILON {
                continue;
            }
            let th = [d[0] / l, d[1] / l];
            d_phi_l[j][0] -= g_arc * th[0];
            d_phi_l[j][1] -= g_arc * th[1];
            d_phi_l[j + 1][0] += g_arc * th[0];
            d_phi_l[j + 1][1] += g_arc * th[1];
        }
    }

    Ok(WlLoss { u_w, u_l, d_steps_w, d_steps_l, d_phi_w, d_phi_l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_risk_field, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_examples() {
        let star = vec![[0.5, 0.0], [1.0, 0.1], [1.5, 0.3]];
        let (zero, grad) = u_path_loss(&star, &star).unwrap();
        assert_eq!(zero, 0.0);
        assert!(grad.iter().all(|g| g[0] == 0.0 && g[1] == 0.0));

        let offset: Vec<[f64; 2]> = star.iter().map(|p| [p[0] + 0.1, p[1]]).collect();
        let (loss, _) = u_path_loss(&offset, &star).unwrap();
        assert!((loss - 0.01).abs() < 1e-15);

        assert!(u_path_loss(&star, &star[..2]).is_err());
    }

    #[test]
    fn path_loss_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a: Vec<[f64; 2]> =
            (0..8).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let b: Vec<[f64; 2]> =
            (0..8).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let (loss, grad) = u_path_loss(&a, &b).unwrap();
        let mut naive = 0.0;
        for k in 0..8 {
            naive += (a[k][0] - b[k][0]).powi(2) + (a[k][1] - b[k][1]).powi(2);
        }
        naive /= 8.0;
        assert!((loss - naive).abs() < 1e-12);
        // Gradient against central differences of the naive formula.
        for k in [0usize, 3, 7] {
            for axis in 0..2 {
                let h = 1e-7;
                let eval = |delta: f64| {
                    let mut aa = a.clone();
                    aa[k][axis] += delta;
                    u_path_loss(&aa, &b).unwrap().0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((grad[k][axis] - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn local_frame_straight_path() {
        let path = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let (l, w, arc) = local_frame_map([0.12, 0.04], &path, 0.0).unwrap();
        assert!((l - 0.12).abs() < 1e-12);
        assert!((w - 0.04).abs() < 1e-12);
        let (l2, w2, _) = local_frame_map([0.24, -0.04], &path, arc).unwrap();
        assert!((l2 - 0.12).abs() < 1e-12);
        assert!((w2 + 0.04).abs() < 1e-12);
    }

    #[test]
    fn on_path_step_has_zero_width() {
        let path = vec![[0.0, 0.0], [0.5, 0.2], [1.0, 0.1]];
        let (_, w, _) = local_frame_map([0.5, 0.2], &path, 0.0).unwrap();
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn degenerate_polyline_rejected() {
        let path = vec![[0.3, 0.3]; 4];
        assert!(local_frame_map([0.0, 0.0], &path, 0.0).is_err());
        assert!(local_frame_map([0.0, 0.0], &path[..1], 0.0).is_err());
    }

    #[test]
    fn circular_arc_matches_analytic_values() {
        // Quarter circle of radius 1 discretized into 20 segments,
        // traversed counterclockwise (center on the left of travel).
        let r = 1.0;
        let n = 20;
        let path: Vec<[f64; 2]> = (0..=n)
            .map(|i| {
                let psi = std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
                // Start at (0, 0) heading +x, center at (0, 1).
                [r * psi.sin(), r * (1.0 - psi.cos())]
            })
            .collect();
        // A point at angle psi0, radial offset 0.05 toward the center is
        // 0.05 left of travel, arc r * psi0 along the path.
        let psi0 = 0.6f64;
        let rr = r - 0.05;
        let probe = [rr * psi0.sin(), r - rr * psi0.cos()];
        let (l, w, _) = local_frame_map(probe, &path, 0.0).unwrap();
        assert!((w - 0.05).abs() / 0.05 < 0.02, "w = {w}");
        assert!((l - r * psi0).abs() / (r * psi0) < 0.02, "l = {l}");
    }

    #[test]
    fn perfect_alternation_is_zero_loss() {
        let path: Vec<[f64; 2]> = (0..8).map(|i| [0.3 * i as f64, 0.0]).collect();
        let (w_bar, l_bar) = (0.08, 0.12);
        for parity in [0u8, 1] {
            let steps: Vec<[f64; 2]> = (0..6)
                .map(|k| {
                    let alpha = if (k + parity as usize) % 2 == 0 { 1.0 } else { -1.0 };
                    [l_bar * (k + 1) as f64, w_bar * alpha]
                })
                .collect();
            let wl = u_wl_loss(&steps, &path, w_bar, l_bar, parity).unwrap();
            assert!(wl.u_w < 1e-30, "u_w = {}", wl.u_w);
            assert!(wl.u_l < 1e-30, "u_l = {}", wl.u_l);
            assert!(wl
                .d_steps_w
                .iter()
                .all(|g| g[0].abs() < 1e-15 && g[1].abs() < 1e-15));

            // Toggling parity against a perfectly alternating sequence
            // doubles every residual: mean (2 w_bar)^2 = 4 w_bar^2.
            let flipped = u_wl_loss(&steps, &path, w_bar, l_bar, parity ^ 1).unwrap();
            assert!((flipped.u_w - 4.0 * w_bar * w_bar).abs() < 1e-12);
        }
    }

    #[test]
    fn wl_loss_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let path: Vec<[f64; 2]> = (0..8)
            .map(|i| [0.35 * i as f64, 0.2 * (i as f64 * 0.8).sin()])
            .collect();
        let steps: Vec<[f64; 2]> = (0..6)
            .map(|k| {
                [
                    0.3 * (k + 1) as f64 + rng.random_range(-0.05..0.05),
                    rng.random_range(-0.15..0.15),
                ]
            })
            .collect();
        let (w_bar, l_bar, parity) = (0.08, 0.12, 1u8);
        let wl = u_wl_loss(&steps, &path, w_bar, l_bar, parity).unwrap();

        // Scalar-loop oracle built directly on local_frame_map.
        let mut arc = 0.0;
        let (mut sw, mut sl) = (0.0, 0.0);
        for (k, s) in steps.iter().enumerate() {
            let (l, w, new_arc) = local_frame_map(*s, &path, arc).unwrap();
            arc = new_arc;
            let alpha = if (k + parity as usize) % 2 == 0 { 1.0 } else { -1.0 };
            sw += (w - w_bar * alpha).powi(2);
            sl += (l - l_bar).powi(2);
        }
        assert!((wl.u_w - sw / 6.0).abs() < 1e-12);
        assert!((wl.u_l - sl / 6.0).abs() < 1e-12);
    }

    #[test]
    fn wl_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let path: Vec<[f64; 2]> = (0..8)
            .map(|i| [0.35 * i as f64, 0.25 * (i as f64 * 0.7).cos()])
            .collect();
        let steps: Vec<[f64; 2]> = (1..=6)
            .map(|k| {
                [
                    0.33 * k as f64 + rng.random_range(-0.04..0.04),
                    rng.random_range(-0.12..0.12),
                ]
            })
            .collect();
        let (w_bar, l_bar, parity) = (0.08, 0.12, 0u8);
        let wl = u_wl_loss(&steps, &path, w_bar, l_bar, parity).unwrap();
        let h = 1e-7;

        for k in 0..steps.len() {
            for axis in 0..2 {
                let eval = |delta: f64| {
                    let mut s = steps.clone();
                    s[k][axis] += delta;
                    let out = u_wl_loss(&s, &path, w_bar, l_bar, parity).unwrap();
                    (out.u_w, out.u_l)
                };
                let (wp, lp) = eval(h);
                let (wm, lm) = eval(-h);
                let (fw, fl) = ((wp - wm) / (2.0 * h), (lp - lm) / (2.0 * h));
                assert!(
                    (wl.d_steps_w[k][axis] - fw).abs() < 1e-6,
                    "d u_w / d step[{k}][{axis}]: {} vs fd {fw}",
                    wl.d_steps_w[k][axis]
                );
                assert!(
                    (wl.d_steps_l[k][axis] - fl).abs() < 1e-6,
                    "d u_l / d step[{k}][{axis}]: {} vs fd {fl}",
                    wl.d_steps_l[k][axis]
                );
            }
        }
        for j in 0..path.len() {
            for axis in 0..2 {
                let eval = |delta: f64| {
                    let mut p = path.clone();
                    p[j][axis] += delta;
                    let out = u_wl_loss(&steps, &p, w_bar, l_bar, parity).unwrap();
                    (out.u_w, out.u_l)
                };
                let (wp, lp) = eval(h);
                let (wm, lm) = eval(-h);
                let (fw, fl) = ((wp - wm) / (2.0 * h), (lp - lm) / (2.0 * h));
                assert!(
                    (wl.d_phi_w[j][axis] - fw).abs() < 1e-6,
                    "d u_w / d phi[{j}][{axis}]: {} vs fd {fw}",
                    wl.d_phi_w[j][axis]
                );
                assert!(
                    (wl.d_phi_l[j][axis] - fl).abs() < 1e-6,
                    "d u_l / d phi[{j}][{axis}]: {} vs fd {fl}",
                    wl.d_phi_l[j][axis]
                );
            }
        }
    }

    #[test]
    fn esdf_loss_examples() {
        let spec = GridSpec { origin: [0.0, 0.0], resolution: 0.1, nx: 40, ny: 40 };
        // One occupied cell near the middle; elsewhere zero.
        let points = vec![[2.05, 2.05, 0.5]];
        let field = build_risk_field(&points, spec, 2.0, [0.05, 1.0]).unwrap();

        // Steps far from the impulse sit in exactly-zero cells.
        let (loss, grads) = u_esdf_loss(&[[0.5, 0.5], [3.5, 0.6]], &field).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g[0] == 0.0 && g[1] == 0.0));

        // A step exactly on the impulse cell center reads the peak.
        let (peak, _) = u_esdf_loss(&[[2.05, 2.05]], &field).unwrap();
        assert!((peak - field.max_value()).abs() < 1e-12);

        // Sum of two copies doubles the value.
        let (double, _) = u_esdf_loss(&[[2.05, 2.05], [2.05, 2.05]], &field).unwrap();
        assert!((double - 2.0 * peak).abs() < 1e-12);
    }

    #[test]
    fn esdf_gradients_match_finite_differences() {
        let spec = GridSpec { origin: [-1.0, -1.0], resolution: 0.05, nx: 60, ny: 60 };
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let points: Vec<[f64; 3]> = (0..40)
            .map(|_| [rng.random_range(0.0..1.5), rng.random_range(0.0..1.5), 0.5])
            .collect();
        let field = build_risk_field(&points, spec, 3.0, [0.05, 1.0]).unwrap();
        let steps: Vec<[f64; 2]> = (0..10)
            .map(|_| [rng.random_range(0.1..1.4), rng.random_range(0.1..1.4)])
            .collect();
        let (_, grads) = u_esdf_loss(&steps, &field).unwrap();
        let h = spec.resolution / 200.0;
        for (k, s) in steps.iter().enumerate() {
            for axis in 0..2 {
                let eval = |delta: f64| {
                    let mut probe = *s;
                    probe[axis] += delta;
                    u_esdf_loss(&[probe], &field).unwrap().0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let g = grads[k][axis];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-9);
                assert!(rel < 1e-6, "step {k} axis {axis}: {g} vs fd {fd}");
            }
        }
    }
}
