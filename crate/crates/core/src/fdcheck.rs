//! Central finite-difference helpers, shared by unit and integration tests.
//!
//! These are intentionally part of the library (not a test module) so every
//! test target can verify analytic gradients against the same oracle.

use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::error::Result;

/// Central-difference gradient of a scalar function of a flat vector.
pub fn central_diff<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest absolute elementwise difference between two slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "max_abs_diff: length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Finite-difference gradient of `root` with respect to the named graph
/// input, holding every other binding fixed.
pub fn graph_fd_gradient(
    graph: &Graph,
    bindings: &Bindings,
    root: NodeId,
    name: &str,
    h: f64,
) -> Result<Tensor> {
    let base = bindings
        .get(name)
        .unwrap_or_else(|| panic!("graph_fd_gradient: no binding named '{name}'"));
    let shape = base.shape().to_vec();
    let x0 = base.data().to_vec();
    let mut scratch = bindings.clone();
    let grad = central_diff(
        |x| {
            let t = Tensor::from_vec(shape.clone(), x.to_vec()).expect("probe tensor");
            scratch.insert(name.to_string(), t);
            graph
                .evaluate(&scratch)
                .expect("fd probe evaluation")
                .value(root)
                .item()
                .expect("fd root must be scalar")
        },
        &x0,
        h,
    );
    Tensor::from_vec(shape, grad)
}

/// Compares the analytic gradient for `name` against finite differences and
/// returns the largest absolute deviation.
pub fn graph_grad_error(
    graph: &Graph,
    bindings: &Bindings,
    root: NodeId,
    name: &str,
    h: f64,
) -> Result<f64> {
    let eval = graph.evaluate(bindings)?;
    let grads = graph.backward(&eval, root, 1.0)?;
    let analytic = grads
        .get(name)
        .unwrap_or_else(|| panic!("graph_grad_error: '{name}' has no gradient (requires_grad?)"));
    let fd = graph_fd_gradient(graph, bindings, root, name, h)?;
    Ok(max_abs_diff(analytic.data(), fd.data()))
}

/// Derivative-free Nelder–Mead minimization, used as a brute-force oracle
/// against closed-form or iterative solvers.  Returns the best vertex and its
/// value after `max_iters` reflect/expand/contract/shrink steps or when the
/// simplex collapses below `1e-14` in both spread and value range.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], scale: f64, max_iters: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iters {
        // Order vertices by value.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let spread = simplex
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread < 1e-14 && (values[worst] - values[best]).abs() < 1e-14 {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx == worst {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }

        let blend = |a: f64, from: &[f64], to: &[f64]| -> Vec<f64> {
            from.iter().zip(to).map(|(c, w)| c + a * (w - c)).collect()
        };

        let reflected = blend(-alpha, &centroid, &simplex[worst]);
        let fr = f(&reflected);
        if fr < values[best] {
            let expanded = blend(-gamma, &centroid, &simplex[worst]);
            let fe = f(&expanded);
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = if fr < values[worst] {
                blend(-rho, &centroid, &simplex[worst])
            } else {
                blend(rho, &centroid, &simplex[worst])
            };
            let fc = f(&contracted);
            if fc < values[worst].min(fr) {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                // Shrink toward the best vertex.
                for idx in 0..=n {
                    if idx == best {
                        continue;
                    }
                    simplex[idx] = blend(sigma, &simplex[best], &simplex[idx]);
                    values[idx] = f(&simplex[idx]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}
