//! Finite-difference checks for every differentiable primitive, plus a
//! composite two-layer network.  The analytic backward pass must agree with
//! a central-difference probe of the forward pass.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use stride_core::autodiff::{Bindings, Graph, NodeId, Tensor};
use stride_core::fdcheck::graph_grad_error;

const H: f64 = 1e-6;
const PRIMITIVE_TOL: f64 = 1e-7;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    Tensor::from_vec(shape, data).unwrap().with_grad()
}

/// Builds a graph with `arity` inputs of the given shapes, applies `build`,
/// reduces with sum, and checks every input's gradient against FD.
fn check(shapes: &[&[usize]], build: impl Fn(&mut Graph, &[NodeId]) -> NodeId) {
    let mut rng = rng();
    let mut g = Graph::new();
    let names: Vec<String> = (0..shapes.len()).map(|i| format!("x{i}")).collect();
    let ids: Vec<NodeId> = names
        .iter()
        .zip(shapes)
        .map(|(n, s)| g.input(n, s.to_vec()).unwrap())
        .collect();
    let out = build(&mut g, &ids);
    let root = if g.shape_of(out).is_empty() {
        out
    } else {
        g.sum(out).unwrap()
    };
    let bindings: Bindings = names
        .iter()
        .zip(shapes)
        .map(|(n, s)| (n.clone(), rand_tensor(&mut rng, s.to_vec())))
        .collect();
    for n in &names {
        let err = graph_grad_error(&g, &bindings, root, n, H).unwrap();
        assert!(
            err < PRIMITIVE_TOL,
            "gradient of '{n}' off by {err:.3e} (tol {PRIMITIVE_TOL:.0e})"
        );
    }
}

#[test]
fn fd_add() {
    check(&[&[5], &[5]], |g, ids| g.add(ids[0], ids[1]).unwrap());
}

#[test]
fn fd_sub() {
    check(&[&[5], &[5]], |g, ids| g.sub(ids[0], ids[1]).unwrap());
}

#[test]
fn fd_mul() {
    check(&[&[5], &[5]], |g, ids| g.mul(ids[0], ids[1]).unwrap());
}

#[test]
fn fd_matmul_matrix_vector() {
    check(&[&[3, 4], &[4]], |g, ids| g.matmul(ids[0], ids[1]).unwrap());
}

#[test]
fn fd_matmul_matrix_matrix() {
    check(&[&[3, 4], &[4, 2]], |g, ids| g.matmul(ids[0], ids[1]).unwrap());
}

#[test]
fn fd_tanh() {
    check(&[&[6]], |g, ids| g.tanh(ids[0]).unwrap());
}

#[test]
fn fd_relu() {
    // Random values stay away from the kink at 0 with probability 1.
    check(&[&[6]], |g, ids| g.relu(ids[0]).unwrap());
}

#[test]
fn fd_square() {
    check(&[&[6]], |g, ids| g.square(ids[0]).unwrap());
}

#[test]
fn fd_sum() {
    check(&[&[7]], |g, ids| g.sum(ids[0]).unwrap());
}

#[test]
fn fd_mean() {
    check(&[&[7]], |g, ids| g.mean(ids[0]).unwrap());
}

#[test]
fn fd_concat() {
    check(&[&[3], &[4]], |g, ids| g.concat(ids[0], ids[1]).unwrap());
}

#[test]
fn fd_slice() {
    check(&[&[8]], |g, ids| g.slice(ids[0], 2, 4).unwrap());
}

#[test]
fn fd_scale() {
    check(&[&[5]], |g, ids| g.scale(ids[0], -2.75).unwrap());
}

#[test]
fn fd_reshape() {
    check(&[&[6]], |g, ids| {
        let r = g.reshape(ids[0], vec![2, 3]).unwrap();
        g.square(r).unwrap()
    });
}

#[test]
fn fd_composite_two_layer_net() {
    // mean((tanh(W2 . tanh(W1 x + b1) + b2) - t)^2): checks chained rules
    // through matmul, add, tanh, sub, square, mean for every parameter.
    check(
        &[&[4, 3], &[4], &[2, 4], &[2], &[3], &[2]],
        |g, ids| {
            let (w1, b1, w2, b2, x, t) = (ids[0], ids[1], ids[2], ids[3], ids[4], ids[5]);
            let h1 = g.matmul(w1, x).unwrap();
            let h1 = g.add(h1, b1).unwrap();
            let h1 = g.tanh(h1).unwrap();
            let h2 = g.matmul(w2, h1).unwrap();
            let h2 = g.add(h2, b2).unwrap();
            let y = g.tanh(h2).unwrap();
            let e = g.sub(y, t).unwrap();
            let e2 = g.square(e).unwrap();
            g.mean(e2).unwrap()
        },
    );
}
