//! Reverse-mode autodiff over a small fixed op set.
//!
//! A [`Graph`] is built once: named inputs are declared up front and ops are
//! appended through builder methods that validate shapes eagerly.  Running the
//! graph is split in two phases so one forward pass can serve several backward
//! passes: [`Graph::evaluate`] produces an [`Evaluation`] holding every node
//! value, and [`Graph::backward`] / [`Graph::backward_seeded`] walk the tape in
//! reverse to accumulate cotangents.  Gradients are returned only for inputs
//! whose bound tensors were marked with `requires_grad`.

use std::collections::BTreeMap;

use crate::autodiff::tensor::{numel_of, Tensor};
use crate::error::{Error, Result};

/// Index of a node in its graph; stable once created.
pub type NodeId = usize;

/// Named tensors fed to [`Graph::evaluate`].
pub type Bindings = BTreeMap<String, Tensor>;

/// Gradients keyed by input name, one entry per `requires_grad` input.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Clone, Debug)]
enum Op {
    Input { name: String },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Square(NodeId),
    Concat(NodeId, NodeId),
    Slice { src: NodeId, start: usize, len: usize },
    Scale { src: NodeId, factor: f64 },
    Reshape { src: NodeId },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// A static computation graph.  Nodes are appended in topological order, so
/// node ids double as an evaluation schedule.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: BTreeMap<String, NodeId>,
}

/// All node values from one forward pass, indexed by [`NodeId`].
#[derive(Debug)]
pub struct Evaluation {
    values: Vec<Tensor>,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id]
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape_of(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(|s| s.as_str())
    }

    fn check_id(&self, id: NodeId, context: &str) -> Result<()> {
        if id >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "{context}: node {id} does not exist (graph has {} nodes)",
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        self.nodes.len() - 1
    }

    /// Declares a named input of a fixed shape.
    pub fn input(&mut self, name: &str, shape: Vec<usize>) -> Result<NodeId> {
        if self.inputs.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "input '{name}' declared twice"
            )));
        }
        let id = self.push(Op::Input { name: name.to_string() }, shape);
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    fn binary_elementwise(&mut self, op_name: &str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        self.check_id(a, op_name)?;
        self.check_id(b, op_name)?;
        let sa = &self.nodes[a].shape;
        let sb = &self.nodes[b].shape;
        if sa != sb {
            return Err(Error::shape(
                op_name,
                format!("operand shapes {sa:?} and {sb:?} differ"),
            ));
        }
        Ok(sa.clone())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_elementwise("add", a, b)?;
        Ok(self.push(Op::Add(a, b), shape))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_elementwise("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), shape))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_elementwise("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), shape))
    }

    /// Matrix product: `[m,n] x [n] -> [m]` or `[m,n] x [n,p] -> [m,p]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id(a, "matmul")?;
        self.check_id(b, "matmul")?;
        let sa = self.nodes[a].shape.clone();
        let sb = self.nodes[b].shape.clone();
        let shape = match sa.as_slice() {
            [m, n1] if sb.len() == 1 && sb[0] == *n1 => vec![*m],
            [m, n1] if sb.len() == 2 && sb[0] == *n1 => vec![*m, sb[1]],
            _ => {
                return Err(Error::shape(
                    "matmul",
                    format!("incompatible shapes {sa:?} x {sb:?}"),
                ))
            }
        };
        Ok(self.push(Op::MatMul(a, b), shape))
    }

    fn unary(&mut self, op_name: &str, src: NodeId) -> Result<Vec<usize>> {
        self.check_id(src, op_name)?;
        Ok(self.nodes[src].shape.clone())
    }

    pub fn tanh(&mut self, src: NodeId) -> Result<NodeId> {
        let shape = self.unary("tanh", src)?;
        Ok(self.push(Op::Tanh(src), shape))
    }

    pub fn relu(&mut self, src: NodeId) -> Result<NodeId> {
        let shape = self.unary("relu", src)?;
        Ok(self.push(Op::Relu(src), shape))
    }

    pub fn square(&mut self, src: NodeId) -> Result<NodeId> {
        let shape = self.unary("square", src)?;
        Ok(self.push(Op::Square(src), shape))
    }

    /// Sum over all elements; yields a scalar.
    pub fn sum(&mut self, src: NodeId) -> Result<NodeId> {
        self.check_id(src, "sum")?;
        Ok(self.push(Op::Sum(src), vec![]))
    }

    /// Mean over all elements; yields a scalar.
    pub fn mean(&mut self, src: NodeId) -> Result<NodeId> {
        self.check_id(src, "mean")?;
        if numel_of(&self.nodes[src].shape) == 0 {
            return Err(Error::shape("mean", "operand has zero elements"));
        }
        Ok(self.push(Op::Mean(src), vec![]))
    }

    /// Concatenates two rank-1 tensors.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id(a, "concat")?;
        self.check_id(b, "concat")?;
        let sa = &self.nodes[a].shape;
        let sb = &self.nodes[b].shape;
        if sa.len() != 1 || sb.len() != 1 {
            return Err(Error::shape(
                "concat",
                format!("expects rank-1 operands, got {sa:?} and {sb:?}"),
            ));
        }
        let len = sa[0] + sb[0];
        Ok(self.push(Op::Concat(a, b), vec![len]))
    }

    /// Contiguous slice `[start, start+len)` of a rank-1 tensor.
    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.check_id(src, "slice")?;
        let s = &self.nodes[src].shape;
        if s.len() != 1 {
            return Err(Error::shape(
                "slice",
                format!("expects a rank-1 operand, got {s:?}"),
            ));
        }
        if start + len > s[0] {
            return Err(Error::shape(
                "slice",
                format!("range {start}..{} exceeds length {}", start + len, s[0]),
            ));
        }
        Ok(self.push(Op::Slice { src, start, len }, vec![len]))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, src: NodeId, factor: f64) -> Result<NodeId> {
        let shape = self.unary("scale", src)?;
        if !factor.is_finite() {
            return Err(Error::NonFinite(format!("scale factor {factor}")));
        }
        Ok(self.push(Op::Scale { src, factor }, shape))
    }

    /// Reinterprets the element buffer under a new shape of equal size.
    pub fn reshape(&mut self, src: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.check_id(src, "reshape")?;
        let old = &self.nodes[src].shape;
        if numel_of(old) != numel_of(&shape) {
            return Err(Error::shape(
                "reshape",
                format!("cannot reshape {old:?} ({} elems) to {shape:?}", numel_of(old)),
            ));
        }
        Ok(self.push(Op::Reshape { src }, shape))
    }

    /// Runs the graph forward.  Every declared input must be bound with a
    /// tensor of the declared shape; extra bindings are ignored.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<Evaluation> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match &node.op {
                Op::Input { name } => {
                    let bound = bindings
                        .get(name)
                        .ok_or_else(|| Error::UnknownInput(name.clone()))?;
                    if bound.shape() != node.shape.as_slice() {
                        return Err(Error::shape(
                            "evaluate",
                            format!(
                                "input '{name}' declared {:?}, bound {:?}",
                                node.shape,
                                bound.shape()
                            ),
                        ));
                    }
                    if !bound.is_finite() {
                        return Err(Error::NonFinite(format!("input '{name}'")));
                    }
                    bound.clone()
                }
                Op::Add(a, b) => zip_map(&values[*a], &values[*b], |x, y| x + y),
                Op::Sub(a, b) => zip_map(&values[*a], &values[*b], |x, y| x - y),
                Op::Mul(a, b) => zip_map(&values[*a], &values[*b], |x, y| x * y),
                Op::MatMul(a, b) => matmul_forward(&values[*a], &values[*b], &node.shape),
                Op::Tanh(src) => map(&values[*src], f64::tanh),
                Op::Relu(src) => map(&values[*src], |x| x.max(0.0)),
                Op::Square(src) => map(&values[*src], |x| x * x),
                Op::Sum(src) => Tensor::scalar(values[*src].data().iter().sum()),
                Op::Mean(src) => {
                    let v = &values[*src];
                    Tensor::scalar(v.data().iter().sum::<f64>() / v.numel() as f64)
                }
                Op::Concat(a, b) => {
                    let mut data = values[*a].data().to_vec();
                    data.extend_from_slice(values[*b].data());
                    Tensor::from_vec(node.shape.clone(), data)?
                }
                Op::Slice { src, start, len } => {
                    let data = values[*src].data()[*start..*start + *len].to_vec();
                    Tensor::from_vec(node.shape.clone(), data)?
                }
                Op::Scale { src, factor } => map(&values[*src], |x| x * factor),
                Op::Reshape { src } => {
                    Tensor::from_vec(node.shape.clone(), values[*src].data().to_vec())?
                }
            };
            values.push(value);
        }
        Ok(Evaluation { values })
    }

    /// Backpropagates from a scalar `root` with cotangent `seed`.
    pub fn backward(&self, eval: &Evaluation, root: NodeId, seed: f64) -> Result<Gradients> {
        self.check_id(root, "backward")?;
        if eval.values[root].numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root node has shape {:?}, expected a scalar", self.nodes[root].shape),
            ));
        }
        let mut seed_tensor = Tensor::zeros(self.nodes[root].shape.clone());
        seed_tensor.data_mut()[0] = seed;
        self.backward_seeded(eval, &[(root, seed_tensor)])
    }

    /// Backpropagates from several nodes at once, each with an explicit
    /// cotangent of the node's shape.  Useful when part of an objective is
    /// computed outside the graph and only its gradient is fed back in.
    pub fn backward_seeded(
        &self,
        eval: &Evaluation,
        seeds: &[(NodeId, Tensor)],
    ) -> Result<Gradients> {
        if eval.values.len() != self.nodes.len() {
            return Err(Error::InvalidArgument(
                "evaluation does not belong to this graph".into(),
            ));
        }
        let mut cotangents: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            self.check_id(*id, "backward_seeded")?;
            if seed.shape() != self.nodes[*id].shape.as_slice() {
                return Err(Error::shape(
                    "backward_seeded",
                    format!(
                        "seed for node {id} has shape {:?}, node is {:?}",
                        seed.shape(),
                        self.nodes[*id].shape
                    ),
                ));
            }
            if !seed.is_finite() {
                return Err(Error::NonFinite(format!("seed for node {id}")));
            }
            accumulate(&mut cotangents[*id], seed);
        }

        // Nodes are stored in topological order; walking ids backwards visits
        // every consumer before its operands.
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = cotangents[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Input { .. } => {
                    // Terminal; re-stow the cotangent for collection below.
                    cotangents[id] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut cotangents[*a], &g);
                    accumulate(&mut cotangents[*b], &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut cotangents[*a], &g);
                    let neg = map(&g, |x| -x);
                    accumulate(&mut cotangents[*b], &neg);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&g, &eval.values[*b], |x, y| x * y);
                    let db = zip_map(&g, &eval.values[*a], |x, y| x * y);
                    accumulate(&mut cotangents[*a], &da);
                    accumulate(&mut cotangents[*b], &db);
                }
                Op::MatMul(a, b) => {
                    let (da, db) = matmul_backward(&g, &eval.values[*a], &eval.values[*b]);
                    accumulate(&mut cotangents[*a], &da);
                    accumulate(&mut cotangents[*b], &db);
                }
                Op::Tanh(src) => {
                    let d = zip_map(&g, &eval.values[id], |gi, yi| gi * (1.0 - yi * yi));
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Relu(src) => {
                    let d = zip_map(&g, &eval.values[*src], |gi, xi| {
                        if xi > 0.0 {
                            gi
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Square(src) => {
                    let d = zip_map(&g, &eval.values[*src], |gi, xi| 2.0 * xi * gi);
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Sum(src) => {
                    let gv = g.data()[0];
                    let d = map(&eval.values[*src], |_| gv);
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Mean(src) => {
                    let n = eval.values[*src].numel() as f64;
                    let gv = g.data()[0] / n;
                    let d = map(&eval.values[*src], |_| gv);
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Concat(a, b) => {
                    let na = eval.values[*a].numel();
                    let da = Tensor::from_vec(
                        eval.values[*a].shape().to_vec(),
                        g.data()[..na].to_vec(),
                    )?;
                    let db = Tensor::from_vec(
                        eval.values[*b].shape().to_vec(),
                        g.data()[na..].to_vec(),
                    )?;
                    accumulate(&mut cotangents[*a], &da);
                    accumulate(&mut cotangents[*b], &db);
                }
                Op::Slice { src, start, len } => {
                    let mut d = Tensor::zeros(eval.values[*src].shape().to_vec());
                    d.data_mut()[*start..*start + *len].copy_from_slice(g.data());
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Scale { src, factor } => {
                    let f = *factor;
                    let d = map(&g, |x| x * f);
                    accumulate(&mut cotangents[*src], &d);
                }
                Op::Reshape { src } => {
                    let d = Tensor::from_vec(
                        eval.values[*src].shape().to_vec(),
                        g.data().to_vec(),
                    )?;
                    accumulate(&mut cotangents[*src], &d);
                }
            }
        }

        let mut grads = Gradients::new();
        for (name, &id) in &self.inputs {
            if eval.values[id].requires_grad() {
                let g = cotangents[id]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.nodes[id].shape.clone()));
                grads.insert(name.clone(), g);
            }
        }
        Ok(grads)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    Tensor::from_vec(t.shape().to_vec(), data).expect("map preserves element count")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.numel(), b.numel());
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(a.shape().to_vec(), data).expect("zip_map preserves element count")
}

fn accumulate(slot: &mut Option<Tensor>, delta: &Tensor) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += d;
            }
        }
        None => *slot = Some(delta.clone()),
    }
}

fn matmul_forward(a: &Tensor, b: &Tensor, out_shape: &[usize]) -> Tensor {
    let m = a.shape()[0];
    let n = a.shape()[1];
    let p = if b.shape().len() == 2 { b.shape()[1] } else { 1 };
    let mut out = vec![0.0; m * p];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for k in 0..n {
            let aik = ad[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &bd[k * p..(k + 1) * p];
            let orow = &mut out[i * p..(i + 1) * p];
            for j in 0..p {
                orow[j] += aik * brow[j];
            }
        }
    }
    Tensor::from_vec(out_shape.to_vec(), out).expect("matmul output shape consistent")
}

fn matmul_backward(g: &Tensor, a: &Tensor, b: &Tensor) -> (Tensor, Tensor) {
    let m = a.shape()[0];
    let n = a.shape()[1];
    let p = if b.shape().len() == 2 { b.shape()[1] } else { 1 };
    let gd = g.data();
    let ad = a.data();
    let bd = b.data();

    // dA = g . B^T  (m x p)(p x n)
    let mut da = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..p {
            let gij = gd[i * p + j];
            if gij == 0.0 {
                continue;
            }
            for k in 0..n {
                da[i * n + k] += gij * bd[k * p + j];
            }
        }
    }
    // dB = A^T . g  (n x m)(m x p)
    let mut db = vec![0.0; n * p];
    for i in 0..m {
        for k in 0..n {
            let aik = ad[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..p {
                db[k * p + j] += aik * gd[i * p + j];
            }
        }
    }
    (
        Tensor::from_vec(a.shape().to_vec(), da).expect("dA shape matches A"),
        Tensor::from_vec(b.shape().to_vec(), db).expect("dB shape matches B"),
    )
}
