//! Wengert-style tape: every primitive application is appended as a node,
//! and `backward` walks the nodes in reverse accumulating vector-Jacobian
//! products into the inputs.

use std::fmt;
use std::str::FromStr;

use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive set. Shape rules:
///
/// - `Add`, `Sub`: equal shapes, or `[b, n] ± [n]` (the vector is added to every row).
/// - `Mul`: equal shapes, elementwise.
/// - `MatVec`: `[m, n] · [n] -> [m]`, or row-wise `[m, n] · [b, n] -> [b, m]`.
/// - `Inner`: `<[n], [n]> -> [1]`, or row-wise `<[b, n], [n]> -> [b]`.
/// - `Sigmoid`: elementwise.
/// - `Prelu`: `(x, slope[1])`, elementwise `x > 0 ? x : slope * x`.
/// - `Softmax`: over a vector, or per row of a matrix.
/// - `L2Normalize`: `x / max(|x|, eps)`, per row for matrices.
/// - `Concat`: vectors end to end, or matrices with equal row counts side by side.
/// - `Sum`: `[n] -> [1]`, `[b, n] -> [n]` (sum of rows).
/// - `Gather(ids)`: rows of a matrix, or elements of a vector; backward scatter-adds.
/// - `Scale`: `([b, n], [b]) -> [b, n]` scales row `i` by `s[i]`; `([n], [1])` scales the vector.
/// - `CrossEntropy { target }`: `[n] -> [1]`, `-log softmax(x)[target]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    MatVec,
    Inner,
    Sigmoid,
    Prelu,
    Softmax,
    L2Normalize { eps: f64 },
    Concat,
    Sum,
    Gather(Vec<usize>),
    Scale,
    CrossEntropy { target: usize },
}

/// Guard used by the model's memory normalization.
pub const DEFAULT_NORMALIZE_EPS: f64 = 1e-8;

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::MatVec => "matvec",
            Primitive::Inner => "inner",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Prelu => "prelu",
            Primitive::Softmax => "softmax",
            Primitive::L2Normalize { .. } => "l2-normalize",
            Primitive::Concat => "concat",
            Primitive::Sum => "sum",
            Primitive::Gather(_) => "gather",
            Primitive::Scale => "scale",
            Primitive::CrossEntropy { .. } => "cross-entropy",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::MatVec
            | Primitive::Inner
            | Primitive::Prelu
            | Primitive::Scale => Some(2),
            Primitive::Sigmoid
            | Primitive::Softmax
            | Primitive::L2Normalize { .. }
            | Primitive::Sum
            | Primitive::Gather(_)
            | Primitive::CrossEntropy { .. } => Some(1),
            Primitive::Concat => None,
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = TensorError;

    /// Parses argument-free primitive ids. `l2-normalize` gets the default guard.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "add" => Primitive::Add,
            "sub" => Primitive::Sub,
            "mul" | "elementwise-mul" => Primitive::Mul,
            "matvec" | "matrix-vector-product" => Primitive::MatVec,
            "inner" | "inner-product" => Primitive::Inner,
            "sigmoid" => Primitive::Sigmoid,
            "prelu" => Primitive::Prelu,
            "softmax" => Primitive::Softmax,
            "l2-normalize" => Primitive::L2Normalize {
                eps: DEFAULT_NORMALIZE_EPS,
            },
            "concat" => Primitive::Concat,
            "sum" => Primitive::Sum,
            "scale" => Primitive::Scale,
            "gather" | "row-gather" | "cross-entropy" => {
                return Err(TensorError::InvalidArgument(format!(
                    "primitive `{s}` needs arguments; construct it directly"
                )))
            }
            other => return Err(TensorError::UnknownPrimitive(other.to_string())),
        })
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf,
    Op { prim: Primitive, inputs: Vec<Var> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    kind: NodeKind,
    trainable: bool,
    needs_grad: bool,
}

/// Append-only record of a computation. Node order is the order of
/// construction, which is always a valid topological order.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` for nodes that are not trainable leaves.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            kind: NodeKind::Leaf,
            trainable,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var, TensorError> {
        for v in inputs {
            if v.0 >= self.nodes.len() {
                return Err(TensorError::IndexOutOfRange {
                    op: prim.name(),
                    index: v.0,
                    bound: self.nodes.len(),
                });
            }
        }
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = eval(&prim, &values)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            kind: NodeKind::Op {
                prim,
                inputs: inputs.to_vec(),
            },
            trainable: false,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn matvec(&mut self, mat: Var, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::MatVec, &[mat, x])
    }

    pub fn inner(&mut self, x: Var, y: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Inner, &[x, y])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Prelu, &[x, slope])
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Softmax, &[x])
    }

    pub fn l2_normalize(&mut self, x: Var, eps: f64) -> Result<Var, TensorError> {
        self.apply(Primitive::L2Normalize { eps }, &[x])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.apply(Primitive::Concat, parts)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sum, &[x])
    }

    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Result<Var, TensorError> {
        self.apply(Primitive::Gather(ids), &[table])
    }

    pub fn scale(&mut self, x: Var, factors: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Scale, &[x, factors])
    }

    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::CrossEntropy { target }, &[logits])
    }

    /// Recomputes every node from the leaves, in tape order.
    pub fn replay(&self) -> Result<Vec<Tensor>, TensorError> {
        let mut out: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match &node.kind {
                NodeKind::Leaf => node.value.clone(),
                NodeKind::Op { prim, inputs } => {
                    let args: Vec<&Tensor> = inputs.iter().map(|v| &out[v.0]).collect();
                    eval(prim, &args)?
                }
            };
            out.push(value);
        }
        Ok(out)
    }

    /// Reverse sweep from a scalar. Trainable leaves the loss does not
    /// depend on receive zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let NodeKind::Op { prim, inputs } = &node.kind else {
                continue;
            };
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let needs: Vec<bool> = inputs.iter().map(|v| self.nodes[v.0].needs_grad).collect();
            if !needs.iter().any(|&n| n) {
                continue;
            }
            let args: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = vjp(prim, &args, &node.value, &g, &needs);
            for (v, ig) in inputs.iter().zip(input_grads) {
                if let Some(ig) = ig {
                    match &mut grads[v.0] {
                        Some(acc) => acc.add_assign(&ig),
                        slot @ None => *slot = Some(ig),
                    }
                }
            }
        }

        for (idx, node) in self.nodes.iter().enumerate() {
            if node.trainable {
                if grads[idx].is_none() {
                    grads[idx] = Some(Tensor::zeros(node.value.shape()));
                }
            } else {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn mismatch(prim: &Primitive, inputs: &[&Tensor]) -> TensorError {
    TensorError::ShapeMismatch {
        op: prim.name(),
        shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// Broadcast rule shared by add/sub: `Some(true)` when `b` is a row vector
/// added to every row of `a`.
fn row_broadcast(a: &Tensor, b: &Tensor) -> Option<bool> {
    if a.shape() == b.shape() {
        Some(false)
    } else if a.rank() == 2 && b.rank() == 1 && a.cols() == b.len() {
        Some(true)
    } else {
        None
    }
}

fn eval(prim: &Primitive, x: &[&Tensor]) -> Result<Tensor, TensorError> {
    if let Some(n) = prim.arity() {
        if x.len() != n {
            return Err(TensorError::Arity {
                op: prim.name(),
                expected: n,
                got: x.len(),
            });
        }
    } else if x.is_empty() {
        return Err(TensorError::Arity {
            op: prim.name(),
            expected: 1,
            got: 0,
        });
    }

    match prim {
        Primitive::Add | Primitive::Sub => {
            let (a, b) = (x[0], x[1]);
            let bc = row_broadcast(a, b).ok_or_else(|| mismatch(prim, x))?;
            let sign = if *prim == Primitive::Add { 1.0 } else { -1.0 };
            let bn = b.len();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, av)| {
                    let bv = if bc { b.data()[i % bn] } else { b.data()[i] };
                    av + sign * bv
                })
                .collect();
            Tensor::new(a.shape().to_vec(), data)
        }
        Primitive::Mul => {
            let (a, b) = (x[0], x[1]);
            if a.shape() != b.shape() {
                return Err(mismatch(prim, x));
            }
            let data = a.data().iter().zip(b.data()).map(|(p, q)| p * q).collect();
            Tensor::new(a.shape().to_vec(), data)
        }
        Primitive::MatVec => {
            let (w, v) = (x[0], x[1]);
            if w.rank() != 2 || v.rank() > 2 || v.cols() != w.cols() {
                return Err(mismatch(prim, x));
            }
            let m = w.rows();
            let mut data = Vec::with_capacity(v.rows() * m);
            for r in 0..v.rows() {
                let xr = v.row(r);
                for i in 0..m {
                    data.push(dot(w.row(i), xr));
                }
            }
            let shape = if v.rank() == 1 {
                vec![m]
            } else {
                vec![v.rows(), m]
            };
            Tensor::new(shape, data)
        }
        Primitive::Inner => {
            let (a, y) = (x[0], x[1]);
            if y.rank() != 1 || a.rank() > 2 || a.cols() != y.len() {
                return Err(mismatch(prim, x));
            }
            let data: Vec<f64> = (0..a.rows()).map(|r| dot(a.row(r), y.data())).collect();
            Tensor::new(vec![data.len()], data)
        }
        Primitive::Sigmoid => {
            let data = x[0].data().iter().map(|&v| sigmoid(v)).collect();
            Tensor::new(x[0].shape().to_vec(), data)
        }
        Primitive::Prelu => {
            let (v, slope) = (x[0], x[1]);
            if !slope.is_scalar() {
                return Err(mismatch(prim, x));
            }
            let a = slope.item();
            let data = v
                .data()
                .iter()
                .map(|&z| if z > 0.0 { z } else { a * z })
                .collect();
            Tensor::new(v.shape().to_vec(), data)
        }
        Primitive::Softmax => {
            let v = x[0];
            if v.rank() > 2 {
                return Err(mismatch(prim, x));
            }
            let mut out = v.clone();
            let c = v.cols();
            for row in out.data_mut().chunks_mut(c) {
                softmax_in_place(row);
            }
            Ok(out)
        }
        Primitive::L2Normalize { eps } => {
            let v = x[0];
            if v.rank() > 2 {
                return Err(mismatch(prim, x));
            }
            if eps.is_nan() || *eps <= 0.0 {
                return Err(TensorError::InvalidArgument(format!(
                    "l2-normalize eps must be positive, got {eps}"
                )));
            }
            let mut out = v.clone();
            let c = v.cols();
            for row in out.data_mut().chunks_mut(c) {
                let n = dot(row, row).sqrt().max(*eps);
                for z in row.iter_mut() {
                    *z /= n;
                }
            }
            Ok(out)
        }
        Primitive::Concat => {
            let rank = x[0].rank();
            if rank == 1 && x.iter().all(|t| t.rank() == 1) {
                let data: Vec<f64> = x.iter().flat_map(|t| t.data().iter().copied()).collect();
                return Tensor::new(vec![data.len()], data);
            }
            let rows = x[0].rows();
            if rank != 2 || x.iter().any(|t| t.rank() != 2 || t.rows() != rows) {
                return Err(mismatch(prim, x));
            }
            let cols: usize = x.iter().map(|t| t.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for t in x {
                    data.extend_from_slice(t.row(r));
                }
            }
            Tensor::new(vec![rows, cols], data)
        }
        Primitive::Sum => {
            let v = x[0];
            match v.rank() {
                1 => Ok(Tensor::scalar(v.data().iter().sum())),
                2 => {
                    let mut acc = vec![0.0; v.cols()];
                    for r in 0..v.rows() {
                        for (a, b) in acc.iter_mut().zip(v.row(r)) {
                            *a += b;
                        }
                    }
                    Tensor::new(vec![v.cols()], acc)
                }
                _ => Err(mismatch(prim, x)),
            }
        }
        Primitive::Gather(ids) => {
            let table = x[0];
            if ids.is_empty() || table.rank() > 2 {
                return Err(mismatch(prim, x));
            }
            let (n, width) = if table.rank() == 1 {
                (table.len(), 1)
            } else {
                (table.rows(), table.cols())
            };
            let mut data = Vec::with_capacity(ids.len() * width);
            for &id in ids {
                if id >= n {
                    return Err(TensorError::IndexOutOfRange {
                        op: prim.name(),
                        index: id,
                        bound: n,
                    });
                }
                data.extend_from_slice(&table.data()[id * width..(id + 1) * width]);
            }
            let shape = if table.rank() == 1 {
                vec![ids.len()]
            } else {
                vec![ids.len(), width]
            };
            Tensor::new(shape, data)
        }
        Primitive::Scale => {
            let (v, s) = (x[0], x[1]);
            let ok = match v.rank() {
                1 => s.is_scalar(),
                2 => s.rank() == 1 && s.len() == v.rows(),
                _ => false,
            };
            if !ok {
                return Err(mismatch(prim, x));
            }
            let c = v.cols();
            let data = v
                .data()
                .iter()
                .enumerate()
                .map(|(i, z)| z * s.data()[i / c])
                .collect();
            Tensor::new(v.shape().to_vec(), data)
        }
        Primitive::CrossEntropy { target } => {
            let v = x[0];
            if v.rank() != 1 {
                return Err(mismatch(prim, x));
            }
            if *target >= v.len() {
                return Err(TensorError::IndexOutOfRange {
                    op: prim.name(),
                    index: *target,
                    bound: v.len(),
                });
            }
            let max = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + v.data().iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            Ok(Tensor::scalar(lse - v.data()[*target]))
        }
    }
}

/// Vector-Jacobian products. Returns one entry per input; `None` where the
/// input does not need a gradient.
fn vjp(
    prim: &Primitive,
    x: &[&Tensor],
    out: &Tensor,
    g: &Tensor,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let want = |i: usize| needs.get(i).copied().unwrap_or(false);
    match prim {
        Primitive::Add | Primitive::Sub => {
            let sign = if *prim == Primitive::Add { 1.0 } else { -1.0 };
            let ga = want(0).then(|| g.clone());
            let gb = want(1).then(|| {
                let b = x[1];
                let mut gb = if b.shape() == g.shape() {
                    g.clone()
                } else {
                    let mut acc = Tensor::zeros(b.shape());
                    let n = b.len();
                    for (i, v) in g.data().iter().enumerate() {
                        acc.data_mut()[i % n] += v;
                    }
                    acc
                };
                if sign < 0.0 {
                    gb.scale_in_place(-1.0);
                }
                gb
            });
            vec![ga, gb]
        }
        Primitive::Mul => {
            let ga = want(0).then(|| elementwise(g, x[1], |p, q| p * q));
            let gb = want(1).then(|| elementwise(g, x[0], |p, q| p * q));
            vec![ga, gb]
        }
        Primitive::MatVec => {
            let (w, v) = (x[0], x[1]);
            let m = w.rows();
            let n = w.cols();
            let gw = want(0).then(|| {
                let mut gw = Tensor::zeros(w.shape());
                let d = gw.data_mut();
                for r in 0..v.rows() {
                    let gr = &g.data()[r * m..(r + 1) * m];
                    let xr = v.row(r);
                    for i in 0..m {
                        let gi = gr[i];
                        if gi == 0.0 {
                            continue;
                        }
                        for (acc, xv) in d[i * n..(i + 1) * n].iter_mut().zip(xr) {
                            *acc += gi * xv;
                        }
                    }
                }
                gw
            });
            let gx = want(1).then(|| {
                let mut gx = Tensor::zeros(v.shape());
                let d = gx.data_mut();
                for r in 0..v.rows() {
                    let gr = &g.data()[r * m..(r + 1) * m];
                    let dst = &mut d[r * n..(r + 1) * n];
                    for (i, gi) in gr.iter().enumerate() {
                        if *gi == 0.0 {
                            continue;
                        }
                        for (acc, wv) in dst.iter_mut().zip(w.row(i)) {
                            *acc += gi * wv;
                        }
                    }
                }
                gx
            });
            vec![gw, gx]
        }
        Primitive::Inner => {
            let (a, y) = (x[0], x[1]);
            let ga = want(0).then(|| {
                let mut ga = Tensor::zeros(a.shape());
                let c = a.cols();
                for (r, row) in ga.data_mut().chunks_mut(c).enumerate() {
                    let gr = g.data()[r];
                    for (z, yv) in row.iter_mut().zip(y.data()) {
                        *z = gr * yv;
                    }
                }
                ga
            });
            let gy = want(1).then(|| {
                let mut gy = Tensor::zeros(y.shape());
                for r in 0..a.rows() {
                    let gr = g.data()[r];
                    for (z, av) in gy.data_mut().iter_mut().zip(a.row(r)) {
                        *z += gr * av;
                    }
                }
                gy
            });
            vec![ga, gy]
        }
        Primitive::Sigmoid => {
            vec![want(0).then(|| elementwise(g, out, |gv, s| gv * s * (1.0 - s)))]
        }
        Primitive::Prelu => {
            let (v, slope) = (x[0], x[1]);
            let a = slope.item();
            let gx = want(0).then(|| elementwise(g, v, |gv, z| if z > 0.0 { gv } else { a * gv }));
            let ga = want(1).then(|| {
                let s: f64 = g
                    .data()
                    .iter()
                    .zip(v.data())
                    .filter(|(_, z)| **z <= 0.0)
                    .map(|(gv, z)| gv * z)
                    .sum();
                Tensor::scalar(s)
            });
            vec![gx, ga]
        }
        Primitive::Softmax => vec![want(0).then(|| {
            let c = out.cols();
            let mut gx = Tensor::zeros(out.shape());
            for ((dst, s), gr) in gx
                .data_mut()
                .chunks_mut(c)
                .zip(out.data().chunks(c))
                .zip(g.data().chunks(c))
            {
                let inner = dot(gr, s);
                for ((d, sv), gv) in dst.iter_mut().zip(s).zip(gr) {
                    *d = sv * (gv - inner);
                }
            }
            gx
        })],
        Primitive::L2Normalize { eps } => vec![want(0).then(|| {
            let v = x[0];
            let c = v.cols();
            let mut gx = Tensor::zeros(v.shape());
            for (((dst, xr), yr), gr) in gx
                .data_mut()
                .chunks_mut(c)
                .zip(v.data().chunks(c))
                .zip(out.data().chunks(c))
                .zip(g.data().chunks(c))
            {
                let norm = dot(xr, xr).sqrt();
                if norm > *eps {
                    let gy = dot(gr, yr);
                    for ((d, gv), yv) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = (gv - yv * gy) / norm;
                    }
                } else {
                    for (d, gv) in dst.iter_mut().zip(gr) {
                        *d = gv / eps;
                    }
                }
            }
            gx
        })],
        Primitive::Concat => {
            let mut grads = Vec::with_capacity(x.len());
            if x[0].rank() == 1 {
                let mut offset = 0;
                for (i, t) in x.iter().enumerate() {
                    let n = t.len();
                    grads.push(want(i).then(|| {
                        Tensor::new(t.shape().to_vec(), g.data()[offset..offset + n].to_vec())
                            .expect("concat slice")
                    }));
                    offset += n;
                }
            } else {
                let total = g.cols();
                let mut offset = 0;
                for (i, t) in x.iter().enumerate() {
                    let c = t.cols();
                    grads.push(want(i).then(|| {
                        let mut data = Vec::with_capacity(t.len());
                        for r in 0..t.rows() {
                            let base = r * total + offset;
                            data.extend_from_slice(&g.data()[base..base + c]);
                        }
                        Tensor::new(t.shape().to_vec(), data).expect("concat slice")
                    }));
                    offset += c;
                }
            }
            grads
        }
        Primitive::Sum => vec![want(0).then(|| {
            let v = x[0];
            let c = v.cols();
            let data = (0..v.len())
                .map(|i| {
                    if v.rank() == 1 {
                        g.item()
                    } else {
                        g.data()[i % c]
                    }
                })
                .collect();
            Tensor::new(v.shape().to_vec(), data).expect("sum grad")
        })],
        Primitive::Gather(ids) => vec![want(0).then(|| {
            let table = x[0];
            let width = if table.rank() == 1 { 1 } else { table.cols() };
            let mut gt = Tensor::zeros(table.shape());
            let d = gt.data_mut();
            for (k, &id) in ids.iter().enumerate() {
                for (dst, gv) in d[id * width..(id + 1) * width]
                    .iter_mut()
                    .zip(&g.data()[k * width..(k + 1) * width])
                {
                    *dst += gv;
                }
            }
            gt
        })],
        Primitive::Scale => {
            let (v, s) = (x[0], x[1]);
            let c = v.cols();
            let gx = want(0).then(|| {
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| gv * s.data()[i / c])
                    .collect();
                Tensor::new(v.shape().to_vec(), data).expect("scale grad")
            });
            let gs = want(1).then(|| {
                let data = g
                    .data()
                    .chunks(c)
                    .zip(v.data().chunks(c))
                    .map(|(gr, vr)| dot(gr, vr))
                    .collect();
                Tensor::new(s.shape().to_vec(), data).expect("scale grad")
            });
            vec![gx, gs]
        }
        Primitive::CrossEntropy { target } => vec![want(0).then(|| {
            let mut probs = x[0].clone();
            softmax_in_place(probs.data_mut());
            probs.data_mut()[*target] -= 1.0;
            probs.scale_in_place(g.item());
            probs
        })],
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| f(*p, *q))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("elementwise shapes already checked")
}
