//! Reverse-mode differentiation over matrix-valued primitives.
//!
//! A [`Tape`] records every primitive applied during a forward pass together
//! with its value. [`Tape::backward`] walks the record in reverse and
//! accumulates vector-Jacobian products. Nodes that do not depend on any
//! trainable leaf are skipped, so constants (target networks, frozen critics)
//! cost nothing in the backward sweep.

use std::collections::BTreeMap;

use super::params::ParameterSet;
use super::tensor::{gemm, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    /// `x·W + b` with inputs `[x, W, b]`.
    Dense,
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Neg,
    Scale(f64),
    Shift(f64),
    Relu,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Square,
    Softplus,
    Clamp(f64, f64),
    SoftmaxRows,
    LogSoftmaxRows,
    SumRows,
    SumCols,
    Sum,
    Mean,
    RowNorm,
    SliceCols { start: usize, len: usize },
    ConcatCols,
    Gather(Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Names of the leaves a [`ParameterSet`] was bound to.
#[derive(Clone, Debug, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` was not bound to the tape"))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Gradient set congruent with the bound parameters; parameters that did
    /// not influence the output get zeros.
    pub fn collect(&self, tape: &Tape, grads: &Gradients) -> ParameterSet {
        let mut out = ParameterSet::new();
        for (name, var) in &self.vars {
            let g = match grads.wrt(*var) {
                Some(g) => g.clone(),
                None => {
                    let (r, c) = tape.value(*var).shape();
                    Tensor::zeros(r, c)
                }
            };
            out.insert_unchecked(name.clone(), g);
        }
        out
    }
}

/// Per-node adjoints produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast {a:?} with {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (r, c) = broadcast_shape(a.shape(), b.shape());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if a.rows() == 1 { 0 } else { i };
        let ib = if b.rows() == 1 { 0 } else { i };
        for j in 0..c {
            let ja = if a.cols() == 1 { 0 } else { j };
            let jb = if b.cols() == 1 { 0 } else { j };
            out.push(f(a.get(ia, ja), b.get(ib, jb)));
        }
    }
    Tensor::new(r, c, out)
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for i in 0..g.rows() {
        let io = if shape.0 == 1 { 0 } else { i };
        for j in 0..g.cols() {
            let jo = if shape.1 == 1 { 0 } else { j };
            let v = out.get(io, jo) + g.get(i, j);
            out.set(io, jo, v);
        }
    }
    out
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let row = x.row_slice(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (j, v) in row.iter().enumerate() {
            out.set(i, j, v - lse);
        }
    }
    out
}

fn row_reduce(x: &Tensor, f: impl Fn(&[f64]) -> f64) -> Tensor {
    Tensor::new(x.rows(), 1, (0..x.rows()).map(|i| f(x.row_slice(i))).collect())
}

/// Forward rule shared by recording and replay.
fn eval(op: &Op, ins: &[&Tensor]) -> Tensor {
    match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::Dense => {
            let (x, w, b) = (ins[0], ins[1], ins[2]);
            assert_eq!(b.shape(), (1, w.cols()), "dense bias must be 1x{}", w.cols());
            let mut y = gemm(x, false, w, false);
            let cols = y.cols();
            for (k, v) in y.data_mut().iter_mut().enumerate() {
                *v += b.data()[k % cols];
            }
            y
        }
        Op::MatMul => gemm(ins[0], false, ins[1], false),
        Op::Add => broadcast_binary(ins[0], ins[1], |a, b| a + b),
        Op::Sub => broadcast_binary(ins[0], ins[1], |a, b| a - b),
        Op::Mul => broadcast_binary(ins[0], ins[1], |a, b| a * b),
        Op::Div => broadcast_binary(ins[0], ins[1], |a, b| a / b),
        Op::Min => ins[0].zip_map(ins[1], f64::min),
        Op::Neg => ins[0].map(|x| -x),
        Op::Scale(c) => ins[0].map(|x| c * x),
        Op::Shift(c) => ins[0].map(|x| x + c),
        Op::Relu => ins[0].map(|x| x.max(0.0)),
        Op::Tanh => ins[0].map(f64::tanh),
        Op::Exp => ins[0].map(f64::exp),
        Op::Log => ins[0].map(f64::ln),
        Op::Sqrt => ins[0].map(f64::sqrt),
        Op::Square => ins[0].map(|x| x * x),
        Op::Softplus => ins[0].map(softplus),
        Op::Clamp(lo, hi) => ins[0].map(|x| x.clamp(*lo, *hi)),
        Op::SoftmaxRows => log_softmax_rows(ins[0]).map(f64::exp),
        Op::LogSoftmaxRows => log_softmax_rows(ins[0]),
        Op::SumRows => row_reduce(ins[0], |r| r.iter().sum()),
        Op::SumCols => {
            let x = ins[0];
            let mut out = Tensor::zeros(1, x.cols());
            for i in 0..x.rows() {
                for (j, v) in x.row_slice(i).iter().enumerate() {
                    out.data_mut()[j] += v;
                }
            }
            out
        }
        Op::Sum => Tensor::scalar(ins[0].sum()),
        Op::Mean => Tensor::scalar(ins[0].sum() / ins[0].len() as f64),
        Op::RowNorm => row_reduce(ins[0], |r| r.iter().map(|v| v * v).sum::<f64>().sqrt()),
        Op::SliceCols { start, len } => {
            let x = ins[0];
            assert!(start + len <= x.cols(), "column slice out of range");
            let mut data = Vec::with_capacity(x.rows() * len);
            for i in 0..x.rows() {
                data.extend_from_slice(&x.row_slice(i)[*start..start + len]);
            }
            Tensor::new(x.rows(), *len, data)
        }
        Op::ConcatCols => {
            let rows = ins[0].rows();
            let cols: usize = ins.iter().map(|t| t.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for t in ins {
                    assert_eq!(t.rows(), rows, "concat row mismatch");
                    data.extend_from_slice(t.row_slice(i));
                }
            }
            Tensor::new(rows, cols, data)
        }
        Op::Gather(idx) => {
            let x = ins[0];
            assert_eq!(idx.len(), x.rows(), "gather needs one index per row");
            Tensor::new(x.rows(), 1, idx.iter().enumerate().map(|(i, &j)| x.get(i, j)).collect())
        }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, Vec::new(), value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, Vec::new(), value, false)
    }

    /// Copies a node's current value into a fresh constant, cutting the
    /// gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Binds every entry of `params` as a leaf.
    pub fn bind(&mut self, params: &ParameterSet, trainable: bool) -> ParamVars {
        let mut vars = BTreeMap::new();
        for (name, t) in params.iter() {
            let v = if trainable {
                self.leaf(t.clone())
            } else {
                self.constant(t.clone())
            };
            vars.insert(name.to_string(), v);
        }
        ParamVars { vars }
    }

    fn apply(&mut self, op: Op, inputs: Vec<Var>) -> Var {
        let value = {
            let ins: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            eval(&op, &ins)
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(op, inputs, value, requires_grad)
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Var {
        self.apply(Op::Dense, vec![x, w, b])
    }
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.apply(Op::MatMul, vec![a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.apply(Op::Add, vec![a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.apply(Op::Sub, vec![a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.apply(Op::Mul, vec![a, b])
    }
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.apply(Op::Div, vec![a, b])
    }
    /// Elementwise minimum of two equally shaped nodes.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.apply(Op::Min, vec![a, b])
    }
    pub fn neg(&mut self, a: Var) -> Var {
        self.apply(Op::Neg, vec![a])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.apply(Op::Scale(c), vec![a])
    }
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.apply(Op::Shift(c), vec![a])
    }
    pub fn relu(&mut self, a: Var) -> Var {
        self.apply(Op::Relu, vec![a])
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.apply(Op::Tanh, vec![a])
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.apply(Op::Exp, vec![a])
    }
    pub fn log(&mut self, a: Var) -> Var {
        self.apply(Op::Log, vec![a])
    }
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.apply(Op::Sqrt, vec![a])
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.apply(Op::Square, vec![a])
    }
    pub fn softplus(&mut self, a: Var) -> Var {
        self.apply(Op::Softplus, vec![a])
    }
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.apply(Op::Clamp(lo, hi), vec![a])
    }
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        self.apply(Op::SoftmaxRows, vec![a])
    }
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        self.apply(Op::LogSoftmaxRows, vec![a])
    }
    /// `n×c → n×1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        self.apply(Op::SumRows, vec![a])
    }
    /// `n×c → 1×c`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        self.apply(Op::SumCols, vec![a])
    }
    pub fn sum(&mut self, a: Var) -> Var {
        self.apply(Op::Sum, vec![a])
    }
    pub fn mean(&mut self, a: Var) -> Var {
        self.apply(Op::Mean, vec![a])
    }
    /// Euclidean norm of each row, `n×c → n×1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        self.apply(Op::RowNorm, vec![a])
    }
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        self.apply(Op::SliceCols { start, len }, vec![a])
    }
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        self.apply(Op::ConcatCols, parts.to_vec())
    }
    /// Picks column `idx[i]` of row `i`, `n×k → n×1`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Var {
        self.apply(Op::Gather(idx), vec![a])
    }

    /// `log(1 − tanh²(w))` in the overflow-free form `2(log 2 − w − softplus(−2w))`.
    pub fn log_one_minus_tanh_sq(&mut self, w: Var) -> Var {
        let m2w = self.scale(w, -2.0);
        let sp = self.softplus(m2w);
        let s = self.add(w, sp);
        let t = self.neg(s);
        let t = self.shift(t, std::f64::consts::LN_2);
        self.scale(t, 2.0)
    }

    /// Vector-Jacobian product of `output` against `output_grad`.
    pub fn backward(&self, output: Var, output_grad: &Tensor) -> Gradients {
        assert_eq!(
            self.value(output).shape(),
            output_grad.shape(),
            "output gradient shape differs from output"
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(output_grad.clone());
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contribs = self.vjp(node, &g);
            grads[i] = Some(g);
            for (inp, c) in node.inputs.iter().zip(contribs) {
                if let Some(c) = c {
                    if !self.nodes[inp.0].requires_grad {
                        continue;
                    }
                    match &mut grads[inp.0] {
                        Some(acc) => acc.add_assign(&c),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
        }
        Gradients { grads }
    }

    /// Backward from a `1×1` node with unit seed.
    pub fn backward_scalar(&self, loss: Var) -> Gradients {
        self.backward(loss, &Tensor::scalar(1.0))
    }

    fn vjp(&self, node: &Node, g: &Tensor) -> Vec<Option<Tensor>> {
        let val = |k: usize| &self.nodes[node.inputs[k].0].value;
        let need = |k: usize| self.nodes[node.inputs[k].0].requires_grad;
        let y = &node.value;
        match &node.op {
            Op::Leaf => vec![],
            Op::Dense => {
                let (x, w) = (val(0), val(1));
                let gx = need(0).then(|| gemm(g, false, w, true));
                let gw = need(1).then(|| gemm(x, true, g, false));
                let gb = need(2).then(|| eval(&Op::SumCols, &[g]));
                vec![gx, gw, gb]
            }
            Op::MatMul => {
                let (a, b) = (val(0), val(1));
                vec![
                    need(0).then(|| gemm(g, false, b, true)),
                    need(1).then(|| gemm(a, true, g, false)),
                ]
            }
            Op::Add => vec![
                need(0).then(|| reduce_to(g.clone(), val(0).shape())),
                need(1).then(|| reduce_to(g.clone(), val(1).shape())),
            ],
            Op::Sub => vec![
                need(0).then(|| reduce_to(g.clone(), val(0).shape())),
                need(1).then(|| reduce_to(g.map(|v| -v), val(1).shape())),
            ],
            Op::Mul => {
                let (a, b) = (val(0), val(1));
                vec![
                    need(0).then(|| reduce_to(broadcast_binary(g, b, |g, b| g * b), a.shape())),
                    need(1).then(|| reduce_to(broadcast_binary(g, a, |g, a| g * a), b.shape())),
                ]
            }
            Op::Div => {
                let (a, b) = (val(0), val(1));
                let ga = need(0).then(|| reduce_to(broadcast_binary(g, b, |g, b| g / b), a.shape()));
                let gb = need(1).then(|| {
                    // d(a/b)/db = −y/b
                    let t = broadcast_binary(g, y, |g, y| g * y);
                    reduce_to(broadcast_binary(&t, b, |t, b| -t / b), b.shape())
                });
                vec![ga, gb]
            }
            Op::Min => {
                let (a, b) = (val(0), val(1));
                let pick_a = |i: usize| a.data()[i] <= b.data()[i];
                let mut ga = Tensor::zeros(a.rows(), a.cols());
                let mut gb = Tensor::zeros(b.rows(), b.cols());
                for (i, gv) in g.data().iter().enumerate() {
                    if pick_a(i) {
                        ga.data_mut()[i] = *gv;
                    } else {
                        gb.data_mut()[i] = *gv;
                    }
                }
                vec![need(0).then_some(ga), need(1).then_some(gb)]
            }
            Op::Neg => vec![Some(g.map(|v| -v))],
            Op::Scale(c) => vec![Some(g.map(|v| c * v))],
            Op::Shift(_) => vec![Some(g.clone())],
            Op::Relu => vec![Some(g.zip_map(val(0), |g, x| if x > 0.0 { g } else { 0.0 }))],
            Op::Tanh => vec![Some(g.zip_map(y, |g, y| g * (1.0 - y * y)))],
            Op::Exp => vec![Some(g.zip_map(y, |g, y| g * y))],
            Op::Log => vec![Some(g.zip_map(val(0), |g, x| g / x))],
            Op::Sqrt => vec![Some(g.zip_map(y, |g, y| g / (2.0 * y)))],
            Op::Square => vec![Some(g.zip_map(val(0), |g, x| 2.0 * g * x))],
            Op::Softplus => vec![Some(g.zip_map(val(0), |g, x| g * sigmoid(x)))],
            Op::Clamp(lo, hi) => vec![Some(g.zip_map(val(0), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 }))],
            Op::SoftmaxRows => {
                let mut out = Tensor::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let dot: f64 = g.row_slice(i).iter().zip(y.row_slice(i)).map(|(a, b)| a * b).sum();
                    for j in 0..g.cols() {
                        out.set(i, j, y.get(i, j) * (g.get(i, j) - dot));
                    }
                }
                vec![Some(out)]
            }
            Op::LogSoftmaxRows => {
                let mut out = Tensor::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let gs: f64 = g.row_slice(i).iter().sum();
                    for j in 0..g.cols() {
                        out.set(i, j, g.get(i, j) - y.get(i, j).exp() * gs);
                    }
                }
                vec![Some(out)]
            }
            Op::SumRows => {
                let x = val(0);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    for j in 0..x.cols() {
                        out.set(i, j, g.get(i, 0));
                    }
                }
                vec![Some(out)]
            }
            Op::SumCols => {
                let x = val(0);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    for j in 0..x.cols() {
                        out.set(i, j, g.get(0, j));
                    }
                }
                vec![Some(out)]
            }
            Op::Sum => {
                let x = val(0);
                vec![Some(Tensor::full(x.rows(), x.cols(), g.item()))]
            }
            Op::Mean => {
                let x = val(0);
                vec![Some(Tensor::full(x.rows(), x.cols(), g.item() / x.len() as f64))]
            }
            Op::RowNorm => {
                let x = val(0);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let r = y.get(i, 0);
                    if r > 0.0 {
                        for j in 0..x.cols() {
                            out.set(i, j, g.get(i, 0) * x.get(i, j) / r);
                        }
                    }
                }
                vec![Some(out)]
            }
            Op::SliceCols { start, len } => {
                let x = val(0);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    for j in 0..*len {
                        out.set(i, start + j, g.get(i, j));
                    }
                }
                vec![Some(out)]
            }
            Op::ConcatCols => {
                let mut offset = 0;
                let mut outs = Vec::with_capacity(node.inputs.len());
                for k in 0..node.inputs.len() {
                    let w = val(k).cols();
                    outs.push(need(k).then(|| eval(&Op::SliceCols { start: offset, len: w }, &[g])));
                    offset += w;
                }
                outs
            }
            Op::Gather(idx) => {
                let x = val(0);
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for (i, &j) in idx.iter().enumerate() {
                    out.set(i, j, g.get(i, 0));
                }
                vec![Some(out)]
            }
        }
    }

    /// Recomputes every node from the leaves.
    pub fn replay(&self) -> Vec<Tensor> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                _ => {
                    let ins: Vec<&Tensor> = node.inputs.iter().map(|v| &values[v.0]).collect();
                    eval(&node.op, &ins)
                }
            };
            values.push(v);
        }
        values
    }

    /// True when [`Tape::replay`] reproduces every recorded value bit for bit.
    pub fn replay_matches(&self) -> bool {
        self.replay().iter().zip(&self.nodes).all(|(a, n)| {
            a.shape() == n.value.shape() && a.data().iter().zip(n.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_derivative_two_w() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(w, w);
        let g = t.backward_scalar(y);
        assert_eq!(g.wrt(w).unwrap().item(), 6.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::scalar(3.0));
        let c = t.constant(Tensor::scalar(5.0));
        let z = t.scale(w, 0.0);
        let y = t.add(z, c);
        let g = t.backward_scalar(y);
        assert_eq!(g.wrt(w).unwrap().item(), 0.0);
        assert!(g.wrt(c).is_none());
    }

    #[test]
    fn softmax_is_normalised_and_log_softmax_agrees() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(2, 4, vec![1.0, -2.0, 0.5, 30.0, 0.0, 0.0, 0.0, 0.0]));
        let p = t.softmax_rows(x);
        let lp = t.log_softmax_rows(x);
        for i in 0..2 {
            let row = t.value(p).row_slice(i);
            assert!(row.iter().all(|&v| v > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..4 {
                assert!((t.value(lp).get(i, j) - row[j].ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gather_routes_gradient_only_to_selected_column() {
        let mut t = Tape::new();
        let q = t.leaf(Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let picked = t.gather(q, vec![1, 2]);
        let s = t.sum(picked);
        let g = t.backward_scalar(s);
        assert_eq!(g.wrt(q).unwrap().data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn broadcasting_reduces_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::new(3, 2, vec![1.0; 6]));
        let b = t.leaf(Tensor::row(&[2.0, 3.0]));
        let c = t.leaf(Tensor::column(&[1.0, 2.0, 3.0]));
        let ab = t.mul(a, b);
        let abc = t.add(ab, c);
        let s = t.sum(abc);
        let g = t.backward_scalar(s);
        assert_eq!(g.wrt(b).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(g.wrt(c).unwrap().data(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.wrt(a).unwrap().data(), &[2.0, 3.0, 2.0, 3.0, 2.0, 3.0]);
    }

    #[test]
    fn log_one_minus_tanh_sq_is_stable() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::row(&[0.0, 0.3, -2.0, 40.0, -40.0]));
        let l = t.log_one_minus_tanh_sq(w);
        let v = t.value(l);
        assert_eq!(v.get(0, 0), 0.0);
        for (j, &x) in [0.3f64, -2.0].iter().enumerate() {
            assert!((v.get(0, j + 1) - (1.0 - x.tanh().powi(2)).ln()).abs() < 1e-12);
        }
        assert!(v.is_finite());
        // log(1 − tanh²(40)) ≈ 2 log 2 − 80
        assert!((v.get(0, 3) - (2.0 * std::f64::consts::LN_2 - 80.0)).abs() < 1e-9);
    }
}
