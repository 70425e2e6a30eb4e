//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as it is evaluated, so a node only
//! exists once its forward value has been computed. Nodes may only reference
//! earlier nodes, which keeps the graph acyclic and makes creation order a
//! valid topological order. [`Graph::backward`] walks that order in reverse.
//!
//! Parameters live in a [`ParamStore`] outside the graph; a graph copies the
//! values it reads, and `backward` returns a [`Gradients`] map keyed by
//! [`ParamId`]. Input leaves never receive gradients.

use std::collections::HashMap;

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use super::DiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct ParamEntry {
    name: String,
    value: Tensor,
}

/// Named trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique within a store.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, DiffError> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(DiffError::DuplicateParam(name));
        }
        self.entries.push(ParamEntry { name, value });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e.name.as_str(), &e.value))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Gradient slots for the parameters reached by one backward pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        self.by_param.insert(id, grad);
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_finite(&self) -> bool {
        self.by_param.values().all(Tensor::is_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine { x: NodeId, scale: f64 },
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    OffDiagSoftmax(NodeId),
    ClampLog { x: NodeId, floor: f64 },
    LogSigmoid { x: NodeId, floor: f64 },
    ConcatCols(NodeId, NodeId),
    PickSum { x: NodeId, picks: Vec<Pick> },
    Mean(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::OffDiagSoftmax(_) => "off_diag_softmax",
            Op::ClampLog { .. } => "clamp_log",
            Op::LogSigmoid { .. } => "log_sigmoid",
            Op::ConcatCols(..) => "concat_cols",
            Op::PickSum { .. } => "pick_sum",
            Op::Mean(_) => "mean",
        }
    }
}

/// One weighted element read by [`Graph::pick_sum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pick {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// A recorded computation; the crate's value graph.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_slice_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// `max(v, floor)` that keeps NaN (`f64::max` would drop it), so a
/// non-finite forward pass stays visible in the loss.
fn floor_at(v: f64, floor: f64) -> f64 {
    if v < floor {
        floor
    } else {
        v
    }
}

/// Numerically stable `ln σ(x)`.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of an evaluated node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, id: NodeId) -> Result<f64, DiffError> {
        self.nodes
            .get(id.0)
            .ok_or(DiffError::UnknownNode(id.0))?
            .value
            .item()
            .ok_or_else(|| DiffError::NotScalar { node: self.label(id) })
    }

    fn label(&self, id: NodeId) -> String {
        match &self.nodes[id.0].op {
            Op::Input(name) => format!("#{} input '{name}'", id.0),
            op => format!("#{} {}", id.0, op.name()),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&Tensor, DiffError> {
        self.nodes.get(id.0).map(|n| &n.value).ok_or(DiffError::UnknownNode(id.0))
    }

    fn mismatch(&self, op: &str, a: NodeId, b: NodeId) -> DiffError {
        DiffError::ShapeMismatch {
            node: format!("{op}({}, {})", self.label(a), self.label(b)),
            left: self.nodes[a.0].value.shape(),
            right: self.nodes[b.0].value.shape(),
        }
    }

    /// Named input leaf.
    pub fn input(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.push(Op::Input(name.into()), value)
    }

    /// Input leaf whose shape must equal `expected`.
    pub fn input_checked(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        expected_cols: usize,
    ) -> Result<NodeId, DiffError> {
        let name = name.into();
        if value.cols() != expected_cols {
            return Err(DiffError::ShapeMismatch {
                node: format!("input '{name}'"),
                left: [value.rows(), expected_cols],
                right: value.shape(),
            });
        }
        Ok(self.input(name, value))
    }

    /// Leaf holding a copy of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.get(id).clone())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        if va.cols() != vb.rows() {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = Tensor::zeros(va.rows(), vb.cols());
        matmul_into(va, vb, &mut out);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// Adds a `1×c` row to every row of an `n×c` tensor.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, DiffError> {
        let (vx, vb) = (self.check(x)?, self.check(bias)?);
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(self.mismatch("add_bias", x, bias));
        }
        let mut out = vx.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_slice_mut(r).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddBias(x, bias), out))
    }

    fn zip_same(
        &mut self,
        name: &str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, DiffError> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        if va.shape() != vb.shape() {
            return Err(self.mismatch(name, a, b));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data).expect("shape preserved");
        Ok(self.push(op, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId, DiffError> {
        let out = self.check(x)?.map(|v| scale * v + shift);
        Ok(self.push(Op::Affine { x, scale }, out))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let out = self.check(x)?.map(|v| floor_at(v, 0.0));
        Ok(self.push(Op::Relu(x), out))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId, DiffError> {
        let out = self.check(x)?.map(|v| if v > 0.0 { v } else { slope * v });
        Ok(self.push(Op::LeakyRelu(x, slope), out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let out = self.check(x)?.map(sigmoid);
        Ok(self.push(Op::Sigmoid(x), out))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let out = self.check(x)?.map(f64::tanh);
        Ok(self.push(Op::Tanh(x), out))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let out = softmax_rows(self.check(x)?);
        Ok(self.push(Op::Softmax(x), out))
    }

    /// Row-wise log-softmax, evaluated as `x - logsumexp(x)`.
    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let out = log_softmax_rows(self.check(x)?);
        Ok(self.push(Op::LogSoftmax(x), out))
    }

    /// Row-wise softmax of a square matrix over its off-diagonal entries; the
    /// diagonal of the result is exactly zero.
    pub fn off_diag_softmax(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let vx = self.check(x)?;
        if vx.rows() != vx.cols() || vx.rows() < 2 {
            return Err(DiffError::ShapeMismatch {
                node: format!("off_diag_softmax({})", self.label(x)),
                left: vx.shape(),
                right: [vx.rows(), vx.rows()],
            });
        }
        let k = vx.rows();
        let mut out = Tensor::zeros(k, k);
        for i in 0..k {
            let row = vx.row_slice(i);
            let max = (0..k).filter(|&j| j != i).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = (0..k).filter(|&j| j != i).map(|j| (row[j] - max).exp()).sum();
            for j in (0..k).filter(|&j| j != i) {
                out.set(i, j, (row[j] - max).exp() / total);
            }
        }
        Ok(self.push(Op::OffDiagSoftmax(x), out))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn clamp_log(&mut self, x: NodeId, floor: f64) -> Result<NodeId, DiffError> {
        let out = self.check(x)?.map(|v| floor_at(v, floor).ln());
        Ok(self.push(Op::ClampLog { x, floor }, out))
    }

    /// `ln(max(σ(x), floor))`, evaluated without forming `σ(x)`.
    pub fn log_sigmoid(&mut self, x: NodeId, floor: f64) -> Result<NodeId, DiffError> {
        let log_floor = floor.ln();
        let out = self.check(x)?.map(|v| floor_at(log_sigmoid(v), log_floor));
        Ok(self.push(Op::LogSigmoid { x, floor }, out))
    }

    /// `[a | b]` column-wise concatenation.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        if va.rows() != vb.rows() {
            return Err(self.mismatch("concat_cols", a, b));
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row_slice(r));
            data.extend_from_slice(vb.row_slice(r));
        }
        let out = Tensor::from_vec(va.rows(), cols, data).expect("shape preserved");
        Ok(self.push(Op::ConcatCols(a, b), out))
    }

    /// `Σ weight · x[row, col]` over the given picks, as a `1×1` node.
    pub fn pick_sum(&mut self, x: NodeId, picks: Vec<Pick>) -> Result<NodeId, DiffError> {
        let vx = self.check(x)?;
        if let Some(bad) = picks.iter().find(|p| p.row >= vx.rows() || p.col >= vx.cols()) {
            return Err(DiffError::ShapeMismatch {
                node: format!("pick_sum({})", self.label(x)),
                left: vx.shape(),
                right: [bad.row + 1, bad.col + 1],
            });
        }
        let total = picks.iter().map(|p| p.weight * vx.get(p.row, p.col)).sum();
        Ok(self.push(Op::PickSum { x, picks }, Tensor::scalar(total)))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let vx = self.check(x)?;
        if vx.is_empty() {
            return Err(DiffError::EmptyInput { node: self.label(x) });
        }
        let m = vx.sum() / vx.len() as f64;
        Ok(self.push(Op::Mean(x), Tensor::scalar(m)))
    }

    /// Reverse sweep from a scalar node. Returns gradients for every parameter
    /// leaf that the loss depends on.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, DiffError> {
        let loss_value = self.check(loss)?;
        if loss_value.shape() != [1, 1] {
            return Err(DiffError::NotScalar { node: self.label(loss) });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut grads = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input(_) => {}
                Op::Param(id) => match grads.by_param.get_mut(id) {
                    Some(g) => g.add_assign(&upstream),
                    None => {
                        grads.by_param.insert(*id, upstream);
                    }
                },
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = accumulate(&mut adj, *a, va.shape());
                    matmul_nt_into(&upstream, vb, ga);
                    let gb = accumulate(&mut adj, *b, vb.shape());
                    matmul_tn_into(va, &upstream, gb);
                }
                Op::AddBias(x, b) => {
                    accumulate(&mut adj, *x, upstream.shape()).add_assign(&upstream);
                    let gb = accumulate(&mut adj, *b, [1, upstream.cols()]);
                    for r in 0..upstream.rows() {
                        for (g, u) in gb.data_mut().iter_mut().zip(upstream.row_slice(r)) {
                            *g += u;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, upstream.shape()).add_assign(&upstream);
                    accumulate(&mut adj, *b, upstream.shape()).add_assign(&upstream);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, upstream.shape()).add_assign(&upstream);
                    let gb = accumulate(&mut adj, *b, upstream.shape());
                    for (g, u) in gb.data_mut().iter_mut().zip(upstream.data()) {
                        *g -= u;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).clone(), self.value(*b).clone());
                    let ga = accumulate(&mut adj, *a, upstream.shape());
                    for ((g, u), y) in ga.data_mut().iter_mut().zip(upstream.data()).zip(vb.data()) {
                        *g += u * y;
                    }
                    let gb = accumulate(&mut adj, *b, upstream.shape());
                    for ((g, u), x) in gb.data_mut().iter_mut().zip(upstream.data()).zip(va.data()) {
                        *g += u * x;
                    }
                }
                Op::Affine { x, scale } => {
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for (g, u) in gx.data_mut().iter_mut().zip(upstream.data()) {
                        *g += scale * u;
                    }
                }
                Op::Relu(x) => {
                    let vx = self.value(*x);
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for ((g, u), v) in gx.data_mut().iter_mut().zip(upstream.data()).zip(vx.data()) {
                        if *v > 0.0 {
                            *g += u;
                        }
                    }
                }
                Op::LeakyRelu(x, slope) => {
                    let vx = self.value(*x);
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for ((g, u), v) in gx.data_mut().iter_mut().zip(upstream.data()).zip(vx.data()) {
                        *g += if *v > 0.0 { *u } else { slope * u };
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for ((g, u), s) in gx.data_mut().iter_mut().zip(upstream.data()).zip(node.value.data()) {
                        *g += u * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for ((g, u), t) in gx.data_mut().iter_mut().zip(upstream.data()).zip(node.value.data()) {
                        *g += u * (1.0 - t * t);
                    }
                }
                Op::Softmax(x) | Op::OffDiagSoftmax(x) => {
                    // Diagonal entries of the masked variant are identically zero,
                    // so the same Jacobian-vector product applies.
                    let s = &node.value;
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for r in 0..s.rows() {
                        let (srow, urow) = (s.row_slice(r), upstream.row_slice(r));
                        let dot: f64 = srow.iter().zip(urow).map(|(a, b)| a * b).sum();
                        for ((g, si), ui) in gx.row_slice_mut(r).iter_mut().zip(srow).zip(urow) {
                            *g += si * (ui - dot);
                        }
                    }
                }
                Op::LogSoftmax(x) => {
                    let ls = &node.value;
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for r in 0..ls.rows() {
                        let urow = upstream.row_slice(r);
                        let total: f64 = urow.iter().sum();
                        for ((g, l), u) in gx.row_slice_mut(r).iter_mut().zip(ls.row_slice(r)).zip(urow) {
                            *g += u - l.exp() * total;
                        }
                    }
                }
                Op::ClampLog { x, floor } => {
                    let vx = self.value(*x);
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for ((g, u), v) in gx.data_mut().iter_mut().zip(upstream.data()).zip(vx.data()) {
                        if *v > *floor {
                            *g += u / v;
                        }
                    }
                }
                Op::LogSigmoid { x, floor } => {
                    let log_floor = floor.ln();
                    let vx = self.value(*x);
                    let gx = accumulate(&mut adj, *x, upstream.shape());
                    for ((g, u), v) in gx.data_mut().iter_mut().zip(upstream.data()).zip(vx.data()) {
                        if log_sigmoid(*v) > log_floor {
                            // d/dv ln σ(v) = 1 − σ(v) = σ(−v)
                            *g += u * sigmoid(-v);
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let rows = upstream.rows();
                    let ga = accumulate(&mut adj, *a, [rows, ca]);
                    for r in 0..rows {
                        for (g, u) in ga.row_slice_mut(r).iter_mut().zip(&upstream.row_slice(r)[..ca]) {
                            *g += u;
                        }
                    }
                    let gb = accumulate(&mut adj, *b, [rows, cb]);
                    for r in 0..rows {
                        for (g, u) in gb.row_slice_mut(r).iter_mut().zip(&upstream.row_slice(r)[ca..]) {
                            *g += u;
                        }
                    }
                }
                Op::PickSum { x, picks } => {
                    let u = upstream.data()[0];
                    let gx = accumulate(&mut adj, *x, self.value(*x).shape());
                    for p in picks {
                        let cur = gx.get(p.row, p.col);
                        gx.set(p.row, p.col, cur + u * p.weight);
                    }
                }
                Op::Mean(x) => {
                    let shape = self.value(*x).shape();
                    let share = upstream.data()[0] / (shape[0] * shape[1]) as f64;
                    let gx = accumulate(&mut adj, *x, shape);
                    for g in gx.data_mut() {
                        *g += share;
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, shape: [usize; 2]) -> &mut Tensor {
    adj[id.0].get_or_insert_with(|| Tensor::zeros(shape[0], shape[1]))
}
