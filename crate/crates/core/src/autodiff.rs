//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles, in the
//! order they were created, so node ids are already a topological order.
//! [`Tape::backward`] walks the tape once from the loss towards the leaves
//! and returns a [`Gradients`] table for every node that requires a gradient.
//!
//! ```
//! use safer_core::autodiff::Tape;
//! use safer_core::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::column(vec![1.0, 2.0]), true);
//! let loss = x.mul(x).unwrap().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
//! ```

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::sparse::Csr;
use crate::tensor::{gemm_acc, Tensor};

/// Clamp applied to `atanh` arguments so the result stays finite.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Relu,
    Elu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    Atanh,
    Exp,
    Ln,
    Sqrt,
    Recip,
    Neg,
    Softplus,
    Square,
    ClampMax(f64),
    ClampMin(f64),
    Scale(f64),
    AddConst(f64),
}

impl UnaryOp {
    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Relu => x.max(0.0),
            UnaryOp::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            UnaryOp::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Atanh => x.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Ln => x.ln(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Recip => 1.0 / x,
            UnaryOp::Neg => -x,
            UnaryOp::Softplus => softplus(x),
            UnaryOp::Square => x * x,
            UnaryOp::ClampMax(c) => x.min(c),
            UnaryOp::ClampMin(c) => x.max(c),
            UnaryOp::Scale(c) => c * x,
            UnaryOp::AddConst(c) => x + c,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Relu => f64::from(u8::from(x > 0.0)),
            UnaryOp::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            UnaryOp::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            UnaryOp::Sigmoid => y * (1.0 - y),
            UnaryOp::Tanh => 1.0 - y * y,
            UnaryOp::Atanh => {
                if x.abs() < ATANH_CLAMP {
                    1.0 / (1.0 - x * x)
                } else {
                    0.0
                }
            }
            UnaryOp::Exp => y,
            UnaryOp::Ln => 1.0 / x,
            UnaryOp::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            UnaryOp::Recip => -y * y,
            UnaryOp::Neg => -1.0,
            UnaryOp::Softplus => sigmoid(x),
            UnaryOp::Square => 2.0 * x,
            UnaryOp::ClampMax(c) => f64::from(u8::from(x < c)),
            UnaryOp::ClampMin(c) => f64::from(u8::from(x > c)),
            UnaryOp::Scale(c) => c,
            UnaryOp::AddConst(_) => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    SpMM(Rc<Csr>, usize),
    Binary(BinaryOp, usize, usize),
    Unary(UnaryOp, usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    RowNorm(usize),
    ConcatCols(Vec<usize>),
    SliceCols { x: usize, start: usize },
    GatherRows(usize, Rc<Vec<usize>>),
    EdgeSoftmax(usize, Rc<Csr>),
    EdgeAggregate { alpha: usize, h: usize, pattern: Rc<Csr> },
    Unfold { x: usize, seq: usize, width: usize },
    SegmentMax { x: usize, argmax: Vec<usize> },
    WeightedBce { logits: usize, labels: Rc<Vec<f64>>, positive_weight: f64 },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&[f64]> {
        self.grads.get(var.id).and_then(|g| g.as_deref())
    }

    /// Gradient buffer, or zeros when nothing flowed into `var`.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Vec<f64> {
        self.get(var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; var.value().len()])
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        assert!(!self.consumed.get(), "operation recorded on a consumed tape");
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse pass from a scalar `loss`. The tape cannot be reused afterwards.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Contract("loss belongs to another tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::Contract("tape already consumed by backward".into()));
        }
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite gradient".into()));
            }
        }
        Ok(Gradients { grads })
    }
}

fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let len = nodes[id].value.len();
    Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
}

fn bcast_idx(r: usize, c: usize, rows: usize, cols: usize) -> usize {
    let rr = if rows == 1 { 0 } else { r };
    let cc = if cols == 1 { 0 } else { c };
    rr * cols + cc
}

fn backprop(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (m, k) = av.dims2();
            let n = bv.cols();
            if let Some(ga) = acc(grads, nodes, *a) {
                // dA = G · Bᵀ
                let bt = bv.transpose();
                gemm_acc(g, bt.data(), ga, m, n, k);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                // dB = Aᵀ · G
                let at = av.transpose();
                gemm_acc(at.data(), g, gb, k, m, n);
            }
        }
        Op::SpMM(mat, x) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let n = out.cols();
                for r in 0..mat.rows() {
                    let g_row = &g[r * n..(r + 1) * n];
                    for (c, v) in mat.row(r) {
                        for (o, &gv) in gx[c * n..(c + 1) * n].iter_mut().zip(g_row) {
                            *o += v * gv;
                        }
                    }
                }
            }
        }
        Op::Binary(op, a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (ar, ac) = av.dims2();
            let (br, bc) = bv.dims2();
            let (or, oc) = out.dims2();
            let same = (ar, ac) == (br, bc);
            if let Some(ga) = acc(grads, nodes, *a) {
                for r in 0..or {
                    for c in 0..oc {
                        let o = r * oc + c;
                        let ia = if same { o } else { bcast_idx(r, c, ar, ac) };
                        let ib = if same { o } else { bcast_idx(r, c, br, bc) };
                        let d = match op {
                            BinaryOp::Add | BinaryOp::Sub => 1.0,
                            BinaryOp::Mul => bv.data()[ib],
                            BinaryOp::Div => 1.0 / bv.data()[ib],
                        };
                        ga[ia] += g[o] * d;
                    }
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for r in 0..or {
                    for c in 0..oc {
                        let o = r * oc + c;
                        let ia = if same { o } else { bcast_idx(r, c, ar, ac) };
                        let ib = if same { o } else { bcast_idx(r, c, br, bc) };
                        let d = match op {
                            BinaryOp::Add => 1.0,
                            BinaryOp::Sub => -1.0,
                            BinaryOp::Mul => av.data()[ia],
                            BinaryOp::Div => {
                                let bval = bv.data()[ib];
                                -av.data()[ia] / (bval * bval)
                            }
                        };
                        gb[ib] += g[o] * d;
                    }
                }
            }
        }
        Op::Unary(op, a) => {
            let xv = Rc::clone(&nodes[*a].value);
            if let Some(ga) = acc(grads, nodes, *a) {
                for (((gi, &x), &y), &go) in ga.iter_mut().zip(xv.data()).zip(out.data()).zip(g) {
                    *gi += go * op.derivative(x, y);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().for_each(|v| *v += g[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                let scale = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|v| *v += scale);
            }
        }
        Op::SumRows(a) => {
            let cols = nodes[*a].value.cols();
            if let Some(ga) = acc(grads, nodes, *a) {
                for (r, row) in ga.chunks_mut(cols).enumerate() {
                    row.iter_mut().for_each(|v| *v += g[r]);
                }
            }
        }
        Op::RowNorm(a) => {
            let xv = Rc::clone(&nodes[*a].value);
            let cols = xv.cols();
            if let Some(ga) = acc(grads, nodes, *a) {
                for r in 0..xv.rows() {
                    let norm = out.data()[r];
                    if norm == 0.0 {
                        continue;
                    }
                    let scale = g[r] / norm;
                    for c in 0..cols {
                        ga[r * cols + c] += scale * xv.data()[r * cols + c];
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let oc = out.cols();
            let mut offset = 0;
            for &p in parts {
                let pc = nodes[p].value.cols();
                if let Some(gp) = acc(grads, nodes, p) {
                    for (r, row) in gp.chunks_mut(pc).enumerate() {
                        for (c, v) in row.iter_mut().enumerate() {
                            *v += g[r * oc + offset + c];
                        }
                    }
                }
                offset += pc;
            }
        }
        Op::SliceCols { x, start } => {
            let xc = nodes[*x].value.cols();
            let oc = out.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for r in 0..out.rows() {
                    for c in 0..oc {
                        gx[r * xc + start + c] += g[r * oc + c];
                    }
                }
            }
        }
        Op::GatherRows(x, idx) => {
            let cols = out.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (i, &src) in idx.iter().enumerate() {
                    for c in 0..cols {
                        gx[src * cols + c] += g[i * cols + c];
                    }
                }
            }
        }
        Op::EdgeSoftmax(x, pattern) => {
            if let Some(gx) = acc(grads, nodes, *x) {
                let y = out.data();
                let ptr = pattern.row_ptr();
                for r in 0..pattern.rows() {
                    let span = ptr[r]..ptr[r + 1];
                    let dot: f64 = span.clone().map(|e| g[e] * y[e]).sum();
                    for e in span {
                        gx[e] += y[e] * (g[e] - dot);
                    }
                }
            }
        }
        Op::EdgeAggregate { alpha, h, pattern } => {
            let hv = Rc::clone(&nodes[*h].value);
            let av = Rc::clone(&nodes[*alpha].value);
            let d = hv.cols();
            let ptr = pattern.row_ptr();
            let col = pattern.col_idx();
            if let Some(ga) = acc(grads, nodes, *alpha) {
                for r in 0..pattern.rows() {
                    let go = &g[r * d..(r + 1) * d];
                    for e in ptr[r]..ptr[r + 1] {
                        let hr = hv.row_slice(col[e]);
                        ga[e] += go.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            if let Some(gh) = acc(grads, nodes, *h) {
                for r in 0..pattern.rows() {
                    let go = &g[r * d..(r + 1) * d];
                    for e in ptr[r]..ptr[r + 1] {
                        let w = av.data()[e];
                        let dst = &mut gh[col[e] * d..(col[e] + 1) * d];
                        for (t, &s) in dst.iter_mut().zip(go) {
                            *t += w * s;
                        }
                    }
                }
            }
        }
        Op::Unfold { x, seq, width } => {
            let e = nodes[*x].value.cols();
            let windows = seq - width + 1;
            let docs = nodes[*x].value.rows() / seq;
            let oc = out.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for doc in 0..docs {
                    for t in 0..windows {
                        let orow = doc * windows + t;
                        for k in 0..*width {
                            let xrow = doc * seq + t + k;
                            for c in 0..e {
                                gx[xrow * e + c] += g[orow * oc + k * e + c];
                            }
                        }
                    }
                }
            }
        }
        Op::SegmentMax { x, argmax } => {
            let cols = out.cols();
            if let Some(gx) = acc(grads, nodes, *x) {
                for (i, &src_row) in argmax.iter().enumerate() {
                    gx[src_row * cols + i % cols] += g[i];
                }
            }
        }
        Op::WeightedBce {
            logits,
            labels,
            positive_weight,
        } => {
            let zv = Rc::clone(&nodes[*logits].value);
            if let Some(gz) = acc(grads, nodes, *logits) {
                let n = labels.len() as f64;
                for (i, (&z, &y)) in zv.data().iter().zip(labels.iter()).enumerate() {
                    let w = if y == 1.0 { *positive_weight } else { 1.0 };
                    gz[i] += g[0] * w * (sigmoid(z) - y) / n;
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn dims2(&self) -> (usize, usize) {
        self.value().dims2()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn check_tape(&self, other: Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract("operands recorded on different tapes".into()))
        }
    }

    fn rg(&self, others: &[Var<'t>]) -> bool {
        self.requires_grad() || others.iter().any(Var::requires_grad)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(rhs)?;
        let out = crate::tensor::matmul_plain(&self.value(), &rhs.value())?;
        Ok(self.tape.push(out, Op::MatMul(self.id, rhs.id), self.rg(&[rhs])))
    }

    fn binary(self, op: BinaryOp, rhs: Var<'t>) -> Result<Var<'t>> {
        self.check_tape(rhs)?;
        let a = self.value();
        let b = rhs.value();
        let (ar, ac) = a.dims2();
        let (br, bc) = b.dims2();
        let or = broadcast_dim(ar, br).ok_or_else(|| Error::dim("broadcast", a.shape(), b.shape()))?;
        let oc = broadcast_dim(ac, bc).ok_or_else(|| Error::dim("broadcast", a.shape(), b.shape()))?;
        let f = |x: f64, y: f64| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        };
        let data: Vec<f64> = if (ar, ac) == (br, bc) {
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut d = Vec::with_capacity(or * oc);
            for r in 0..or {
                for c in 0..oc {
                    d.push(f(a.data()[bcast_idx(r, c, ar, ac)], b.data()[bcast_idx(r, c, br, bc)]));
                }
            }
            d
        };
        let out = Tensor::matrix(or, oc, data)?;
        Ok(self.tape.push(out, Op::Binary(op, self.id, rhs.id), self.rg(&[rhs])))
    }

    /// Elementwise sum; either side may broadcast along a length-1 axis.
    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Add, rhs)
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Sub, rhs)
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Mul, rhs)
    }

    pub fn div(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(BinaryOp::Div, rhs)
    }

    pub fn unary(self, op: UnaryOp) -> Var<'t> {
        let a = self.value();
        let data = a.data().iter().map(|&x| op.apply(x)).collect();
        let (r, c) = a.dims2();
        let out = Tensor::matrix(r, c, data).expect("unary preserves shape");
        self.tape.push(out, Op::Unary(op, self.id), self.requires_grad())
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(UnaryOp::Relu)
    }

    pub fn elu(self) -> Var<'t> {
        self.unary(UnaryOp::Elu)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(UnaryOp::LeakyRelu(slope))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(UnaryOp::Sigmoid)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(UnaryOp::Tanh)
    }

    /// `atanh` with its argument clamped to `±ATANH_CLAMP`.
    pub fn atanh(self) -> Var<'t> {
        self.unary(UnaryOp::Atanh)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(UnaryOp::Exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(UnaryOp::Ln)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(UnaryOp::Sqrt)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(UnaryOp::Recip)
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(UnaryOp::Neg)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(UnaryOp::Softplus)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(UnaryOp::Square)
    }

    pub fn clamp_max(self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::ClampMax(c))
    }

    pub fn clamp_min(self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::ClampMin(c))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::Scale(c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(UnaryOp::AddConst(c))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), self.requires_grad())
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.tape.push(Tensor::scalar(s), Op::Mean(self.id), self.requires_grad())
    }

    /// Per-row sums as an `n×1` column.
    pub fn sum_rows(self) -> Var<'t> {
        let v = self.value();
        let sums = v.data().chunks(v.cols()).map(|r| r.iter().sum()).collect();
        self.tape.push(Tensor::column(sums), Op::SumRows(self.id), self.requires_grad())
    }

    /// Per-row L2 norms as an `n×1` column; the gradient of a zero row is zero.
    pub fn row_norm(self) -> Var<'t> {
        let v = self.value();
        let norms = v
            .data()
            .chunks(v.cols())
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        self.tape.push(Tensor::column(norms), Op::RowNorm(self.id), self.requires_grad())
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let rows = first.dims2().0;
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        for (p, v) in parts.iter().zip(&values) {
            first.check_tape(*p)?;
            if v.rows() != rows {
                return Err(Error::dim("concat_cols", &[rows], v.shape()));
            }
        }
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row_slice(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = parts.iter().any(Var::requires_grad);
        Ok(first
            .tape
            .push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), rg))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        let v = self.value();
        let (rows, cols) = v.dims2();
        if start >= end || end > cols {
            return Err(Error::Contract(format!("column slice {start}..{end} of width {cols}")));
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&v.row_slice(r)[start..end]);
        }
        let out = Tensor::matrix(rows, end - start, data)?;
        Ok(self
            .tape
            .push(out, Op::SliceCols { x: self.id, start }, self.requires_grad()))
    }

    /// Row `i` of the result is row `idx[i]` of `self`.
    pub fn gather_rows(self, idx: Rc<Vec<usize>>) -> Result<Var<'t>> {
        let v = self.value();
        let (rows, cols) = v.dims2();
        if idx.is_empty() {
            return Err(Error::Contract("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            if i >= rows {
                return Err(Error::Contract(format!("row {i} out of {rows}")));
            }
            data.extend_from_slice(v.row_slice(i));
        }
        let out = Tensor::matrix(idx.len(), cols, data)?;
        Ok(self.tape.push(out, Op::GatherRows(self.id, idx), self.requires_grad()))
    }

    /// Softmax of an `E×1` edge-score column within each row segment of `pattern`.
    pub fn edge_softmax(self, pattern: Rc<Csr>) -> Result<Var<'t>> {
        let v = self.value();
        if v.len() != pattern.nnz() || v.cols() != 1 {
            return Err(Error::dim("edge_softmax", v.shape(), &[pattern.nnz(), 1]));
        }
        let x = v.data();
        let mut out = vec![0.0; x.len()];
        let ptr = pattern.row_ptr();
        for r in 0..pattern.rows() {
            let span = ptr[r]..ptr[r + 1];
            if span.is_empty() {
                continue;
            }
            let max = x[span.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for e in span.clone() {
                out[e] = (x[e] - max).exp();
                total += out[e];
            }
            for e in span {
                out[e] /= total;
            }
        }
        let t = Tensor::matrix(x.len(), 1, out)?;
        Ok(self.tape.push(t, Op::EdgeSoftmax(self.id, pattern), self.requires_grad()))
    }

    /// `out[u] = Σ_e alpha[e] · h[col(e)]` over the entries `e` of row `u`.
    pub fn edge_aggregate(alpha: Var<'t>, h: Var<'t>, pattern: Rc<Csr>) -> Result<Var<'t>> {
        alpha.check_tape(h)?;
        let av = alpha.value();
        let hv = h.value();
        if av.len() != pattern.nnz() || hv.rows() != pattern.cols() {
            return Err(Error::dim("edge_aggregate", av.shape(), hv.shape()));
        }
        let d = hv.cols();
        let mut out = vec![0.0; pattern.rows() * d];
        let ptr = pattern.row_ptr();
        let col = pattern.col_idx();
        for r in 0..pattern.rows() {
            let orow = &mut out[r * d..(r + 1) * d];
            for e in ptr[r]..ptr[r + 1] {
                let w = av.data()[e];
                for (o, &x) in orow.iter_mut().zip(hv.row_slice(col[e])) {
                    *o += w * x;
                }
            }
        }
        let t = Tensor::matrix(pattern.rows(), d, out)?;
        let rg = alpha.requires_grad() || h.requires_grad();
        Ok(alpha.tape.push(
            t,
            Op::EdgeAggregate {
                alpha: alpha.id,
                h: h.id,
                pattern,
            },
            rg,
        ))
    }

    /// Sliding windows over stacked sequences of length `seq`.
    ///
    /// `self` is `(docs·seq) × e`; the result is `(docs·(seq−width+1)) × (width·e)`
    /// where each row concatenates `width` consecutive rows of one sequence.
    pub fn unfold(self, seq: usize, width: usize) -> Result<Var<'t>> {
        let v = self.value();
        let (rows, e) = v.dims2();
        if width == 0 || seq < width || rows % seq != 0 {
            return Err(Error::Contract(format!(
                "unfold width {width} over sequences of {seq} ({rows} rows)"
            )));
        }
        let docs = rows / seq;
        let windows = seq - width + 1;
        let mut data = Vec::with_capacity(docs * windows * width * e);
        for doc in 0..docs {
            for t in 0..windows {
                let start = (doc * seq + t) * e;
                data.extend_from_slice(&v.data()[start..start + width * e]);
            }
        }
        let out = Tensor::matrix(docs * windows, width * e, data)?;
        Ok(self.tape.push(
            out,
            Op::Unfold {
                x: self.id,
                seq,
                width,
            },
            self.requires_grad(),
        ))
    }

    /// Column-wise max over consecutive row segments of length `seg`.
    pub fn segment_max(self, seg: usize) -> Result<Var<'t>> {
        let v = self.value();
        let (rows, cols) = v.dims2();
        if seg == 0 || rows % seg != 0 {
            return Err(Error::Contract(format!("segment {seg} does not divide {rows} rows")));
        }
        let segments = rows / seg;
        let mut data = Vec::with_capacity(segments * cols);
        let mut argmax = Vec::with_capacity(segments * cols);
        for s in 0..segments {
            for c in 0..cols {
                let mut best_row = s * seg;
                let mut best = v.get(best_row, c);
                for r in s * seg + 1..(s + 1) * seg {
                    let x = v.get(r, c);
                    if x > best {
                        best = x;
                        best_row = r;
                    }
                }
                data.push(best);
                argmax.push(best_row);
            }
        }
        let out = Tensor::matrix(segments, cols, data)?;
        Ok(self
            .tape
            .push(out, Op::SegmentMax { x: self.id, argmax }, self.requires_grad()))
    }

    /// Mean of `w_i · BCE(sigmoid(z_i), y_i)`, `w_i = positive_weight` for `y_i = 1`.
    pub fn weighted_bce(self, labels: &[f64], positive_weight: f64) -> Result<Var<'t>> {
        let z = self.value();
        if z.len() != labels.len() || labels.is_empty() {
            return Err(Error::dim("weighted_bce", z.shape(), &[labels.len()]));
        }
        let loss = weighted_bce_value(z.data(), labels, positive_weight)?;
        Ok(self.tape.push(
            Tensor::scalar(loss),
            Op::WeightedBce {
                logits: self.id,
                labels: Rc::new(labels.to_vec()),
                positive_weight,
            },
            self.requires_grad(),
        ))
    }
}

/// `mat · x` for a constant sparse `mat`.
pub fn spmm<'t>(mat: Rc<Csr>, x: Var<'t>) -> Result<Var<'t>> {
    let out = mat.spmm(&x.value())?;
    let rg = x.requires_grad();
    Ok(x.tape.push(out, Op::SpMM(mat, x.id), rg))
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, n) | (n, 1) => Some(n),
        _ => None,
    }
}

/// Loss value shared by the tape op and plain callers.
pub fn weighted_bce_value(logits: &[f64], labels: &[f64], positive_weight: f64) -> Result<f64> {
    if !(positive_weight > 0.0) {
        return Err(Error::Validation(format!(
            "positive weight must be > 0, got {positive_weight}"
        )));
    }
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::dim("weighted_bce", &[logits.len()], &[labels.len()]));
    }
    let mut total = 0.0;
    for (&z, &y) in logits.iter().zip(labels) {
        // BCE(sigmoid(z), y) = softplus(z) - y·z, never evaluating log(0).
        let (w, l) = if y == 1.0 {
            (positive_weight, softplus(-z))
        } else if y == 0.0 {
            (1.0, softplus(z))
        } else {
            return Err(Error::Validation(format!("label {y} is not binary")));
        };
        total += w * l;
    }
    Ok(total / logits.len() as f64)
}
