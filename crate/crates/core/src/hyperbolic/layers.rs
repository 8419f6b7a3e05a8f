//! Hy-GCN and Hy-GAT layers.
//!
//! Rows of a tape variable are points on one ball; the curvature is a `1×1`
//! variable so it can be learned. A layer maps points on `K_in` to points on
//! `K_out`:
//!
//! 1. Möbius matrix–vector product `exp₀(W · log₀ x)`, then `⊕ b`.
//! 2. Tangent aggregation `exp₀(Σ_v w_uv · log₀ h_v)` with degree weights
//!    (Hy-GCN) or attention on the tangent vectors (Hy-GAT).
//! 3. Activation `exp₀^{K_out}(σ(log₀^{K_in} ·))`.

use std::rc::Rc;

use crate::autodiff::{spmm, Var};
use crate::error::{Error, Result};
use crate::gnn::layers::{attention, dropout, AttentionPattern};
use crate::hyperbolic::{BALL_EPS, CURVATURE_FLOOR, MIN_NORM};
use crate::rng::Rng;
use crate::sparse::Csr;
use crate::tensor::Tensor;

/// `K = softplus(κ) + 1e-4`.
pub fn curvature(raw: Var<'_>) -> Var<'_> {
    raw.softplus().add_scalar(CURVATURE_FLOOR)
}

/// Rescales rows reaching the margin back to norm `(1 − ε)/√K`.
pub fn project<'t>(x: Var<'t>, k: Var<'t>) -> Result<Var<'t>> {
    let max = k.sqrt().recip().scale(1.0 - BALL_EPS);
    let ratio = max.div(x.row_norm().clamp_min(MIN_NORM))?;
    x.mul(ratio.clamp_max(1.0))
}

pub fn exp0<'t>(v: Var<'t>, k: Var<'t>) -> Result<Var<'t>> {
    let arg = v.row_norm().clamp_min(MIN_NORM).mul(k.sqrt())?;
    let out = v.mul(arg.tanh().div(arg)?)?;
    project(out, k)
}

pub fn log0<'t>(x: Var<'t>, k: Var<'t>) -> Result<Var<'t>> {
    let arg = x.row_norm().clamp_min(MIN_NORM).mul(k.sqrt())?;
    x.mul(arg.atanh().div(arg)?)
}

/// Row-wise `x ⊕ y`; `y` may be a single row broadcast over `x`.
pub fn mobius_add<'t>(x: Var<'t>, y: Var<'t>, k: Var<'t>) -> Result<Var<'t>> {
    let xy = x.mul(y)?.sum_rows();
    let x2 = x.square().sum_rows();
    let y2 = y.square().sum_rows();
    let two_k_xy = xy.mul(k)?.scale(2.0);
    let a = two_k_xy.add(y2.mul(k)?)?.add_scalar(1.0);
    let b = x2.mul(k)?.neg().add_scalar(1.0);
    let den = two_k_xy
        .add(x2.mul(y2)?.mul(k.square())?)?
        .add_scalar(1.0)
        .clamp_min(MIN_NORM);
    project(x.mul(a)?.add(y.mul(b)?)?.div(den)?, k)
}

/// Tangent image `log₀(proj(exp₀(x))) · W` of sparse Euclidean rows,
/// computed from the row norms without densifying `x`.
pub fn lift_sparse<'t>(x: &Rc<Csr>, row_norms: &Tensor, w: Var<'t>, k: Var<'t>) -> Result<Var<'t>> {
    if row_norms.rows() != x.rows() {
        return Err(Error::dim("lift_sparse", &[x.rows()], row_norms.shape()));
    }
    let n = w.tape().constant(row_norms.clone()).clamp_min(MIN_NORM);
    let arg = n.mul(k.sqrt())?;
    let f = arg.tanh().clamp_max(1.0 - BALL_EPS).atanh().div(arg)?;
    spmm(Rc::clone(x), w)?.mul(f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Elu,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.relu(),
            Activation::Elu => x.elu(),
        }
    }
}

#[derive(Clone)]
pub enum HyInput<'t> {
    /// Euclidean sparse rows (treated as tangent vectors at the origin) with their norms.
    Euclidean { x: Rc<Csr>, row_norms: Rc<Tensor> },
    Ball(Var<'t>),
}

impl HyInput<'_> {
    pub fn rows(&self) -> usize {
        match self {
            HyInput::Euclidean { x, .. } => x.rows(),
            HyInput::Ball(v) => v.dims2().0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HyLayerParams<'t> {
    pub w: Var<'t>,
    /// Bias point (`1×d_out`) on the input ball.
    pub bias: Option<Var<'t>>,
    pub k_in: Var<'t>,
    pub k_out: Var<'t>,
}

fn mobius_linear<'t>(input: &HyInput<'t>, p: &HyLayerParams<'t>) -> Result<Var<'t>> {
    let tangent = match input {
        HyInput::Euclidean { x, row_norms } => lift_sparse(x, row_norms, p.w, p.k_in)?,
        HyInput::Ball(x) => log0(*x, p.k_in)?.matmul(p.w)?,
    };
    let h = exp0(tangent, p.k_in)?;
    match p.bias {
        Some(b) => mobius_add(h, b, p.k_in),
        None => Ok(h),
    }
}

fn activate<'t>(point: Var<'t>, p: &HyLayerParams<'t>, act: Activation) -> Result<Var<'t>> {
    exp0(act.apply(log0(point, p.k_in)?), p.k_out)
}

/// Hy-GCN layer with aggregation weights given by the rows of `adj`.
pub fn hygcn_forward<'t>(adj: &Rc<Csr>, input: &HyInput<'t>, p: &HyLayerParams<'t>, act: Activation) -> Result<Var<'t>> {
    if adj.cols() != input.rows() {
        return Err(Error::dim("hygcn_forward", &[adj.rows(), adj.cols()], &[input.rows()]));
    }
    let h = mobius_linear(input, p)?;
    let agg = spmm(Rc::clone(adj), log0(h, p.k_in)?)?;
    activate(exp0(agg, p.k_in)?, p, act)
}

/// Hy-GAT layer (single head): attention logits from the tangent vectors
/// `log₀ h`, softmax-weighted tangent aggregation.
#[allow(clippy::too_many_arguments)]
pub fn hygat_forward<'t>(
    pattern: &AttentionPattern,
    input: &HyInput<'t>,
    p: &HyLayerParams<'t>,
    a_src: Var<'t>,
    a_dst: Var<'t>,
    act: Activation,
    attn_dropout: f64,
    rng: Option<&mut Rng>,
) -> Result<Var<'t>> {
    if pattern.csr.cols() != input.rows() {
        return Err(Error::dim("hygat_forward", &[pattern.csr.rows()], &[input.rows()]));
    }
    if let Some(node) = pattern.first_empty_row() {
        return Err(Error::Contract(format!("node {node} has no attention neighbourhood")));
    }
    let h = mobius_linear(input, p)?;
    let t = log0(h, p.k_in)?;
    let alpha = dropout(attention(pattern, t, a_src, a_dst)?, attn_dropout, rng)?;
    let agg = Var::edge_aggregate(alpha, t, Rc::clone(&pattern.csr))?;
    activate(exp0(agg, p.k_in)?, p, act)
}

/// Rows of `x` sitting on the projection boundary of the ball of curvature `k`.
pub fn boundary_rows(x: &Tensor, k: f64) -> usize {
    let max = crate::hyperbolic::max_norm(k);
    x.to_rows()
        .iter()
        .filter(|r| crate::hyperbolic::norm(r) >= max * (1.0 - 1e-12))
        .count()
}
