//! Message-passing layers on the autodiff tape.
//!
//! Every forward takes its parameters as tape variables so the same code is
//! used for training, evaluation and gradient checks.

use std::rc::Rc;

use rand::Rng as _;

use crate::autodiff::{spmm, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sparse::Csr;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Layer input: the sparse bag-of-words matrix (first layer) or a dense
/// hidden representation.
#[derive(Clone)]
pub enum LayerInput<'t> {
    Sparse(Rc<Csr>),
    Dense(Var<'t>),
}

impl<'t> LayerInput<'t> {
    pub fn rows(&self) -> usize {
        match self {
            LayerInput::Sparse(x) => x.rows(),
            LayerInput::Dense(v) => v.dims2().0,
        }
    }

    /// `X · W`.
    pub fn linear(&self, w: Var<'t>) -> Result<Var<'t>> {
        match self {
            LayerInput::Sparse(x) => spmm(Rc::clone(x), w),
            LayerInput::Dense(v) => v.matmul(w),
        }
    }
}

/// Neighbourhood pattern for masked attention, with the per-entry row and
/// column indices precomputed for gathering edge scores.
#[derive(Clone, Debug)]
pub struct AttentionPattern {
    pub csr: Rc<Csr>,
    rows: Rc<Vec<usize>>,
    cols: Rc<Vec<usize>>,
}

impl AttentionPattern {
    pub fn new(csr: Csr) -> Self {
        let rows = Rc::new(csr.entry_rows());
        let cols = Rc::new(csr.col_idx().to_vec());
        Self {
            csr: Rc::new(csr),
            rows,
            cols,
        }
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn first_empty_row(&self) -> Option<usize> {
        (0..self.csr.rows()).find(|&r| self.csr.row_nnz(r) == 0)
    }
}

/// Parameters of one attention head: `W` and the split attention vector
/// `a = [a_src ‖ a_dst]`, scoring `e_uv = LeakyReLU(a_src·Wh_u + a_dst·Wh_v)`.
#[derive(Clone, Copy, Debug)]
pub struct HeadParams<'t> {
    pub w: Var<'t>,
    pub a_src: Var<'t>,
    pub a_dst: Var<'t>,
}

/// Inverted dropout; identity when `rng` is `None` or `p == 0`.
pub fn dropout<'t>(x: Var<'t>, p: f64, rng: Option<&mut Rng>) -> Result<Var<'t>> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    if p >= 1.0 {
        return Err(Error::Validation(format!("dropout rate {p} must be < 1")));
    }
    let (r, c) = x.dims2();
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..r * c)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    x.mul(x.tape().constant(Tensor::matrix(r, c, mask)?))
}

/// Attention coefficients (one per pattern entry, `E×1`), softmax-normalised per row.
pub fn attention<'t>(pattern: &AttentionPattern, wh: Var<'t>, a_src: Var<'t>, a_dst: Var<'t>) -> Result<Var<'t>> {
    if pattern.nnz() == 0 {
        return Err(Error::Contract("attention over an empty pattern".into()));
    }
    let src = wh.matmul(a_src)?.gather_rows(Rc::clone(&pattern.rows))?;
    let dst = wh.matmul(a_dst)?.gather_rows(Rc::clone(&pattern.cols))?;
    src.add(dst)?.leaky_relu(LEAKY_SLOPE).edge_softmax(Rc::clone(&pattern.csr))
}

/// One attention head without activation: `Σ_v α_uv W h_v`. Rows without
/// pattern entries come out zero; `None` when the pattern is empty.
pub fn attend<'t>(
    pattern: &AttentionPattern,
    input: &LayerInput<'t>,
    head: &HeadParams<'t>,
    attn_dropout: f64,
    rng: Option<&mut Rng>,
) -> Result<Option<Var<'t>>> {
    if pattern.nnz() == 0 {
        return Ok(None);
    }
    let wh = input.linear(head.w)?;
    let alpha = attention(pattern, wh, head.a_src, head.a_dst)?;
    let alpha = dropout(alpha, attn_dropout, rng)?;
    Ok(Some(Var::edge_aggregate(alpha, wh, Rc::clone(&pattern.csr))?))
}

fn check_rows(op: &'static str, adj: &Csr, input: &LayerInput<'_>) -> Result<()> {
    if adj.cols() != input.rows() {
        return Err(Error::dim(op, &[adj.rows(), adj.cols()], &[input.rows()]));
    }
    Ok(())
}

/// `ReLU(Ã X W)`.
pub fn gcn_forward<'t>(adj: &Rc<Csr>, input: &LayerInput<'t>, w: Var<'t>) -> Result<Var<'t>> {
    check_rows("gcn_forward", adj, input)?;
    Ok(spmm(Rc::clone(adj), input.linear(w)?)?.relu())
}

/// Multi-head GAT: heads concatenated, then ELU. Every node needs a non-empty
/// neighbourhood (include self-loops in `pattern`).
pub fn gat_forward<'t>(
    pattern: &AttentionPattern,
    input: &LayerInput<'t>,
    heads: &[HeadParams<'t>],
    attn_dropout: f64,
    mut rng: Option<&mut Rng>,
) -> Result<Var<'t>> {
    check_rows("gat_forward", &pattern.csr, input)?;
    if let Some(node) = pattern.first_empty_row() {
        return Err(Error::Contract(format!("node {node} has no attention neighbourhood")));
    }
    let mut outs = Vec::with_capacity(heads.len());
    for head in heads {
        let out = attend(pattern, input, head, attn_dropout, rng.as_deref_mut())?
            .ok_or_else(|| Error::Contract("empty attention pattern".into()))?;
        outs.push(out);
    }
    Ok(Var::concat_cols(&outs)?.elu())
}

/// Divides each row by its L2 norm; zero rows stay zero.
pub fn l2_normalize_rows(x: Var<'_>) -> Result<Var<'_>> {
    x.div(x.row_norm().clamp_min(1e-12))
}

/// GraphSAGE with mean aggregation: `normalize(W1 x_i + W2 mean_j x_j)`.
pub fn sage_forward<'t>(mean: &Rc<Csr>, input: &LayerInput<'t>, w1: Var<'t>, w2: Var<'t>) -> Result<Var<'t>> {
    check_rows("sage_forward", mean, input)?;
    let own = input.linear(w1)?;
    let neigh = spmm(Rc::clone(mean), input.linear(w2)?)?;
    l2_normalize_rows(own.add(neigh)?)
}

/// `ReLU(Σ_r M_r X W_r + X W_0)` with `M_r` the row-mean relation views.
pub fn rgcn_forward<'t>(
    views: &[Rc<Csr>],
    input: &LayerInput<'t>,
    w_rel: &[Var<'t>],
    w_self: Var<'t>,
) -> Result<Var<'t>> {
    if views.len() != w_rel.len() {
        return Err(Error::dim("rgcn_forward", &[views.len()], &[w_rel.len()]));
    }
    let mut acc = input.linear(w_self)?;
    for (view, &w) in views.iter().zip(w_rel) {
        check_rows("rgcn_forward", view, input)?;
        if view.nnz() == 0 {
            continue;
        }
        acc = acc.add(spmm(Rc::clone(view), input.linear(w)?)?)?;
    }
    Ok(acc.relu())
}

/// `ELU(Σ_r attend_r(X) + X W_0)`, one attention head per relation.
pub fn rgat_forward<'t>(
    patterns: &[AttentionPattern],
    input: &LayerInput<'t>,
    heads: &[HeadParams<'t>],
    w_self: Var<'t>,
    attn_dropout: f64,
    mut rng: Option<&mut Rng>,
) -> Result<Var<'t>> {
    if patterns.len() != heads.len() {
        return Err(Error::dim("rgat_forward", &[patterns.len()], &[heads.len()]));
    }
    let mut acc = input.linear(w_self)?;
    for (pattern, head) in patterns.iter().zip(heads) {
        check_rows("rgat_forward", &pattern.csr, input)?;
        if let Some(out) = attend(pattern, input, head, attn_dropout, rng.as_deref_mut())? {
            acc = acc.add(out)?;
        }
    }
    Ok(acc.elu())
}

/// Zeroes each node's whole feature row with probability `p` during training.
/// No rescaling is applied.
pub fn node_mask(features: &Csr, p: f64, training: bool, rng: &mut Rng) -> Result<Csr> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Validation(format!("node-mask probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(features.clone());
    }
    let keep: Vec<bool> = (0..features.rows()).map(|_| rng.random::<f64>() >= p).collect();
    Ok(features.zero_rows(&keep))
}
