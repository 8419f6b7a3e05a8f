//! Two-layer graph encoders with an MLP classification head.
//!
//! | kind    | layer                                  | output width      |
//! |---------|----------------------------------------|-------------------|
//! | `gcn`   | `ReLU(Ã X W)`                          | hidden            |
//! | `gat`   | heads concatenated, ELU                | heads × hidden    |
//! | `sage`  | mean aggregation, L2-normalised rows   | hidden            |
//! | `rgcn`  | per-relation row means + self, ReLU    | hidden            |
//! | `rgat`  | per-relation attention + self, ELU     | hidden            |
//! | `hygcn` | Poincaré-ball GCN, ReLU                | hidden            |
//! | `hygat` | Poincaré-ball GAT (one head), ELU      | hidden            |
//!
//! Hyperbolic encoders expose `log₀` of their last layer as the embedding.

pub mod layers;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{
    attention_pattern, mean_view, normalize_diagonal_enhanced, normalize_symmetric, relation_view, CommunityGraph,
    Relation, RelationFilter,
};
use crate::hyperbolic::layers::{self as hy, Activation, HyInput, HyLayerParams};
use crate::hyperbolic::raw_from_curvature;
use crate::params::{ParamKind, ParamStore};
use crate::rng::{self, Rng};
use crate::sparse::Csr;
use crate::tensor::Tensor;

use layers::{dropout, AttentionPattern, HeadParams, LayerInput};

pub const DEPTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Gat,
    Sage,
    Rgcn,
    Rgat,
    Hygcn,
    Hygat,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 7] = [
        EncoderKind::Gcn,
        EncoderKind::Gat,
        EncoderKind::Sage,
        EncoderKind::Rgcn,
        EncoderKind::Rgat,
        EncoderKind::Hygcn,
        EncoderKind::Hygat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Gcn => "gcn",
            EncoderKind::Gat => "gat",
            EncoderKind::Sage => "sage",
            EncoderKind::Rgcn => "rgcn",
            EncoderKind::Rgat => "rgat",
            EncoderKind::Hygcn => "hygcn",
            EncoderKind::Hygat => "hygat",
        }
    }

    pub fn is_hyperbolic(self) -> bool {
        matches!(self, EncoderKind::Hygcn | EncoderKind::Hygat)
    }

    pub fn is_relational(self) -> bool {
        matches!(self, EncoderKind::Rgcn | EncoderKind::Rgat)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase().replace('-', ""))
            .ok_or_else(|| Error::Config(format!("unknown encoder {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GcnNorm {
    DiagonalEnhanced,
    Symmetric,
}

/// Architecture hyperparameters shared by all variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden: usize,
    /// Attention heads per GAT layer (concatenated).
    pub heads: usize,
    /// Attention heads per relation in R-GAT (averaged).
    pub relation_heads: usize,
    pub dropout: f64,
    pub attn_dropout: f64,
    pub node_mask: f64,
    pub gcn_norm: GcnNorm,
    pub init_curvature: f64,
    pub learnable_curvature: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::for_kind(EncoderKind::Gcn)
    }
}

impl EncoderConfig {
    /// Regularisation defaults of the GossipCop column of the hyperparameter
    /// table, with a desk-scale hidden width of 64.
    pub fn for_kind(kind: EncoderKind) -> Self {
        let (dropout, attn_dropout) = match kind {
            EncoderKind::Gat => (0.4, 0.1),
            EncoderKind::Rgcn => (0.4, 0.0),
            EncoderKind::Sage => (0.2, 0.0),
            EncoderKind::Rgat => (0.2, 0.1),
            _ => (0.1, 0.0),
        };
        Self {
            kind,
            hidden: 64,
            heads: 3,
            relation_heads: 1,
            dropout,
            attn_dropout,
            node_mask: 0.1,
            gcn_norm: GcnNorm::DiagonalEnhanced,
            init_curvature: 1.0,
            learnable_curvature: true,
        }
    }

    /// Width `d_g` of the node embeddings.
    pub fn embed_dim(&self) -> usize {
        match self.kind {
            EncoderKind::Gat => self.heads * self.hidden,
            _ => self.hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.relation_heads == 0 {
            return Err(Error::Config("hidden width and head counts must be positive".into()));
        }
        for (name, p) in [
            ("dropout", self.dropout),
            ("attn_dropout", self.attn_dropout),
            ("node_mask", self.node_mask),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if !(self.init_curvature > crate::hyperbolic::CURVATURE_FLOOR) {
            return Err(Error::Config(format!("init_curvature {} too small", self.init_curvature)));
        }
        Ok(())
    }
}

/// Adjacency views of one (sub)graph, built once per graph for a given kind.
#[derive(Clone, Debug)]
pub struct GraphViews {
    pub nodes: usize,
    adj: Option<Rc<Csr>>,
    pattern: Option<AttentionPattern>,
    relation_adj: Vec<Rc<Csr>>,
    relation_patterns: Vec<AttentionPattern>,
}

impl GraphViews {
    pub fn new(graph: &CommunityGraph, config: &EncoderConfig) -> Result<Self> {
        let mut v = GraphViews {
            nodes: graph.node_count(),
            adj: None,
            pattern: None,
            relation_adj: Vec::new(),
            relation_patterns: Vec::new(),
        };
        match config.kind {
            EncoderKind::Gcn => {
                let a = match config.gcn_norm {
                    GcnNorm::DiagonalEnhanced => normalize_diagonal_enhanced(graph)?,
                    GcnNorm::Symmetric => normalize_symmetric(graph, true)?,
                };
                v.adj = Some(Rc::new(a.matrix));
            }
            EncoderKind::Hygcn => v.adj = Some(Rc::new(normalize_diagonal_enhanced(graph)?.matrix)),
            EncoderKind::Sage => v.adj = Some(Rc::new(mean_view(graph)?.matrix)),
            EncoderKind::Gat | EncoderKind::Hygat => {
                v.pattern = Some(AttentionPattern::new(attention_pattern(graph, RelationFilter::All, true)?));
            }
            EncoderKind::Rgcn => {
                for r in Relation::ALL {
                    v.relation_adj.push(Rc::new(relation_view(graph, r)?.matrix));
                }
            }
            EncoderKind::Rgat => {
                for r in Relation::ALL {
                    v.relation_patterns
                        .push(AttentionPattern::new(attention_pattern(graph, RelationFilter::Only(r), false)?));
                }
            }
        }
        Ok(v)
    }

    fn adj(&self) -> Result<&Rc<Csr>> {
        self.adj.as_ref().ok_or_else(|| Error::Contract("views built for another encoder".into()))
    }

    fn pattern(&self) -> Result<&AttentionPattern> {
        self.pattern
            .as_ref()
            .ok_or_else(|| Error::Contract("views built for another encoder".into()))
    }
}

fn relation_tag(r: Relation) -> &'static str {
    match r {
        Relation::UserArticle => "ua",
        Relation::UserUser => "uu",
    }
}

/// A two-layer encoder and its classification head.
#[derive(Clone, Debug)]
pub struct GnnEncoder {
    pub config: EncoderConfig,
    pub input_dim: usize,
    pub params: ParamStore,
}

impl GnnEncoder {
    pub fn new(config: EncoderConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = rng::derive(seed, "gnn-init");
        let mut p = ParamStore::new();
        let h = config.hidden;
        let mut d_in = input_dim;
        if config.kind.is_hyperbolic() {
            for i in 0..=DEPTH {
                let idx = p.add(format!("kappa{i}"), Tensor::scalar(raw_from_curvature(config.init_curvature)));
                p.exclude_from_decay(idx);
                if !config.learnable_curvature {
                    p.freeze_rows(idx, vec![0]);
                }
            }
        }
        for l in 0..DEPTH {
            match config.kind {
                EncoderKind::Gcn => {
                    p.add_glorot(format!("l{l}.w"), d_in, h, &mut rng);
                }
                EncoderKind::Gat => {
                    for k in 0..config.heads {
                        add_head(&mut p, &format!("l{l}.h{k}"), d_in, h, &mut rng);
                    }
                }
                EncoderKind::Sage => {
                    p.add_glorot(format!("l{l}.w1"), d_in, h, &mut rng);
                    p.add_glorot(format!("l{l}.w2"), d_in, h, &mut rng);
                }
                EncoderKind::Rgcn => {
                    p.add_glorot(format!("l{l}.w_self"), d_in, h, &mut rng);
                    for r in Relation::ALL {
                        p.add_glorot(format!("l{l}.w_{}", relation_tag(r)), d_in, h, &mut rng);
                    }
                }
                EncoderKind::Rgat => {
                    p.add_glorot(format!("l{l}.w_self"), d_in, h, &mut rng);
                    for r in Relation::ALL {
                        for k in 0..config.relation_heads {
                            add_head(&mut p, &format!("l{l}.{}.h{k}", relation_tag(r)), d_in, h, &mut rng);
                        }
                    }
                }
                EncoderKind::Hygcn | EncoderKind::Hygat => {
                    p.add_glorot(format!("l{l}.w"), d_in, h, &mut rng);
                    let kappa = p.index(&format!("kappa{l}")).expect("curvature added above");
                    p.add_kind(format!("l{l}.b"), Tensor::zeros(1, h), ParamKind::Ball { curvature: kappa });
                    if config.kind == EncoderKind::Hygat {
                        p.add_glorot(format!("l{l}.a_src"), h, 1, &mut rng);
                        p.add_glorot(format!("l{l}.a_dst"), h, 1, &mut rng);
                    }
                }
            }
            d_in = config.embed_dim();
        }
        let d_g = config.embed_dim();
        p.add_glorot("head.w1", d_g, h, &mut rng);
        p.add("head.b1", Tensor::zeros(1, h));
        p.add_glorot("head.w2", h, 1, &mut rng);
        p.add("head.b2", Tensor::zeros(1, 1));
        Ok(Self {
            config,
            input_dim,
            params: p,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim()
    }

    pub fn kind(&self) -> EncoderKind {
        self.config.kind
    }

    /// Current per-layer curvatures `K_0, K_1, K_2` (hyperbolic kinds only).
    pub fn curvatures(&self) -> Vec<f64> {
        (0..=DEPTH)
            .filter_map(|i| self.params.by_name(&format!("kappa{i}")))
            .map(|t| crate::hyperbolic::curvature_from_raw(t.item()))
            .collect()
    }

    fn var<'t>(&self, bound: &[Var<'t>], name: &str) -> Result<Var<'t>> {
        self.params
            .index(name)
            .map(|i| bound[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    fn head_params<'t>(&self, bound: &[Var<'t>], prefix: &str) -> Result<HeadParams<'t>> {
        Ok(HeadParams {
            w: self.var(bound, &format!("{prefix}.w"))?,
            a_src: self.var(bound, &format!("{prefix}.a_src"))?,
            a_dst: self.var(bound, &format!("{prefix}.a_dst"))?,
        })
    }

    /// Node embeddings (`n × d_g`). Passing an `rng` switches on dropout.
    pub fn embed<'t>(
        &self,
        bound: &[Var<'t>],
        views: &GraphViews,
        features: &Rc<Csr>,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var<'t>> {
        if features.rows() != views.nodes || features.cols() != self.input_dim {
            return Err(Error::dim(
                "encoder input",
                &[features.rows(), features.cols()],
                &[views.nodes, self.input_dim],
            ));
        }
        let c = &self.config;
        if c.kind.is_hyperbolic() {
            return self.embed_hyperbolic(bound, views, features, rng);
        }
        let mut input = LayerInput::Sparse(Rc::clone(features));
        let mut out = None;
        for l in 0..DEPTH {
            if let LayerInput::Dense(h) = input {
                input = LayerInput::Dense(dropout(h, c.dropout, rng.as_deref_mut())?);
            }
            let h = match c.kind {
                EncoderKind::Gcn => layers::gcn_forward(views.adj()?, &input, self.var(bound, &format!("l{l}.w"))?)?,
                EncoderKind::Gat => {
                    let heads = (0..c.heads)
                        .map(|k| self.head_params(bound, &format!("l{l}.h{k}")))
                        .collect::<Result<Vec<_>>>()?;
                    layers::gat_forward(views.pattern()?, &input, &heads, c.attn_dropout, rng.as_deref_mut())?
                }
                EncoderKind::Sage => {
                    let h = layers::sage_forward(
                        views.adj()?,
                        &input,
                        self.var(bound, &format!("l{l}.w1"))?,
                        self.var(bound, &format!("l{l}.w2"))?,
                    )?;
                    if l + 1 < DEPTH {
                        h.relu()
                    } else {
                        h
                    }
                }
                EncoderKind::Rgcn => {
                    let w_rel = Relation::ALL
                        .iter()
                        .map(|&r| self.var(bound, &format!("l{l}.w_{}", relation_tag(r))))
                        .collect::<Result<Vec<_>>>()?;
                    layers::rgcn_forward(
                        &views.relation_adj,
                        &input,
                        &w_rel,
                        self.var(bound, &format!("l{l}.w_self"))?,
                    )?
                }
                EncoderKind::Rgat => self.rgat_layer(bound, views, &input, l, rng.as_deref_mut())?,
                EncoderKind::Hygcn | EncoderKind::Hygat => unreachable!("handled above"),
            };
            out = Some(h);
            input = LayerInput::Dense(h);
        }
        Ok(out.expect("depth is positive"))
    }

    fn rgat_layer<'t>(
        &self,
        bound: &[Var<'t>],
        views: &GraphViews,
        input: &LayerInput<'t>,
        l: usize,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var<'t>> {
        let c = &self.config;
        let mut acc = input.linear(self.var(bound, &format!("l{l}.w_self"))?)?;
        for (r, pattern) in Relation::ALL.iter().zip(&views.relation_patterns) {
            let mut rel: Option<Var<'t>> = None;
            for k in 0..c.relation_heads {
                let head = self.head_params(bound, &format!("l{l}.{}.h{k}", relation_tag(*r)))?;
                if let Some(o) = layers::attend(pattern, input, &head, c.attn_dropout, rng.as_deref_mut())? {
                    rel = Some(match rel {
                        Some(prev) => prev.add(o)?,
                        None => o,
                    });
                }
            }
            if let Some(rel) = rel {
                acc = acc.add(rel.scale(1.0 / c.relation_heads as f64))?;
            }
        }
        Ok(acc.elu())
    }

    fn embed_hyperbolic<'t>(
        &self,
        bound: &[Var<'t>],
        views: &GraphViews,
        features: &Rc<Csr>,
        mut rng: Option<&mut Rng>,
    ) -> Result<Var<'t>> {
        let c = &self.config;
        let k: Vec<Var<'t>> = (0..=DEPTH)
            .map(|i| self.var(bound, &format!("kappa{i}")).map(hy::curvature))
            .collect::<Result<_>>()?;
        let act = if c.kind == EncoderKind::Hygat {
            Activation::Elu
        } else {
            Activation::Relu
        };
        let mut input = HyInput::Euclidean {
            x: Rc::clone(features),
            row_norms: Rc::new(Tensor::column(features.row_norms())),
        };
        let mut out = None;
        for l in 0..DEPTH {
            if let (HyInput::Ball(x), Some(r)) = (&input, rng.as_deref_mut()) {
                // dropout acts on tangent coordinates, then maps back
                if c.dropout > 0.0 {
                    let t = dropout(hy::log0(*x, k[l])?, c.dropout, Some(r))?;
                    input = HyInput::Ball(hy::exp0(t, k[l])?);
                }
            }
            let p = HyLayerParams {
                w: self.var(bound, &format!("l{l}.w"))?,
                bias: Some(self.var(bound, &format!("l{l}.b"))?),
                k_in: k[l],
                k_out: k[l + 1],
            };
            let h = match c.kind {
                EncoderKind::Hygcn => hy::hygcn_forward(views.adj()?, &input, &p, act)?,
                _ => hy::hygat_forward(
                    views.pattern()?,
                    &input,
                    &p,
                    self.var(bound, &format!("l{l}.a_src"))?,
                    self.var(bound, &format!("l{l}.a_dst"))?,
                    act,
                    c.attn_dropout,
                    rng.as_deref_mut(),
                )?,
            };
            out = Some(h);
            input = HyInput::Ball(h);
        }
        hy::log0(out.expect("depth is positive"), k[DEPTH])
    }

    /// Logits (`rows × 1`) of the MLP head on the given embedding rows.
    pub fn head<'t>(&self, bound: &[Var<'t>], embeddings: Var<'t>, mut rng: Option<&mut Rng>) -> Result<Var<'t>> {
        let x = dropout(embeddings, self.config.dropout, rng.as_deref_mut())?;
        let h = x
            .matmul(self.var(bound, "head.w1")?)?
            .add(self.var(bound, "head.b1")?)?
            .relu();
        let h = dropout(h, self.config.dropout, rng)?;
        h.matmul(self.var(bound, "head.w2")?)?.add(self.var(bound, "head.b2")?)
    }

    /// Evaluation-mode embeddings of every node of `graph`.
    pub fn embeddings(&self, graph: &CommunityGraph) -> Result<Tensor> {
        let views = GraphViews::new(graph, &self.config)?;
        let tape = Tape::new();
        let bound = self.params.bind_frozen(&tape);
        let emb = self.embed(&bound, &views, &Rc::new(graph.features().clone()), None)?;
        let t = (*emb.value()).clone();
        if !t.is_finite() {
            return Err(Error::Numeric("non-finite embeddings".into()));
        }
        Ok(t)
    }

    /// Evaluation-mode head scores (sigmoid probabilities) for the given nodes.
    pub fn scores(&self, graph: &CommunityGraph, nodes: &[usize]) -> Result<Vec<f64>> {
        if nodes.is_empty() {
            return Ok(Vec::new());
        }
        let views = GraphViews::new(graph, &self.config)?;
        let tape = Tape::new();
        let bound = self.params.bind_frozen(&tape);
        let emb = self.embed(&bound, &views, &Rc::new(graph.features().clone()), None)?;
        let rows = emb.gather_rows(Rc::new(nodes.to_vec()))?;
        let logits = self.head(&bound, rows, None)?;
        Ok(logits.value().data().iter().map(|&z| crate::autodiff::sigmoid(z)).collect())
    }
}

fn add_head(p: &mut ParamStore, prefix: &str, d_in: usize, h: usize, rng: &mut Rng) {
    p.add_glorot(format!("{prefix}.w"), d_in, h, rng);
    p.add_glorot(format!("{prefix}.a_src"), h, 1, rng);
    p.add_glorot(format!("{prefix}.a_dst"), h, 1, rng);
}
