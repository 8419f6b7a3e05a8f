//! Community-graph fake news detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`sparse`], [`autodiff`], [`optim`], [`params`]: numeric core
//!   (dense tensors, CSR matrices, a reverse-mode tape, AdamW and Riemannian Adam,
//!   named parameter stores and portable checkpoints).
//! - [`graph`]: the heterogeneous user–article community graph, adjacency
//!   normalisations, relation views and the cluster partitioner.
//! - [`builder`]: text preprocessing, bag-of-words features, activity filters,
//!   graph construction and the synthetic data generator.
//! - [`gnn`] and [`hyperbolic`]: GCN, GAT, GraphSAGE, R-GCN, R-GAT and the
//!   Poincaré-ball Hy-GCN / Hy-GAT layers, composed into two-layer encoders.
//! - [`text`]: CNN document encoder with max-over-time pooling and the
//!   embedding interchange format.
//! - [`pipeline`]: graph/text training, fusion, logistic regression, baselines,
//!   metrics and the analyses (frequent-user ablation, top-N sweep, user typology).

pub mod autodiff;
pub mod builder;
pub mod config;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod hyperbolic;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod sparse;
pub mod tensor;
pub mod text;
pub mod tsv;

pub use error::{Error, Result};
pub use graph::{CommunityGraph, NodeKind, Relation, Split};
pub use sparse::Csr;
pub use tensor::Tensor;
