//! Cluster-batched supervised training of graph encoders.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape};
use crate::error::{Error, Result};
use crate::gnn::layers::node_mask;
use crate::gnn::{EncoderConfig, EncoderKind, GnnEncoder, GraphViews};
use crate::graph::partition::default_cluster_count;
use crate::graph::{partition, CommunityGraph, Split};
use crate::optim::{AdamConfig, Optimizer};
use crate::rng;
use crate::sparse::Csr;
use crate::tensor::Tensor;

use super::metrics::f1_fake;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Upper bound on the number of clusters.
    pub clusters: usize,
    pub batch_clusters: usize,
    pub fake_weight: f64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_kind(EncoderKind::Gcn)
    }
}

impl TrainConfig {
    /// Learning rate and weight decay of the GossipCop hyperparameter table.
    pub fn for_kind(kind: EncoderKind) -> Self {
        let (lr, weight_decay) = match kind {
            EncoderKind::Gcn | EncoderKind::Gat => (5e-4, 1e-3),
            EncoderKind::Sage => (1e-4, 2e-3),
            EncoderKind::Rgcn => (1e-3, 2e-3),
            EncoderKind::Rgat => (1e-4, 1e-3),
            EncoderKind::Hygcn | EncoderKind::Hygat => (5e-3, 1e-3),
        };
        Self {
            lr,
            weight_decay,
            max_epochs: 100,
            patience: 10,
            clusters: 300,
            batch_clusters: 16,
            fake_weight: 3.0,
            clip_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.fake_weight > 0.0) {
            return Err(Error::Config("lr and fake_weight must be positive, weight_decay nonnegative".into()));
        }
        if self.clusters == 0 || self.batch_clusters == 0 {
            return Err(Error::Config("cluster counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEncoder {
    pub encoder: GnnEncoder,
    pub best_val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Evaluation-mode fake probabilities for `nodes` using prebuilt views.
pub fn node_scores(encoder: &GnnEncoder, views: &GraphViews, features: &Rc<Csr>, nodes: &[usize]) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Ok(Vec::new());
    }
    let tape = Tape::new();
    let bound = encoder.params.bind_frozen(&tape);
    let emb = encoder.embed(&bound, views, features, None)?;
    let logits = encoder.head(&bound, emb.gather_rows(Rc::new(nodes.to_vec()))?, None)?;
    let v = logits.value();
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    Ok(v.data().iter().map(|&z| sigmoid(z)).collect())
}

/// Trains on labelled train-split article nodes; keeps the parameters with
/// the best validation fake-class F1.
pub fn train_graph_encoder(
    graph: &CommunityGraph,
    config: &EncoderConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<TrainedEncoder> {
    train.validate()?;
    let mut encoder = GnnEncoder::new(config.clone(), graph.feature_dim(), seed)?;
    let k = default_cluster_count(train.clusters, graph.node_count());
    let part = partition(graph, k, seed)?;
    let mut opt = Optimizer::new(&encoder.params, AdamConfig::new(train.lr, train.weight_decay), train.clip_norm);
    let mut rng = rng::derive(seed, "gnn-train");

    let full_views = GraphViews::new(graph, config)?;
    let full_features = Rc::new(graph.features().clone());
    let val_nodes = graph.article_nodes_in(Split::Val);
    let val_labels: Vec<bool> = val_nodes
        .iter()
        .map(|&n| graph.labels()[n - graph.user_count()].is_fake())
        .collect();

    let mut best = (f64::NEG_INFINITY, 0usize, encoder.params.clone());
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 1..=train.max_epochs {
        epochs_run = epoch;
        let mut labelled_batches = 0;
        for clusters in part.epoch_batches(train.batch_clusters, &mut rng) {
            let nodes = part.union_nodes(&clusters);
            let sub = graph.induced(&nodes)?;
            let targets = sub.article_nodes_in(Split::Train);
            if targets.is_empty() {
                continue;
            }
            labelled_batches += 1;
            let labels: Vec<f64> = targets
                .iter()
                .map(|&n| sub.labels()[n - sub.user_count()].as_f64())
                .collect();
            let views = GraphViews::new(&sub, config)?;
            let features = Rc::new(node_mask(sub.features(), config.node_mask, true, &mut rng)?);
            let tape = Tape::new();
            let bound = encoder.params.bind(&tape);
            let emb = encoder.embed(&bound, &views, &features, Some(&mut rng))?;
            let logits = encoder.head(&bound, emb.gather_rows(Rc::new(targets))?, Some(&mut rng))?;
            let loss = logits.weighted_bce(&labels, train.fake_weight)?;
            if !loss.value().item().is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            let grads = tape.backward(loss)?;
            encoder.params.absorb(&grads, &bound)?;
            opt.step(&mut encoder.params)?;
        }
        if labelled_batches == 0 {
            return Err(Error::Config("no batch contains a labelled training article".into()));
        }
        let f1 = if val_nodes.is_empty() {
            0.0
        } else {
            let preds: Vec<bool> = node_scores(&encoder, &full_views, &full_features, &val_nodes)?
                .iter()
                .map(|&p| p > 0.5)
                .collect();
            f1_fake(&preds, &val_labels)?.f1
        };
        log::debug!("{} epoch {epoch}: val F1 {f1:.4}", config.kind);
        if f1 > best.0 {
            best = (f1, epoch, encoder.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train.patience {
                break;
            }
        }
    }
    encoder.params = best.2;
    Ok(TrainedEncoder {
        encoder,
        best_val_f1: best.0.max(0.0),
        best_epoch: best.1,
        epochs_run,
    })
}

/// Full-graph embeddings of the user nodes (rows `0..user_count`).
pub fn user_embeddings(encoder: &GnnEncoder, graph: &CommunityGraph) -> Result<Tensor> {
    let all = encoder.embeddings(graph)?;
    let (_, d) = all.dims2();
    let nu = graph.user_count();
    Tensor::matrix(nu, d, all.data()[..nu * d].to_vec())
}

/// Arithmetic mean of the given rows; the zero vector when `users` is empty.
pub fn aggregate(embeddings: &Tensor, users: &[usize]) -> Vec<f64> {
    let d = embeddings.cols();
    let mut out = vec![0.0; d];
    if users.is_empty() {
        return out;
    }
    for &u in users {
        for (o, v) in out.iter_mut().zip(embeddings.row_slice(u)) {
            *o += v;
        }
    }
    let m = users.len() as f64;
    out.iter_mut().for_each(|o| *o /= m);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_cases() {
        let e = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(aggregate(&e, &[2]), vec![1.0, 1.0]);
        let s = aggregate(&e, &[0, 1, 2]);
        assert_eq!(s, vec![2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(aggregate(&e, &[2, 1, 0]), s);
        assert_eq!(aggregate(&e, &[0, 0, 1, 1, 2, 2]), s);
        assert_eq!(aggregate(&e, &[]), vec![0.0, 0.0]);
    }
}
