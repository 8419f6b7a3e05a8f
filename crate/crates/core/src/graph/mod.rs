//! Heterogeneous user–article community graph.
//!
//! Node ids are dense: users occupy `0..user_count`, articles occupy
//! `user_count..user_count + article_count`. Edges are undirected and stored
//! once with `a < b`; iteration helpers expose both directions.

pub mod normalize;
pub mod partition;
pub mod snapshot;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Csr;

pub use normalize::{
    attention_pattern, mean_view, normalize_diagonal_enhanced, normalize_symmetric, relation_view,
    AdjacencyTag, NormalizedAdjacency, RelationFilter,
};
pub use partition::{partition, sample_batch, ClusterPartition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    User,
    Article,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    UserArticle,
    UserUser,
}

impl Relation {
    pub const ALL: [Relation; 2] = [Relation::UserArticle, Relation::UserUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::UserArticle => "user-article",
            Relation::UserUser => "user-user",
        }
    }
}

impl FromStr for Relation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user-article" => Ok(Relation::UserArticle),
            "user-user" => Ok(Relation::UserUser),
            other => Err(Error::Validation(format!("unknown relation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

/// Article label; fake is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    pub fn as_f64(self) -> f64 {
        f64::from(u8::from(self.is_fake()))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fake" | "1" => Ok(Label::Fake),
            "real" | "0" => Ok(Label::Real),
            other => Err(Error::Validation(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub relation: Relation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommunityGraph {
    user_ids: Vec<String>,
    article_ids: Vec<String>,
    edges: Vec<Edge>,
    features: Csr,
    labels: Vec<Label>,
    splits: Vec<Split>,
}

impl CommunityGraph {
    /// Validates and normalises edges: endpoints are ordered, duplicates rejected.
    pub fn new(
        user_ids: Vec<String>,
        article_ids: Vec<String>,
        edges: Vec<Edge>,
        features: Csr,
        labels: Vec<Label>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        let users = user_ids.len();
        let n = users + article_ids.len();
        if labels.len() != article_ids.len() || splits.len() != article_ids.len() {
            return Err(Error::Validation(format!(
                "{} articles but {} labels and {} splits",
                article_ids.len(),
                labels.len(),
                splits.len()
            )));
        }
        if splits.contains(&Split::Test) {
            return Err(Error::Validation("test-split articles cannot be graph nodes".into()));
        }
        if features.rows() != n {
            return Err(Error::dim("features", &[features.rows()], &[n]));
        }
        let mut seen = BTreeSet::new();
        let mut normalised = Vec::with_capacity(edges.len());
        for e in edges {
            let (a, b) = (e.a.min(e.b), e.a.max(e.b));
            if b >= n {
                return Err(Error::Validation(format!("edge ({a},{b}) outside {n} nodes")));
            }
            match e.relation {
                Relation::UserArticle => {
                    if !(a < users && b >= users) {
                        return Err(Error::Validation(format!(
                            "user-article edge ({a},{b}) must join one user and one article"
                        )));
                    }
                }
                Relation::UserUser => {
                    if a == b {
                        return Err(Error::Validation(format!("self-loop on user {a}")));
                    }
                    if b >= users {
                        return Err(Error::Validation(format!("user-user edge ({a},{b}) touches an article")));
                    }
                }
            }
            let edge = Edge { a, b, relation: e.relation };
            if !seen.insert(edge) {
                return Err(Error::Validation(format!("duplicate edge ({a},{b},{})", e.relation.as_str())));
            }
            normalised.push(edge);
        }
        normalised.sort();
        Ok(Self {
            user_ids,
            article_ids,
            edges: normalised,
            features,
            labels,
            splits,
        })
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn article_count(&self) -> usize {
        self.article_ids.len()
    }

    pub fn node_count(&self) -> usize {
        self.user_count() + self.article_count()
    }

    pub fn is_empty(&self) -> bool {
        self.node_count() == 0
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn relation_edge_count(&self, r: Relation) -> usize {
        self.edges.iter().filter(|e| e.relation == r).count()
    }

    pub fn features(&self) -> &Csr {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn article_ids(&self) -> &[String] {
        &self.article_ids
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node < self.user_count() {
            NodeKind::User
        } else {
            NodeKind::Article
        }
    }

    pub fn article_node(&self, article_index: usize) -> usize {
        self.user_count() + article_index
    }

    pub fn node_name(&self, node: usize) -> &str {
        if node < self.user_count() {
            &self.user_ids[node]
        } else {
            &self.article_ids[node - self.user_count()]
        }
    }

    /// Article node ids in a given split.
    pub fn article_nodes_in(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| self.article_node(i))
            .collect()
    }

    /// Symmetric neighbour lists (sorted), optionally restricted to one relation.
    pub fn neighbors(&self, filter: RelationFilter) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            if filter.admits(e.relation) {
                adj[e.a].push(e.b);
                adj[e.b].push(e.a);
            }
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count()];
        for e in &self.edges {
            d[e.a] += 1;
            d[e.b] += 1;
        }
        d
    }

    /// Articles without any user-article edge.
    pub fn unshared_articles(&self) -> Vec<usize> {
        let mut has = vec![false; self.article_count()];
        for e in &self.edges {
            if e.relation == Relation::UserArticle {
                has[e.b - self.user_count()] = true;
            }
        }
        has.iter()
            .enumerate()
            .filter(|(_, &h)| !h)
            .map(|(i, _)| i)
            .collect()
    }

    /// Subgraph on `nodes` (sorted ascending, unique) with every edge among them.
    pub fn induced(&self, nodes: &[usize]) -> Result<CommunityGraph> {
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("induced node list must be strictly increasing".into()));
        }
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &n) in nodes.iter().enumerate() {
            local[n] = i;
        }
        let users: Vec<usize> = nodes.iter().copied().filter(|&n| n < self.user_count()).collect();
        let articles: Vec<usize> = nodes.iter().copied().filter(|&n| n >= self.user_count()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| local[e.a] != usize::MAX && local[e.b] != usize::MAX)
            .map(|e| Edge {
                a: local[e.a],
                b: local[e.b],
                relation: e.relation,
            })
            .collect();
        let ai: Vec<usize> = articles.iter().map(|&n| n - self.user_count()).collect();
        CommunityGraph::new(
            users.iter().map(|&u| self.user_ids[u].clone()).collect(),
            ai.iter().map(|&a| self.article_ids[a].clone()).collect(),
            edges,
            self.features.select_rows(nodes),
            ai.iter().map(|&a| self.labels[a]).collect(),
            ai.iter().map(|&a| self.splits[a]).collect(),
        )
    }

    /// Copy with article feature rows replaced.
    pub fn with_features(&self, features: Csr) -> Result<CommunityGraph> {
        if features.rows() != self.node_count() {
            return Err(Error::dim("features", &[features.rows()], &[self.node_count()]));
        }
        Ok(CommunityGraph {
            features,
            ..self.clone()
        })
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Users `0..users`, articles after; every node gets a one-hot feature.
    pub fn graph(users: usize, articles: usize, edges: &[(usize, usize, Relation)]) -> CommunityGraph {
        let n = users + articles;
        let features = Csr::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>()).unwrap();
        CommunityGraph::new(
            (0..users).map(|i| format!("u{i}")).collect(),
            (0..articles).map(|i| format!("a{i}")).collect(),
            edges
                .iter()
                .map(|&(a, b, relation)| Edge { a, b, relation })
                .collect(),
            features,
            (0..articles)
                .map(|i| if i % 2 == 0 { Label::Fake } else { Label::Real })
                .collect(),
            vec![Split::Train; articles],
        )
        .unwrap()
    }

    /// Plain undirected graph where every node is a user.
    pub fn users_only(n: usize, edges: &[(usize, usize)]) -> CommunityGraph {
        let e: Vec<_> = edges.iter().map(|&(a, b)| (a, b, Relation::UserUser)).collect();
        graph(n, 0, &e)
    }
}
