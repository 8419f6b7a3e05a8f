//! Random graphs and dense helpers shared by the oracle criteria.

use rand::Rng as _;
use safer_core::graph::{Edge, Label};
use safer_core::rng::Rng;
use safer_core::{CommunityGraph, Csr, Relation, Split, Tensor};

pub type Dense = Vec<Vec<f64>>;

pub struct RandomGraph {
    pub graph: CommunityGraph,
    pub x: Dense,
}

impl RandomGraph {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Dense 0/1 adjacency from the raw edge list, restricted to `relation` when given.
    pub fn adjacency(&self, relation: Option<Relation>) -> Vec<Vec<bool>> {
        let n = self.n();
        let mut a = vec![vec![false; n]; n];
        for e in self.graph.edges() {
            if relation.is_none_or(|r| r == e.relation) {
                a[e.a][e.b] = true;
                a[e.b][e.a] = true;
            }
        }
        a
    }
}

/// A heterogeneous graph with at most `max_nodes` nodes. With `dense_rows`
/// every feature row is nonzero; otherwise some rows are left empty.
pub fn random_graph(rng: &mut Rng, max_nodes: usize, dim: usize, dense_rows: bool) -> RandomGraph {
    let users = rng.random_range(2..=max_nodes / 2);
    let articles = rng.random_range(1..=max_nodes - users);
    let n = users + articles;
    let p_ua = rng.random_range(0.15..0.6);
    let p_uu = rng.random_range(0.0..0.5);
    let mut edges = Vec::new();
    for u in 0..users {
        for a in users..n {
            if rng.random::<f64>() < p_ua {
                edges.push(Edge { a: u, b: a, relation: Relation::UserArticle });
            }
        }
        for v in u + 1..users {
            if rng.random::<f64>() < p_uu {
                edges.push(Edge { a: u, b: v, relation: Relation::UserUser });
            }
        }
    }
    let x: Dense = (0..n)
        .map(|_| {
            let empty = !dense_rows && rng.random::<f64>() < 0.15;
            (0..dim)
                .map(|_| {
                    if empty || (!dense_rows && rng.random::<f64>() < 0.3) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..articles)
        .map(|i| if i % 2 == 0 || rng.random::<bool>() { Label::Fake } else { Label::Real })
        .collect();
    let graph = CommunityGraph::new(
        (0..users).map(|u| format!("u{u}")).collect(),
        (0..articles).map(|a| format!("a{a}")).collect(),
        edges,
        csr(&x),
        labels,
        vec![Split::Train; articles],
    )
    .expect("valid random graph");
    RandomGraph { graph, x }
}

pub fn csr(d: &Dense) -> Csr {
    let cols = d.first().map_or(0, Vec::len);
    let rows = d
        .iter()
        .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
        .collect();
    Csr::from_rows(cols, rows).expect("well-formed rows")
}

pub fn tensor(d: &Dense) -> Tensor {
    Tensor::from_rows(d).expect("rectangular")
}

pub fn random_dense(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn column(d: &Dense) -> Vec<f64> {
    d.iter().map(|r| r[0]).collect()
}

pub fn max_abs_diff(oracle: &Dense, got: &Tensor) -> f64 {
    assert_eq!(got.rows(), oracle.len(), "row count");
    let mut worst = 0.0f64;
    for (i, row) in oracle.iter().enumerate() {
        assert_eq!(got.cols(), row.len(), "column count");
        for (j, v) in row.iter().enumerate() {
            let d = (got.get(i, j) - v).abs();
            if !d.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(d);
        }
    }
    worst
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}
