//! Greedy edge-locality partitioner and cluster batching.
//!
//! Seeds are spread out by BFS distance (unreached components first, then the
//! farthest node, ties broken by degree and a seeded permutation). Clusters
//! grow round-robin, each taking the frontier node with the most edges into
//! it, up to a balanced target size. A final pass moves boundary nodes to the
//! neighbouring cluster holding more of their edges while sizes stay within
//! ±20% of the mean.

use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{CommunityGraph, Edge, RelationFilter};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPartition {
    assignment: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub fn from_assignment(assignment: Vec<usize>, k: usize) -> Result<Self> {
        let mut clusters = vec![Vec::new(); k];
        for (node, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::Validation(format!("node {node} assigned to cluster {c} of {k}")));
            }
            clusters[c].push(node);
        }
        Ok(Self { assignment, clusters })
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn members(&self, c: usize) -> &[usize] {
        &self.clusters[c]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }

    /// Edges with both endpoints in cluster `c`.
    pub fn induced_edges<'g>(&self, graph: &'g CommunityGraph, c: usize) -> Vec<&'g Edge> {
        graph
            .edges()
            .iter()
            .filter(|e| self.assignment[e.a] == c && self.assignment[e.b] == c)
            .collect()
    }

    /// Fraction of edges that stay inside a cluster.
    pub fn intra_edge_fraction(&self, graph: &CommunityGraph) -> f64 {
        if graph.edge_count() == 0 {
            return 1.0;
        }
        let intra = graph
            .edges()
            .iter()
            .filter(|e| self.assignment[e.a] == self.assignment[e.b])
            .count();
        intra as f64 / graph.edge_count() as f64
    }

    /// Shuffles clusters into consecutive groups of `batch_clusters` covering all of them.
    pub fn epoch_batches(&self, batch_clusters: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
        let mut ids: Vec<usize> = (0..self.cluster_count()).collect();
        ids.shuffle(rng);
        ids.chunks(batch_clusters.max(1)).map(<[usize]>::to_vec).collect()
    }

    /// Sorted node ids of the union of the given clusters.
    pub fn union_nodes(&self, clusters: &[usize]) -> Vec<usize> {
        let mut nodes: Vec<usize> = clusters.iter().flat_map(|&c| self.clusters[c].iter().copied()).collect();
        nodes.sort_unstable();
        nodes
    }
}

/// Default cluster count: the configured value, scaled down to
/// `max(4, nodes/50)` for small graphs and never above the node count.
pub fn default_cluster_count(configured: usize, nodes: usize) -> usize {
    configured.min((nodes / 50).max(4)).min(nodes).max(1)
}

pub fn partition(graph: &CommunityGraph, k: usize, seed: u64) -> Result<ClusterPartition> {
    let n = graph.node_count();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("cannot split {n} nodes into {k} clusters")));
    }
    let adj = graph.neighbors(RelationFilter::All);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derive(seed, "partition"));
    let mut prio = vec![0usize; n];
    for (rank, &node) in order.iter().enumerate() {
        prio[node] = n - rank;
    }

    let seeds = spread_seeds(&adj, &degree, &prio, k);

    let base = n / k;
    let target: Vec<usize> = (0..k).map(|c| base + usize::from(c < n % k)).collect();
    let mut assignment = vec![usize::MAX; n];
    let mut size = vec![0usize; k];
    let mut gains: Vec<HashMap<usize, usize>> = vec![HashMap::new(); k];
    let mut heaps: Vec<BinaryHeap<(usize, usize, usize)>> = vec![BinaryHeap::new(); k];
    let mut fallback = order.iter().copied();
    let mut assigned = 0;

    let claim = |c: usize,
                     v: usize,
                     assignment: &mut Vec<usize>,
                     size: &mut Vec<usize>,
                     gains: &mut Vec<HashMap<usize, usize>>,
                     heaps: &mut Vec<BinaryHeap<(usize, usize, usize)>>| {
        assignment[v] = c;
        size[c] += 1;
        for &w in &adj[v] {
            if assignment[w] == usize::MAX {
                let g = gains[c].entry(w).or_insert(0);
                *g += 1;
                heaps[c].push((*g, prio[w], w));
            }
        }
    };

    for (c, &s) in seeds.iter().enumerate() {
        claim(c, s, &mut assignment, &mut size, &mut gains, &mut heaps);
        assigned += 1;
    }
    while assigned < n {
        for c in 0..k {
            if size[c] >= target[c] || assigned == n {
                continue;
            }
            let mut pick = None;
            while let Some((g, _, v)) = heaps[c].pop() {
                if assignment[v] == usize::MAX && gains[c].get(&v) == Some(&g) {
                    pick = Some(v);
                    break;
                }
            }
            let v = match pick {
                Some(v) => v,
                None => fallback
                    .by_ref()
                    .find(|&v| assignment[v] == usize::MAX)
                    .expect("unassigned node remains"),
            };
            claim(c, v, &mut assignment, &mut size, &mut gains, &mut heaps);
            assigned += 1;
        }
    }

    refine(&adj, &mut assignment, &mut size, n, k);
    ClusterPartition::from_assignment(assignment, k)
}

fn spread_seeds(adj: &[Vec<usize>], degree: &[usize], prio: &[usize], k: usize) -> Vec<usize> {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    let mut is_seed = vec![false; n];
    let mut seeds = Vec::with_capacity(k);
    let mut queue = VecDeque::new();
    for _ in 0..k {
        let next = (0..n)
            .filter(|&v| !is_seed[v])
            .max_by_key(|&v| (dist[v], degree[v], prio[v]))
            .expect("k <= n");
        is_seed[next] = true;
        seeds.push(next);
        dist[next] = 0;
        queue.push_back(next);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[v] + 1 < dist[w] {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    seeds
}

fn refine(adj: &[Vec<usize>], assignment: &mut [usize], size: &mut [usize], n: usize, k: usize) {
    let mean = n as f64 / k as f64;
    let lower = (0.8 * mean).ceil() as usize;
    let upper = (1.2 * mean).floor() as usize;
    for _ in 0..2 {
        let mut moved = false;
        for v in 0..n {
            let c = assignment[v];
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for &w in &adj[v] {
                *counts.entry(assignment[w]).or_insert(0) += 1;
            }
            let own = counts.get(&c).copied().unwrap_or(0);
            let best = counts
                .iter()
                .filter(|(&d, _)| d != c)
                .max_by_key(|(&d, &cnt)| (cnt, std::cmp::Reverse(d)))
                .map(|(&d, &cnt)| (d, cnt));
            if let Some((d, cnt)) = best {
                if cnt > own && size[c] > lower && size[c] > 1 && size[d] < upper {
                    assignment[v] = d;
                    size[c] -= 1;
                    size[d] += 1;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

/// Union of `batch_clusters` randomly chosen clusters with every original edge among them.
pub fn sample_batch(
    graph: &CommunityGraph,
    partition: &ClusterPartition,
    batch_clusters: usize,
    rng: &mut Rng,
) -> Result<(Vec<usize>, CommunityGraph)> {
    if batch_clusters == 0 || batch_clusters > partition.cluster_count() {
        return Err(Error::Validation(format!(
            "cannot sample {batch_clusters} of {} clusters",
            partition.cluster_count()
        )));
    }
    let mut ids: Vec<usize> = (0..partition.cluster_count()).collect();
    ids.shuffle(rng);
    ids.truncate(batch_clusters);
    let nodes = partition.union_nodes(&ids);
    let sub = graph.induced(&nodes)?;
    Ok((nodes, sub))
}
