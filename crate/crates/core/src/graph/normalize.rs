//! Degree normalisations and relation-typed adjacency views.

use crate::error::{Error, Result};
use crate::graph::{CommunityGraph, Relation};
use crate::sparse::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationFilter {
    All,
    Only(Relation),
}

impl RelationFilter {
    pub fn admits(self, r: Relation) -> bool {
        match self {
            RelationFilter::All => true,
            RelationFilter::Only(x) => x == r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdjacencyTag {
    /// `D^{-1/2} A D^{-1/2}`.
    Symmetric,
    /// `(D+I)^{-1}(A+I)`.
    DiagonalEnhanced,
    /// `D^{-1} A`; rows without neighbours stay zero.
    RowStochastic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: Csr,
    pub tag: AdjacencyTag,
    pub relation: RelationFilter,
}

fn binary_adjacency(graph: &CommunityGraph, filter: RelationFilter, self_loops: bool) -> Vec<Vec<usize>> {
    let mut adj = graph.neighbors(filter);
    if self_loops {
        for (i, row) in adj.iter_mut().enumerate() {
            let pos = row.binary_search(&i).unwrap_or_else(|p| p);
            row.insert(pos, i);
        }
    }
    adj
}

fn require_nonempty(graph: &CommunityGraph) -> Result<()> {
    if graph.is_empty() {
        Err(Error::Validation("graph has no nodes".into()))
    } else {
        Ok(())
    }
}

/// `D^{-1/2} A D^{-1/2}`, with `A_ii = 1` when `self_loops` is set.
pub fn normalize_symmetric(graph: &CommunityGraph, self_loops: bool) -> Result<NormalizedAdjacency> {
    require_nonempty(graph)?;
    let adj = binary_adjacency(graph, RelationFilter::All, self_loops);
    let deg: Vec<f64> = adj.iter().map(|r| r.len() as f64).collect();
    if let Some(node) = deg.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDegree { node });
    }
    let rows = adj
        .iter()
        .enumerate()
        .map(|(u, row)| row.iter().map(|&v| (v, 1.0 / (deg[u] * deg[v]).sqrt())).collect())
        .collect();
    Ok(NormalizedAdjacency {
        matrix: Csr::from_rows(graph.node_count(), rows)?,
        tag: AdjacencyTag::Symmetric,
        relation: RelationFilter::All,
    })
}

/// `(D+I)^{-1}(A+I)`: every row sums to one.
pub fn normalize_diagonal_enhanced(graph: &CommunityGraph) -> Result<NormalizedAdjacency> {
    require_nonempty(graph)?;
    let adj = binary_adjacency(graph, RelationFilter::All, true);
    let rows = adj
        .iter()
        .map(|row| {
            let w = 1.0 / row.len() as f64;
            row.iter().map(|&v| (v, w)).collect()
        })
        .collect();
    Ok(NormalizedAdjacency {
        matrix: Csr::from_rows(graph.node_count(), rows)?,
        tag: AdjacencyTag::DiagonalEnhanced,
        relation: RelationFilter::All,
    })
}

fn row_mean(graph: &CommunityGraph, filter: RelationFilter) -> Result<Csr> {
    let adj = binary_adjacency(graph, filter, false);
    let rows = adj
        .iter()
        .map(|row| {
            let w = 1.0 / row.len().max(1) as f64;
            row.iter().map(|&v| (v, w)).collect()
        })
        .collect();
    Csr::from_rows(graph.node_count(), rows)
}

/// Edges of one relation, each row scaled by `1/c_{u,r}` with `c_{u,r} = |U_u^r|`.
pub fn relation_view(graph: &CommunityGraph, relation: Relation) -> Result<NormalizedAdjacency> {
    Ok(NormalizedAdjacency {
        matrix: row_mean(graph, RelationFilter::Only(relation))?,
        tag: AdjacencyTag::RowStochastic,
        relation: RelationFilter::Only(relation),
    })
}

/// Mean over all neighbours (no self-loop), as used by GraphSAGE.
pub fn mean_view(graph: &CommunityGraph) -> Result<NormalizedAdjacency> {
    Ok(NormalizedAdjacency {
        matrix: row_mean(graph, RelationFilter::All)?,
        tag: AdjacencyTag::RowStochastic,
        relation: RelationFilter::All,
    })
}

/// Binary neighbourhood pattern used for masked attention.
pub fn attention_pattern(graph: &CommunityGraph, filter: RelationFilter, self_loops: bool) -> Result<Csr> {
    let adj = binary_adjacency(graph, filter, self_loops);
    Csr::from_rows(
        graph.node_count(),
        adj.into_iter().map(|row| row.into_iter().map(|v| (v, 1.0)).collect()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{graph, users_only};

    /// Dense `D^{-1/2} A D^{-1/2}` straight from the edge list.
    fn dense_symmetric(n: usize, edges: &[(usize, usize)], loops: bool) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for &(u, v) in edges {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
        if loops {
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = 1.0;
            }
        }
        let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        (0..n)
            .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
            .collect()
    }

    #[test]
    fn symmetric_examples() {
        let single = users_only(1, &[]);
        let m = normalize_symmetric(&single, true).unwrap().matrix;
        assert_eq!(m.to_dense().data(), &[1.0]);

        let path = users_only(3, &[(0, 1), (1, 2)]);
        let m = normalize_symmetric(&path, true).unwrap().matrix;
        assert!((m.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((m.get(0, 1) - 0.40825).abs() < 1e-5);

        // 2-regular ring of 5: entries are 1/(k+1)
        let ring = users_only(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        let m = normalize_symmetric(&ring, true).unwrap().matrix;
        assert!(m.values().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn symmetric_matches_dense_oracle() {
        let edges = [(0, 1), (0, 4), (1, 2), (2, 5), (3, 4), (4, 5), (1, 5)];
        let g = users_only(6, &edges);
        for loops in [true, false] {
            let m = normalize_symmetric(&g, loops).unwrap().matrix;
            let dense = dense_symmetric(6, &edges, loops);
            for (i, row) in dense.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    assert!((m.get(i, j) - v).abs() < 1e-12);
                }
            }
            assert!(m.is_symmetric(1e-15));
        }
    }

    #[test]
    fn isolated_node_without_loops_is_an_error() {
        let g = users_only(3, &[(0, 1)]);
        assert!(matches!(normalize_symmetric(&g, false), Err(Error::ZeroDegree { node: 2 })));
        assert!(normalize_symmetric(&users_only(0, &[]), true).is_err());
    }

    #[test]
    fn diagonal_enhanced_examples() {
        let single = users_only(1, &[]);
        assert_eq!(normalize_diagonal_enhanced(&single).unwrap().matrix.to_dense().data(), &[1.0]);
        let pair = users_only(2, &[(0, 1)]);
        let m = normalize_diagonal_enhanced(&pair).unwrap().matrix.to_dense();
        assert_eq!(m.data(), &[0.5, 0.5, 0.5, 0.5]);
        let g = users_only(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
        let sums = normalize_diagonal_enhanced(&g).unwrap().matrix.row_sums();
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn relation_views_split_edges() {
        let follows_only = users_only(3, &[(0, 1), (1, 2)]);
        assert_eq!(relation_view(&follows_only, Relation::UserArticle).unwrap().matrix.nnz(), 0);

        let star = graph(
            1,
            3,
            &[
                (0, 1, Relation::UserArticle),
                (0, 2, Relation::UserArticle),
                (0, 3, Relation::UserArticle),
            ],
        );
        let v = relation_view(&star, Relation::UserArticle).unwrap().matrix;
        assert_eq!(v.row_nnz(0), 3);

        let mixed = graph(
            3,
            2,
            &[
                (0, 3, Relation::UserArticle),
                (1, 3, Relation::UserArticle),
                (2, 4, Relation::UserArticle),
                (0, 1, Relation::UserUser),
            ],
        );
        for r in Relation::ALL {
            let count = mixed.edges().iter().filter(|e| e.relation == r).count();
            assert_eq!(relation_view(&mixed, r).unwrap().matrix.nnz(), 2 * count);
        }
    }
}
