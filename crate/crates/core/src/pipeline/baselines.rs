//! Majority-sharing baseline and the randomised-article graph of the social baseline.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index;

use crate::builder::ShareRecord;
use crate::error::Result;
use crate::graph::{CommunityGraph, Label, NodeKind};
use crate::rng;
use crate::sparse::Csr;

/// Per-user `(fake, real)` share counts over the articles in `history`.
pub fn historical_counts(shares: &[ShareRecord], history: &HashMap<&str, Label>) -> BTreeMap<String, (usize, usize)> {
    crate::builder::share_counts(shares, history)
}

/// Fake iff the interacting users' mean fake-share count exceeds their mean
/// real-share count. Users without history are ignored; ties and articles
/// without known users are real.
pub fn majority_predict(users: &[&str], counts: &BTreeMap<String, (usize, usize)>) -> bool {
    let known: Vec<(usize, usize)> = users.iter().filter_map(|u| counts.get(*u).copied()).collect();
    if known.is_empty() {
        return false;
    }
    // equal denominators, so comparing sums compares means exactly
    let fake: usize = known.iter().map(|c| c.0).sum();
    let real: usize = known.iter().map(|c| c.1).sum();
    fake > real
}

/// Majority predictions for `articles`, each given as its sharer ids.
pub fn majority_baseline(articles: &[Vec<&str>], counts: &BTreeMap<String, (usize, usize)>) -> Vec<bool> {
    articles.iter().map(|u| majority_predict(u, counts)).collect()
}

/// Replaces every article feature row by a seeded uniformly random binary
/// row with the same number of ones; user rows are untouched.
pub fn randomize_article_features(graph: &CommunityGraph, seed: u64) -> Result<CommunityGraph> {
    let mut rng = rng::derive(seed, "social-features");
    let f = graph.features();
    let dim = f.cols();
    let rows: Vec<Vec<(usize, f64)>> = (0..graph.node_count())
        .map(|n| match graph.kind(n) {
            NodeKind::User => f.row(n).collect(),
            NodeKind::Article => {
                let k = f.row_nnz(n).min(dim);
                let mut cols = index::sample(&mut rng, dim, k).into_vec();
                cols.sort_unstable();
                cols.into_iter().map(|c| (c, 1.0)).collect()
            }
        })
        .collect();
    graph.with_features(Csr::from_rows(dim, rows)?)
}
