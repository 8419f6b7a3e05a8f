//! On-disk graph snapshots.
//!
//! A snapshot is a directory of three tab-separated files (see [`crate::tsv`]):
//!
//! | file           | columns                                   |
//! |----------------|-------------------------------------------|
//! | `nodes.tsv`    | node, kind, id, label, split              |
//! | `edges.tsv`    | a, b, relation                            |
//! | `features.tsv` | node, index, value                        |
//!
//! `node` is the dense node index (users first). Users carry `-` for label
//! and split. `features.tsv` starts with a `# dim <n>` line giving the
//! feature width.

use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{CommunityGraph, Edge, Label, Relation, Split};
use crate::sparse::Csr;
use crate::tsv::{Reader, Writer};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";

pub fn write_snapshot(graph: &CommunityGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = Writer::create(&dir.join(NODES_FILE))?;
    w.comment("node\tkind\tid\tlabel\tsplit")?;
    for (i, id) in graph.user_ids().iter().enumerate() {
        w.row(&[&i.to_string(), "user", id, "-", "-"])?;
    }
    for (a, id) in graph.article_ids().iter().enumerate() {
        w.row(&[
            &graph.article_node(a).to_string(),
            "article",
            id,
            graph.labels()[a].as_str(),
            graph.splits()[a].as_str(),
        ])?;
    }
    w.finish()?;

    let mut w = Writer::create(&dir.join(EDGES_FILE))?;
    w.comment("a\tb\trelation")?;
    for e in graph.edges() {
        w.row(&[&e.a.to_string(), &e.b.to_string(), e.relation.as_str()])?;
    }
    w.finish()?;

    let mut w = Writer::create(&dir.join(FEATURES_FILE))?;
    w.comment(&format!("dim {}", graph.feature_dim()))?;
    let f = graph.features();
    for r in 0..f.rows() {
        for (c, v) in f.row(r) {
            w.row(&[&r.to_string(), &c.to_string(), &v.to_string()])?;
        }
    }
    w.finish()
}

fn parse<T: std::str::FromStr>(r: &Reader, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| r.error(line, format!("invalid {what} {s:?}")))
}

pub fn read_snapshot(dir: &Path) -> Result<CommunityGraph> {
    let mut r = Reader::open(&dir.join(NODES_FILE))?;
    let mut user_ids = Vec::new();
    let mut article_ids = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    while let Some(row) = r.next_row(5)? {
        let f = &row.fields;
        let node: usize = parse(&r, row.line, &f[0], "node index")?;
        if node != user_ids.len() + article_ids.len() {
            return Err(r.error(row.line, format!("node {node} out of order")));
        }
        match f[1].as_str() {
            "user" => {
                if !article_ids.is_empty() {
                    return Err(r.error(row.line, "user listed after articles"));
                }
                user_ids.push(f[2].clone());
            }
            "article" => {
                article_ids.push(f[2].clone());
                labels.push(parse::<Label>(&r, row.line, &f[3], "label")?);
                splits.push(parse::<Split>(&r, row.line, &f[4], "split")?);
            }
            other => return Err(r.error(row.line, format!("unknown node kind {other:?}"))),
        }
    }
    let n = user_ids.len() + article_ids.len();

    let mut r = Reader::open(&dir.join(EDGES_FILE))?;
    let mut edges = Vec::new();
    while let Some(row) = r.next_row(3)? {
        edges.push(Edge {
            a: parse(&r, row.line, &row.fields[0], "node index")?,
            b: parse(&r, row.line, &row.fields[1], "node index")?,
            relation: parse::<Relation>(&r, row.line, &row.fields[2], "relation")?,
        });
    }

    let path = dir.join(FEATURES_FILE);
    let dim = read_dim(&path)?;
    let mut r = Reader::open(&path)?;
    let mut triplets = Vec::new();
    while let Some(row) = r.next_row(3)? {
        let node: usize = parse(&r, row.line, &row.fields[0], "node index")?;
        let idx: usize = parse(&r, row.line, &row.fields[1], "feature index")?;
        let v: f64 = parse(&r, row.line, &row.fields[2], "feature value")?;
        if node >= n || idx >= dim {
            return Err(r.error(row.line, format!("feature ({node},{idx}) outside {n}×{dim}")));
        }
        triplets.push((node, idx, v));
    }
    let features = Csr::from_triplets(n, dim, &triplets)?;
    CommunityGraph::new(user_ids, article_ids, edges, features, labels, splits)
}

fn read_dim(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("# dim "))
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Load {
            path: path.to_path_buf(),
            line: 1,
            message: "missing `# dim <n>` header".into(),
        })
}
