//! Community-graph construction from article, share and follow records.
//!
//! Record files are TSV (see [`crate::tsv`]):
//!
//! | file           | columns                     |
//! |----------------|-----------------------------|
//! | `articles.tsv` | `article_id  label  text`   |
//! | `shares.tsv`   | `user_id  article_id`       |
//! | `follows.tsv`  | `user_a  user_b`            |
//!
//! Only train and validation articles become nodes. User features and the
//! activity filters are computed from shares of those articles, so nothing
//! about test articles reaches the graph.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CommunityGraph, Edge, Label, Relation, Split};
use crate::rng;
use crate::sparse::Csr;
use crate::tsv;

pub const ARTICLES_FILE: &str = "articles.tsv";
pub const SHARES_FILE: &str = "shares.tsv";
pub const FOLLOWS_FILE: &str = "follows.tsv";
pub const SPLITS_FILE: &str = "splits.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";

pub const URL_TOKEN: &str = "[url]";
pub const HASHTAG_TOKEN: &str = "[hashtag]";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArticleRecord {
    pub article_id: String,
    pub label: Label,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShareRecord {
    pub user_id: String,
    pub article_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FollowRecord {
    pub user_a: String,
    pub user_b: String,
}

impl FollowRecord {
    /// Order-normalised follow edge; `None` for a self-follow.
    pub fn new(a: &str, b: &str) -> Option<Self> {
        match a.cmp(b) {
            std::cmp::Ordering::Less => Some(Self {
                user_a: a.into(),
                user_b: b.into(),
            }),
            std::cmp::Ordering::Greater => Some(Self {
                user_a: b.into(),
                user_b: a.into(),
            }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// Raw records of one corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub articles: Vec<ArticleRecord>,
    pub shares: Vec<ShareRecord>,
    pub follows: Vec<FollowRecord>,
}

impl Dataset {
    /// Sorts records, collapses duplicate shares and follows, drops
    /// self-follows and rejects shares of unknown articles.
    pub fn normalize(mut self) -> Result<Self> {
        self.articles.sort_by(|a, b| a.article_id.cmp(&b.article_id));
        if let Some(w) = self.articles.windows(2).find(|w| w[0].article_id == w[1].article_id) {
            return Err(Error::Validation(format!("duplicate article {:?}", w[0].article_id)));
        }
        let known: BTreeSet<&str> = self.articles.iter().map(|a| a.article_id.as_str()).collect();
        if let Some(s) = self.shares.iter().find(|s| !known.contains(s.article_id.as_str())) {
            return Err(Error::Validation(format!(
                "share by {:?} references unknown article {:?}",
                s.user_id, s.article_id
            )));
        }
        self.shares.sort();
        self.shares.dedup();
        self.follows = self
            .follows
            .iter()
            .filter_map(|f| FollowRecord::new(&f.user_a, &f.user_b))
            .collect();
        self.follows.sort();
        self.follows.dedup();
        Ok(self)
    }

    pub fn labels(&self) -> HashMap<&str, Label> {
        self.articles.iter().map(|a| (a.article_id.as_str(), a.label)).collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut articles = Vec::new();
        let mut r = tsv::Reader::open(&dir.join(ARTICLES_FILE))?;
        while let Some(row) = r.next_row(3)? {
            let label = parse_label(&row.fields[1]).ok_or_else(|| r.error(row.line, "label must be fake or real"))?;
            let [id, _, text] = <[String; 3]>::try_from(row.fields).expect("width checked");
            articles.push(ArticleRecord {
                article_id: id,
                label,
                text,
            });
        }
        let mut shares = Vec::new();
        let mut r = tsv::Reader::open(&dir.join(SHARES_FILE))?;
        while let Some(row) = r.next_row(2)? {
            let [user_id, article_id] = <[String; 2]>::try_from(row.fields).expect("width checked");
            shares.push(ShareRecord { user_id, article_id });
        }
        let mut follows = Vec::new();
        let mut r = tsv::Reader::open(&dir.join(FOLLOWS_FILE))?;
        while let Some(row) = r.next_row(2)? {
            let f = FollowRecord::new(&row.fields[0], &row.fields[1])
                .ok_or_else(|| r.error(row.line, "user follows itself"))?;
            follows.push(f);
        }
        Dataset {
            articles,
            shares,
            follows,
        }
        .normalize()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut w = tsv::Writer::create(&dir.join(ARTICLES_FILE))?;
        w.comment("article_id\tlabel\ttext")?;
        for a in &self.articles {
            w.row(&[&a.article_id, a.label.as_str(), &a.text])?;
        }
        w.finish()?;
        let mut w = tsv::Writer::create(&dir.join(SHARES_FILE))?;
        w.comment("user_id\tarticle_id")?;
        for s in &self.shares {
            w.row(&[&s.user_id, &s.article_id])?;
        }
        w.finish()?;
        let mut w = tsv::Writer::create(&dir.join(FOLLOWS_FILE))?;
        w.comment("user_a\tuser_b")?;
        for f in &self.follows {
            w.row(&[&f.user_a, &f.user_b])?;
        }
        w.finish()
    }
}

fn parse_label(s: &str) -> Option<Label> {
    match s {
        "fake" => Some(Label::Fake),
        "real" => Some(Label::Real),
        _ => None,
    }
}

/// Lowercased tokens; URLs become `[url]`, `#tag` becomes `[hashtag]`,
/// everything that is not alphanumeric separates tokens.
pub fn preprocess(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            out.push(URL_TOKEN.to_string());
            continue;
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut i = 0;
        let mut word = String::new();
        while i < chars.len() {
            let c = chars[i];
            if c == '#' && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
                flush(&mut word, &mut out);
                out.push(HASHTAG_TOKEN.to_string());
                i += 1;
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
                continue;
            }
            if c.is_alphanumeric() {
                word.push(c);
            } else {
                flush(&mut word, &mut out);
            }
            i += 1;
        }
        flush(&mut word, &mut out);
    }
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

/// Token list ordered by document frequency (ties lexicographic).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
}

impl Vocabulary {
    pub const MIN_TOKEN_CHARS: usize = 2;

    /// Top-`size` tokens of at least two characters by document frequency.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a [String]>, size: usize) -> Self {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            let uniq: BTreeSet<&str> = doc
                .iter()
                .map(String::as_str)
                .filter(|t| t.chars().count() >= Self::MIN_TOKEN_CHARS)
                .collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(size);
        Self::from_entries(ranked.into_iter().map(|(t, f)| (t.to_string(), f)).collect())
    }

    fn from_entries(entries: Vec<(String, usize)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (t, _))| (t.clone(), i)).collect();
        let (tokens, doc_freq) = entries.into_iter().unzip();
        Self {
            tokens,
            index,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = tsv::Writer::create(path)?;
        w.comment("token\tdocument_frequency")?;
        for (t, f) in self.tokens.iter().zip(&self.doc_freq) {
            w.row(&[t, &f.to_string()])?;
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = tsv::Reader::open(path)?;
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        while let Some(row) = r.next_row(2)? {
            let f = row.fields[1]
                .parse()
                .map_err(|_| r.error(row.line, "bad document frequency"))?;
            if !seen.insert(row.fields[0].clone()) {
                return Err(r.error(row.line, "duplicate token"));
            }
            entries.push((row.fields[0].clone(), f));
        }
        Ok(Self::from_entries(entries))
    }
}

/// Sorted, deduplicated vocabulary indices present in `tokens`.
pub fn article_bow(tokens: &[String], vocab: &Vocabulary) -> Vec<usize> {
    let set: BTreeSet<usize> = tokens.iter().filter_map(|t| vocab.get(t)).collect();
    set.into_iter().collect()
}

/// Dense form of [`article_bow`].
pub fn article_bow_dense(tokens: &[String], vocab: &Vocabulary) -> Vec<f64> {
    let mut v = vec![0.0; vocab.len()];
    for j in article_bow(tokens, vocab) {
        v[j] = 1.0;
    }
    v
}

/// Element-wise OR of the articles a user shared, as sorted index sets.
pub fn user_features(articles: &[&[usize]]) -> Result<Vec<usize>> {
    if articles.is_empty() {
        return Err(Error::Validation("user has no shared articles".into()));
    }
    let set: BTreeSet<usize> = articles.iter().flat_map(|a| a.iter().copied()).collect();
    Ok(set.into_iter().collect())
}

/// Per-user share counts by class.
pub fn share_counts<'a>(
    shares: impl IntoIterator<Item = &'a ShareRecord>,
    labels: &HashMap<&str, Label>,
) -> BTreeMap<String, (usize, usize)> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in shares {
        if let Some(&l) = labels.get(s.article_id.as_str()) {
            let c = counts.entry(s.user_id.clone()).or_default();
            if l.is_fake() {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
    }
    counts
}

/// Users whose share count in either class exceeds `threshold` × that class's
/// article count. `class_sizes` is `(fake, real)`.
pub fn frequent_users(
    counts: &BTreeMap<String, (usize, usize)>,
    class_sizes: (usize, usize),
    threshold: f64,
) -> BTreeSet<String> {
    counts
        .iter()
        .filter(|(_, &(f, r))| f as f64 > threshold * class_sizes.0 as f64 || r as f64 > threshold * class_sizes.1 as f64)
        .map(|(u, _)| u.clone())
        .collect()
}

/// Drops frequent sharers, then keeps the `top_n` most active remaining users
/// (ties by user id). Only shares of articles in `labels` are counted.
pub fn filter_users(
    shares: &[ShareRecord],
    labels: &HashMap<&str, Label>,
    top_n: usize,
    frequent_threshold: f64,
) -> Result<BTreeSet<String>> {
    if top_n == 0 || !(frequent_threshold > 0.0 && frequent_threshold <= 1.0) {
        return Err(Error::Validation(format!(
            "filter_users needs top_n ≥ 1 and threshold in (0, 1], got {top_n} and {frequent_threshold}"
        )));
    }
    let counts = share_counts(shares, labels);
    let fake = labels.values().filter(|l| l.is_fake()).count();
    let sizes = (fake, labels.len() - fake);
    let frequent = frequent_users(&counts, sizes, frequent_threshold);
    let mut ranked: Vec<(&String, usize)> = counts
        .iter()
        .filter(|(u, _)| !frequent.contains(*u))
        .map(|(u, &(f, r))| (u, f + r))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(top_n).map(|(u, _)| u.clone()).collect())
}

/// Seeded stratified train/val/test assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub assignment: BTreeMap<String, Split>,
}

impl SplitManifest {
    pub const FRACTIONS: (f64, f64) = (0.7, 0.1);

    /// 70/10/20 per label, rounding train and val counts to nearest.
    pub fn stratified(articles: &[(&str, Label)], seed: u64) -> Self {
        let mut assignment = BTreeMap::new();
        let mut rng = rng::derive(seed, "split");
        for label in [Label::Fake, Label::Real] {
            let mut ids: Vec<&str> = articles.iter().filter(|a| a.1 == label).map(|a| a.0).collect();
            ids.sort_unstable();
            ids.shuffle(&mut rng);
            let n = ids.len() as f64;
            let train = (Self::FRACTIONS.0 * n).round() as usize;
            let val = ((Self::FRACTIONS.1 * n).round() as usize).min(ids.len() - train);
            for (i, id) in ids.into_iter().enumerate() {
                let s = if i < train {
                    Split::Train
                } else if i < train + val {
                    Split::Val
                } else {
                    Split::Test
                };
                assignment.insert(id.to_string(), s);
            }
        }
        Self { assignment }
    }

    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    pub fn ids_in(&self, split: Split) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = tsv::Writer::create(path)?;
        w.comment("article_id\tsplit")?;
        for (id, s) in &self.assignment {
            w.row(&[id, s.as_str()])?;
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = tsv::Reader::open(path)?;
        let mut assignment = BTreeMap::new();
        while let Some(row) = r.next_row(2)? {
            let s = row.fields[1].parse().map_err(|_| r.error(row.line, "unknown split"))?;
            if assignment.insert(row.fields[0].clone(), s).is_some() {
                return Err(r.error(row.line, "duplicate article"));
            }
        }
        Ok(Self { assignment })
    }
}

/// Options for graph construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildConfig {
    pub vocab_size: usize,
    /// Articles with fewer tokens after preprocessing are excluded.
    pub min_tokens: usize,
    /// Fraction of candidate users kept by the top-N activity filter.
    pub top_fraction: f64,
    pub frequent_threshold: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            vocab_size: 5000,
            min_tokens: 25,
            top_fraction: 0.6,
            frequent_threshold: 0.30,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::Config(format!("top_fraction {} outside (0, 1]", self.top_fraction)));
        }
        if !(self.frequent_threshold > 0.0 && self.frequent_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "frequent_threshold {} outside (0, 1]",
                self.frequent_threshold
            )));
        }
        Ok(())
    }
}

/// One article after preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub article_id: String,
    pub label: Label,
    pub split: Split,
    pub tokens: Vec<String>,
}

/// Preprocessed corpus: documents that pass the length floor, their split
/// assignment, the vocabulary and the shares restricted to them.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub splits: SplitManifest,
    pub vocab: Vocabulary,
    pub shares: Vec<ShareRecord>,
    pub follows: Vec<FollowRecord>,
    position: HashMap<String, usize>,
}

impl Corpus {
    /// Tokenises, applies the length floor, splits (unless a manifest is
    /// given) and builds the vocabulary from train and validation documents.
    pub fn prepare(dataset: &Dataset, config: &BuildConfig, seed: u64, splits: Option<SplitManifest>) -> Result<Self> {
        config.validate()?;
        let mut kept = Vec::new();
        for a in &dataset.articles {
            let tokens = preprocess(&a.text);
            if tokens.len() >= config.min_tokens {
                kept.push((a, tokens));
            }
        }
        if kept.is_empty() {
            return Err(Error::Validation(format!(
                "no article has at least {} tokens",
                config.min_tokens
            )));
        }
        let splits = match splits {
            Some(s) => s,
            None => {
                let pairs: Vec<(&str, Label)> = kept.iter().map(|(a, _)| (a.article_id.as_str(), a.label)).collect();
                SplitManifest::stratified(&pairs, seed)
            }
        };
        let mut documents = Vec::with_capacity(kept.len());
        for (a, tokens) in kept {
            let split = splits
                .get(&a.article_id)
                .ok_or_else(|| Error::Validation(format!("article {:?} missing from split manifest", a.article_id)))?;
            documents.push(Document {
                article_id: a.article_id.clone(),
                label: a.label,
                split,
                tokens,
            });
        }
        let vocab = Vocabulary::build(
            documents
                .iter()
                .filter(|d| d.split != Split::Test)
                .map(|d| d.tokens.as_slice()),
            config.vocab_size,
        );
        let position: HashMap<String, usize> = documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.article_id.clone(), i))
            .collect();
        let shares = dataset
            .shares
            .iter()
            .filter(|s| position.contains_key(&s.article_id))
            .cloned()
            .collect();
        Ok(Self {
            documents,
            splits,
            vocab,
            shares,
            follows: dataset.follows.clone(),
            position,
        })
    }

    pub fn document(&self, article_id: &str) -> Option<&Document> {
        self.position.get(article_id).map(|&i| &self.documents[i])
    }

    /// Labels of train and validation documents (the graph's articles).
    pub fn graph_labels(&self) -> HashMap<&str, Label> {
        self.documents
            .iter()
            .filter(|d| d.split != Split::Test)
            .map(|d| (d.article_id.as_str(), d.label))
            .collect()
    }

    /// Labels of documents in one split.
    pub fn labels_in(&self, split: Split) -> HashMap<&str, Label> {
        self.documents
            .iter()
            .filter(|d| d.split == split)
            .map(|d| (d.article_id.as_str(), d.label))
            .collect()
    }

    /// Shares of train and validation documents.
    pub fn graph_shares(&self) -> Vec<ShareRecord> {
        let labels = self.graph_labels();
        self.shares
            .iter()
            .filter(|s| labels.contains_key(s.article_id.as_str()))
            .cloned()
            .collect()
    }

    /// Users with at least one train or validation share.
    pub fn candidate_users(&self) -> BTreeSet<String> {
        self.graph_shares().into_iter().map(|s| s.user_id).collect()
    }

    /// Number of users kept by the top-N filter for a given fraction.
    pub fn top_n(&self, fraction: f64) -> usize {
        ((fraction * self.candidate_users().len() as f64).ceil() as usize).max(1)
    }

    /// Users retained by the activity filters of `config`.
    pub fn select_users(&self, config: &BuildConfig) -> Result<BTreeSet<String>> {
        filter_users(
            &self.graph_shares(),
            &self.graph_labels(),
            self.top_n(config.top_fraction),
            config.frequent_threshold,
        )
    }

    /// Graph over `users` and the train/val articles they shared.
    pub fn assemble(&self, users: &BTreeSet<String>) -> Result<BuiltGraph> {
        if users.is_empty() {
            return Err(Error::Validation("no users retained".into()));
        }
        let labels = self.graph_labels();
        let mut sharers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for s in &self.shares {
            if users.contains(&s.user_id) && labels.contains_key(s.article_id.as_str()) {
                sharers.entry(s.article_id.as_str()).or_default().push(s.user_id.as_str());
            }
        }
        let mut dropped = Vec::new();
        let mut article_ids = Vec::new();
        for d in self.documents.iter().filter(|d| d.split != Split::Test) {
            if sharers.contains_key(d.article_id.as_str()) {
                article_ids.push(d.article_id.clone());
            } else {
                log::debug!("article {} has no retained sharer; dropped from the graph", d.article_id);
                dropped.push(d.article_id.clone());
            }
        }
        if !dropped.is_empty() {
            log::info!("{} train/val articles have no retained sharer and stay out of the graph", dropped.len());
        }
        let user_ids: Vec<String> = users.iter().cloned().collect();
        let user_node: HashMap<&str, usize> = user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let nu = user_ids.len();
        let bows: Vec<Vec<usize>> = article_ids
            .iter()
            .map(|id| article_bow(&self.document(id).expect("known article").tokens, &self.vocab))
            .collect();
        let mut edges = Vec::new();
        let mut user_articles: Vec<Vec<usize>> = vec![Vec::new(); nu];
        for (ai, id) in article_ids.iter().enumerate() {
            for u in &sharers[id.as_str()] {
                let un = user_node[u];
                user_articles[un].push(ai);
                edges.push(Edge {
                    a: un,
                    b: nu + ai,
                    relation: Relation::UserArticle,
                });
            }
        }
        for f in &self.follows {
            if let (Some(&a), Some(&b)) = (user_node.get(f.user_a.as_str()), user_node.get(f.user_b.as_str())) {
                edges.push(Edge {
                    a,
                    b,
                    relation: Relation::UserUser,
                });
            }
        }
        let mut rows = Vec::with_capacity(nu + article_ids.len());
        for (u, arts) in user_articles.iter().enumerate() {
            let sets: Vec<&[usize]> = arts.iter().map(|&a| bows[a].as_slice()).collect();
            let feats = user_features(&sets)
                .map_err(|_| Error::Validation(format!("user {} has no shares in the graph", user_ids[u])))?;
            rows.push(feats.into_iter().map(|j| (j, 1.0)).collect());
        }
        for b in &bows {
            rows.push(b.iter().map(|&j| (j, 1.0)).collect());
        }
        let features = Csr::from_rows(self.vocab.len().max(1), rows)?;
        let docs: Vec<&Document> = article_ids.iter().map(|id| self.document(id).expect("known")).collect();
        let graph = CommunityGraph::new(
            user_ids,
            article_ids,
            edges,
            features,
            docs.iter().map(|d| d.label).collect(),
            docs.iter().map(|d| d.split).collect(),
        )?;
        log::info!(
            "graph: {} users, {} articles, {} edges ({} share, {} follow)",
            graph.user_count(),
            graph.article_count(),
            graph.edge_count(),
            graph.relation_edge_count(Relation::UserArticle),
            graph.relation_edge_count(Relation::UserUser)
        );
        Ok(BuiltGraph { graph, dropped })
    }

    pub fn build(&self, config: &BuildConfig) -> Result<BuiltGraph> {
        self.assemble(&self.select_users(config)?)
    }

    /// Graph user nodes that shared each document (including test documents).
    pub fn article_users(&self, graph: &CommunityGraph) -> BTreeMap<String, Vec<usize>> {
        let node: HashMap<&str, usize> = graph
            .user_ids()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let mut out: BTreeMap<String, Vec<usize>> = self
            .documents
            .iter()
            .map(|d| (d.article_id.clone(), Vec::new()))
            .collect();
        for s in &self.shares {
            if let Some(&u) = node.get(s.user_id.as_str()) {
                out.get_mut(&s.article_id).expect("share of a kept document").push(u);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BuiltGraph {
    pub graph: CommunityGraph,
    /// Train/val articles with no retained sharer.
    pub dropped: Vec<String>,
}
