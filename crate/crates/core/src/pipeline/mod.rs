//! Two-phase training, fusion, baselines, metrics and analyses.
//!
//! Training phase: a graph encoder is trained on the community graph, a text
//! encoder on the article texts, independently and on the same split. Each
//! article is then represented by `s_safer = s_g ⊕ s_t`, where `s_g` is the
//! mean embedding of the graph users who shared it (zero when there are none)
//! and `s_t` its text encoding; a logistic regression is fit on the train
//! split and scored on the test split.

pub mod analysis;
pub mod baselines;
pub mod lr;
pub mod metrics;
pub mod report;
pub mod train;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::builder::{preprocess, Corpus, Vocabulary};
use crate::config::{RunConfig, TextSection};
use crate::error::{Error, Result};
use crate::gnn::EncoderConfig;
use crate::graph::{CommunityGraph, Split};
use crate::tensor::Tensor;
use crate::text::{import_embeddings, token_ids, train_text, TextCnn};

pub use lr::{LrClassifier, LrConfig};
pub use metrics::{f1_fake, paired_t_test, F1Score};
pub use report::{EvalRecord, EvalReport};
pub use train::{aggregate, train_graph_encoder, user_embeddings, TrainConfig, TrainedEncoder};

/// Fused representation of one article.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaferRepresentation {
    pub article_id: String,
    pub s_g: Vec<f64>,
    pub s_t: Vec<f64>,
    /// Number of graph users who shared the article.
    pub m: usize,
}

impl SaferRepresentation {
    pub fn s_safer(&self) -> Vec<f64> {
        let mut v = self.s_g.clone();
        v.extend_from_slice(&self.s_t);
        v
    }

    pub fn text_only_fallback(&self) -> bool {
        self.m == 0
    }
}

/// Corpus, graph and the graph users of every document.
pub struct Context<'a> {
    pub corpus: &'a Corpus,
    pub graph: &'a CommunityGraph,
    pub article_users: BTreeMap<String, Vec<usize>>,
}

impl<'a> Context<'a> {
    pub fn new(corpus: &'a Corpus, graph: &'a CommunityGraph) -> Self {
        Self {
            corpus,
            graph,
            article_users: corpus.article_users(graph),
        }
    }

    /// Representations of every document; a missing half is left empty.
    pub fn representations(
        &self,
        users: Option<&Tensor>,
        text: Option<&BTreeMap<String, Vec<f64>>>,
    ) -> Result<Vec<SaferRepresentation>> {
        self.corpus
            .documents
            .iter()
            .map(|d| {
                let u = &self.article_users[&d.article_id];
                let s_t = match text {
                    None => Vec::new(),
                    Some(t) => t
                        .get(&d.article_id)
                        .cloned()
                        .ok_or_else(|| Error::Validation(format!("no text embedding for {}", d.article_id)))?,
                };
                Ok(SaferRepresentation {
                    article_id: d.article_id.clone(),
                    s_g: users.map(|e| aggregate(e, u)).unwrap_or_default(),
                    s_t,
                    m: u.len(),
                })
            })
            .collect()
    }

    fn split_rows(&self, reps: &[SaferRepresentation], split: Split) -> (Vec<Vec<f64>>, Vec<bool>) {
        self.corpus
            .documents
            .iter()
            .zip(reps)
            .filter(|(d, _)| d.split == split)
            .map(|(d, r)| (r.s_safer(), d.label.is_fake()))
            .unzip()
    }

    /// Fits the LR on train representations; scores validation and test.
    /// With an `l2_grid`, the strength with the best validation F1 is kept
    /// (ties go to the stronger penalty).
    pub fn fuse(&self, reps: &[SaferRepresentation], config: &LrConfig) -> Result<Fusion> {
        let (x, y) = self.split_rows(reps, Split::Train);
        let grid = if config.l2_grid.is_empty() { vec![config.l2] } else { config.l2_grid.clone() };
        let mut best: Option<(LrClassifier, F1Score)> = None;
        for l2 in grid {
            let lr = LrClassifier::fit(&x, &y, &LrConfig { l2, ..config.clone() })?;
            let val = self.score(&lr, reps, Split::Val)?;
            let better = best
                .as_ref()
                .is_none_or(|(b, v)| val.f1 > v.f1 || (val.f1 == v.f1 && lr.l2 > b.l2));
            if better {
                best = Some((lr, val));
            }
        }
        let (lr, val) = best.expect("grid is non-empty");
        let test = self.score(&lr, reps, Split::Test)?;
        Ok(Fusion { lr, val, test })
    }

    pub fn score(&self, lr: &LrClassifier, reps: &[SaferRepresentation], split: Split) -> Result<F1Score> {
        let (x, y) = self.split_rows(reps, split);
        if x.is_empty() {
            return Ok(F1Score {
                tp: 0,
                fp: 0,
                fn_: 0,
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            });
        }
        let preds: Vec<bool> = x.iter().map(|r| lr.predict(r)).collect();
        f1_fake(&preds, &y)
    }

    /// Majority-sharing predictions on the test split from train-split histories.
    pub fn majority(&self) -> Result<F1Score> {
        let history = self.corpus.labels_in(Split::Train);
        let counts = baselines::historical_counts(&self.corpus.shares, &history);
        let mut sharers: HashMap<&str, Vec<&str>> = HashMap::new();
        for s in &self.corpus.shares {
            sharers.entry(s.article_id.as_str()).or_default().push(s.user_id.as_str());
        }
        let test: Vec<_> = self.corpus.documents.iter().filter(|d| d.split == Split::Test).collect();
        let users: Vec<Vec<&str>> = test
            .iter()
            .map(|d| sharers.get(d.article_id.as_str()).cloned().unwrap_or_default())
            .collect();
        let preds = baselines::majority_baseline(&users, &counts);
        let labels: Vec<bool> = test.iter().map(|d| d.label.is_fake()).collect();
        f1_fake(&preds, &labels)
    }
}

#[derive(Clone, Debug)]
pub struct Fusion {
    pub lr: LrClassifier,
    pub val: F1Score,
    pub test: F1Score,
}

/// Where the text features come from.
#[derive(Clone, Debug)]
pub enum TextFeatures {
    Cnn { model: TextCnn, embeddings: BTreeMap<String, Vec<f64>> },
    Imported(BTreeMap<String, Vec<f64>>),
}

impl TextFeatures {
    pub fn embeddings(&self) -> &BTreeMap<String, Vec<f64>> {
        match self {
            TextFeatures::Cnn { embeddings, .. } | TextFeatures::Imported(embeddings) => embeddings,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            TextFeatures::Cnn { .. } => "cnn",
            TextFeatures::Imported(_) => "imported",
        }
    }
}

/// Imported embeddings when configured and non-empty, otherwise a trained CNN.
pub fn text_features(corpus: &Corpus, section: &TextSection, seed: u64) -> Result<TextFeatures> {
    if let Some(path) = &section.embeddings {
        let known: BTreeSet<String> = corpus.documents.iter().map(|d| d.article_id.clone()).collect();
        let imported = import_embeddings(path, Some(&known))?;
        if !imported.is_empty() {
            let map: BTreeMap<String, Vec<f64>> = imported.into_iter().map(|e| (e.article_id, e.vector)).collect();
            if let Some(missing) = known.iter().find(|id| !map.contains_key(*id)) {
                return Err(Error::Validation(format!("imported embeddings lack article {missing}")));
            }
            return Ok(TextFeatures::Imported(map));
        }
        log::info!("embedding file is empty; training the CNN encoder");
    }
    let t = train_text(&corpus.documents, &corpus.vocab, &section.model, &section.train, seed)?;
    log::info!("text encoder: val F1 {:.4} at epoch {}", t.best_val_f1, t.best_epoch);
    Ok(TextFeatures::Cnn {
        model: t.model,
        embeddings: t.embeddings,
    })
}

/// Graph encoder, user embeddings and fused LR for one encoder config.
pub struct SaferRun {
    pub trained: TrainedEncoder,
    pub users: Tensor,
    pub fusion: Fusion,
}

pub fn run_safer(
    ctx: &Context<'_>,
    encoder: &EncoderConfig,
    train: &TrainConfig,
    lr: &LrConfig,
    text: Option<&BTreeMap<String, Vec<f64>>>,
    seed: u64,
) -> Result<SaferRun> {
    let trained = train_graph_encoder(ctx.graph, encoder, train, seed)?;
    log::info!(
        "{}: val F1 {:.4} at epoch {} of {}",
        encoder.kind,
        trained.best_val_f1,
        trained.best_epoch,
        trained.epochs_run
    );
    let users = user_embeddings(&trained.encoder, ctx.graph)?;
    let reps = ctx.representations(Some(&users), text)?;
    let fusion = ctx.fuse(&reps, lr)?;
    Ok(SaferRun { trained, users, fusion })
}

/// Social baseline: article features randomised, LR on `s_g` alone.
pub fn run_social(
    corpus: &Corpus,
    graph: &CommunityGraph,
    encoder: &EncoderConfig,
    train: &TrainConfig,
    lr: &LrConfig,
    seed: u64,
) -> Result<SaferRun> {
    let randomized = baselines::randomize_article_features(graph, seed)?;
    let ctx = Context::new(corpus, &randomized);
    run_safer(&ctx, encoder, train, lr, None, seed)
}

/// Text-only baseline: LR on `s_t` alone.
pub fn run_text(ctx: &Context<'_>, text: &BTreeMap<String, Vec<f64>>, lr: &LrConfig) -> Result<Fusion> {
    let reps = ctx.representations(None, Some(text))?;
    ctx.fuse(&reps, lr)
}

/// SAFER for the primary encoder plus the enabled baselines, for one seed.
pub fn run_seed(corpus: &Corpus, graph: &CommunityGraph, cfg: &RunConfig, seed: u64) -> Result<EvalReport> {
    let ctx = Context::new(corpus, graph);
    let text = text_features(corpus, &cfg.text, seed)?;
    let kind = cfg.encoder.kind.as_str();
    let mut report = EvalReport::default();
    let safer = run_safer(&ctx, &cfg.encoder, &cfg.train, &cfg.lr, Some(text.embeddings()), seed)?;
    report.push(
        EvalRecord::new("main", "safer", kind, seed, &safer.fusion.test).with("val_f1", safer.fusion.val.f1),
    );
    if cfg.baselines.social {
        let social = run_social(corpus, graph, &cfg.encoder, &cfg.train, &cfg.lr, seed)?;
        report.push(
            EvalRecord::new("main", "social", kind, seed, &social.fusion.test).with("val_f1", social.fusion.val.f1),
        );
    }
    if cfg.baselines.text {
        let t = run_text(&ctx, text.embeddings(), &cfg.lr)?;
        report.push(EvalRecord::new("main", "text", text.tag(), seed, &t.test).with("val_f1", t.val.f1));
    }
    if cfg.baselines.majority {
        report.push(EvalRecord::new("main", "majority", "-", seed, &ctx.majority()?));
    }
    Ok(report)
}

/// Trained components needed to classify an unseen article.
#[derive(Clone, Debug)]
pub struct SaferModel {
    pub user_index: HashMap<String, usize>,
    pub user_embeddings: Tensor,
    pub text: Option<(TextCnn, Vocabulary)>,
    pub lr: LrClassifier,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub fake: bool,
    pub score: f64,
    pub known_users: usize,
}

impl SaferModel {
    /// Classifies from a precomputed `s_t` and the sharers' user ids.
    pub fn predict_with_text_features(&self, s_t: &[f64], users: &[&str]) -> Result<Prediction> {
        let rows: Vec<usize> = users.iter().filter_map(|u| self.user_index.get(*u).copied()).collect();
        let mut x = aggregate(&self.user_embeddings, &rows);
        x.extend_from_slice(s_t);
        if x.len() != self.lr.weights.len() {
            return Err(Error::dim("predict", &[x.len()], &[self.lr.weights.len()]));
        }
        let score = self.lr.score(&x);
        Ok(Prediction {
            fake: score > 0.5,
            score,
            known_users: rows.len(),
        })
    }

    /// Classifies raw article text shared by `users`.
    pub fn predict(&self, text: &str, users: &[&str]) -> Result<Prediction> {
        let (cnn, vocab) = self
            .text
            .as_ref()
            .ok_or_else(|| Error::Config("no text encoder loaded".into()))?;
        let mut ids = token_ids(&preprocess(text), vocab, cnn.config.max_len);
        if ids.is_empty() {
            ids.push(crate::text::UNK);
        }
        let s_t = cnn.embed_all(&[&ids], 1)?.pop().expect("one document");
        self.predict_with_text_features(&s_t, users)
    }
}
