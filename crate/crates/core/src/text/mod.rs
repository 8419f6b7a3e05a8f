//! CNN document encoder and the document-embedding interchange format.
//!
//! Token ids: `0` is padding (its embedding row is zero and frozen), `1` is
//! the unknown token, vocabulary index `j` maps to `j + 2`. Windows that run
//! into padding are masked out before max pooling, so a document's encoding
//! does not depend on the other documents in its batch.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::builder::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::gnn::layers::dropout;
use crate::graph::Split;
use crate::optim::{AdamConfig, Optimizer};
use crate::params::ParamStore;
use crate::pipeline::metrics::f1_fake;
use crate::rng::{self, Rng};
use crate::tensor::Tensor;
use crate::tsv;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const MASKED: f64 = -1e30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnTextConfig {
    pub embed_dim: usize,
    pub widths: Vec<usize>,
    pub filters: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for CnnTextConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            widths: vec![3, 4, 5],
            filters: 128,
            max_len: 512,
            dropout: 0.5,
        }
    }
}

impl CnnTextConfig {
    pub fn output_dim(&self) -> usize {
        self.widths.len() * self.filters
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.filters == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("text encoder dimensions must be positive".into()));
        }
        if self.max_width() > self.max_len {
            return Err(Error::Config(format!(
                "filter width {} exceeds max_len {}",
                self.max_width(),
                self.max_len
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("text dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextTrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub fake_weight: f64,
}

impl Default for TextTrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            weight_decay: 1e-3,
            max_epochs: 50,
            patience: 10,
            batch_size: 32,
            fake_weight: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Cnn,
    Imported,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DocumentEmbedding {
    pub article_id: String,
    pub vector: Vec<f64>,
    pub source: EmbeddingSource,
}

/// Token ids of a document, truncated to `max_len`.
pub fn token_ids(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> Vec<usize> {
    tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.get(t).map_or(UNK, |j| j + 2))
        .collect()
}

#[derive(Clone, Debug)]
pub struct TextCnn {
    pub config: CnnTextConfig,
    pub vocab_size: usize,
    pub params: ParamStore,
}

impl TextCnn {
    /// `vocab_size` counts the padding and unknown ids.
    pub fn new(config: CnnTextConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::Config("vocabulary must include the padding and unknown ids".into()));
        }
        let mut rng = rng::derive(seed, "text-init");
        let mut p = ParamStore::new();
        let mut emb = crate::params::glorot(vocab_size, config.embed_dim, &mut rng);
        emb.row_slice_mut(PAD).fill(0.0);
        let e = p.add("embedding", emb);
        p.freeze_rows(e, vec![PAD]);
        for &w in &config.widths {
            p.add_glorot(format!("conv{w}.k"), w * config.embed_dim, config.filters, &mut rng);
            p.add(format!("conv{w}.b"), Tensor::zeros(1, config.filters));
        }
        p.add_glorot("out.w", config.output_dim(), 1, &mut rng);
        p.add("out.b", Tensor::zeros(1, 1));
        Ok(Self {
            config,
            vocab_size,
            params: p,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    fn var<'t>(&self, bound: &[Var<'t>], name: &str) -> Var<'t> {
        bound[self.params.index(name).expect("parameter created in new")]
    }

    /// Encodings (`docs × d_t`): convolution, masked max over time, ReLU.
    pub fn encode<'t>(&self, bound: &[Var<'t>], docs: &[&[usize]]) -> Result<Var<'t>> {
        if docs.is_empty() {
            return Err(Error::Validation("no documents to encode".into()));
        }
        if let Some(i) = docs.iter().position(|d| d.is_empty()) {
            return Err(Error::Validation(format!("document {i} is empty")));
        }
        let c = &self.config;
        let lens: Vec<usize> = docs.iter().map(|d| d.len().min(c.max_len).max(c.max_width())).collect();
        let seq = *lens.iter().max().expect("nonempty");
        let mut ids = Vec::with_capacity(docs.len() * seq);
        for d in docs {
            let d = &d[..d.len().min(c.max_len)];
            if let Some(&bad) = d.iter().find(|&&t| t >= self.vocab_size) {
                return Err(Error::Validation(format!("token id {bad} outside vocabulary")));
            }
            ids.extend_from_slice(d);
            ids.extend(std::iter::repeat_n(PAD, seq - d.len()));
        }
        let tape = bound[0].tape();
        let x = self.var(bound, "embedding").gather_rows(Rc::new(ids))?;
        let mut maps = Vec::with_capacity(c.widths.len());
        for &w in &c.widths {
            let windows = seq - w + 1;
            let mask: Vec<f64> = lens
                .iter()
                .flat_map(|&len| (0..windows).map(move |t| if t + w <= len { 0.0 } else { MASKED }))
                .collect();
            let conv = x
                .unfold(seq, w)?
                .matmul(self.var(bound, &format!("conv{w}.k")))?
                .add(self.var(bound, &format!("conv{w}.b")))?
                .add(tape.constant(Tensor::column(mask)))?;
            maps.push(conv.segment_max(windows)?.relu());
        }
        Var::concat_cols(&maps)
    }

    /// Classification logits (`docs × 1`); dropout on the encoding when `rng` is given.
    pub fn logits<'t>(&self, bound: &[Var<'t>], docs: &[&[usize]], rng: Option<&mut Rng>) -> Result<Var<'t>> {
        let h = dropout(self.encode(bound, docs)?, self.config.dropout, rng)?;
        h.matmul(self.var(bound, "out.w"))?.add(self.var(bound, "out.b"))
    }

    /// Evaluation-mode encodings, in chunks of `batch`.
    pub fn embed_all(&self, docs: &[&[usize]], batch: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(batch.max(1)) {
            let tape = Tape::new();
            let bound = self.params.bind_frozen(&tape);
            let t = self.encode(&bound, chunk)?.value();
            out.extend(t.to_rows());
        }
        Ok(out)
    }

    /// Evaluation-mode fake probabilities.
    pub fn scores(&self, docs: &[&[usize]], batch: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(batch.max(1)) {
            let tape = Tape::new();
            let bound = self.params.bind_frozen(&tape);
            let z = self.logits(&bound, chunk, None)?.value();
            out.extend(z.data().iter().map(|&v| crate::autodiff::sigmoid(v)));
        }
        Ok(out)
    }
}

/// Result of [`train_text`].
#[derive(Clone, Debug)]
pub struct TrainedText {
    pub model: TextCnn,
    /// `s_t` for every document, keyed by article id.
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub best_val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Trains the CNN on the train split with early stopping on validation
/// fake-class F1 and returns encodings for all documents.
pub fn train_text(
    docs: &[Document],
    vocab: &Vocabulary,
    config: &CnnTextConfig,
    train: &TextTrainConfig,
    seed: u64,
) -> Result<TrainedText> {
    let ids: Vec<Vec<usize>> = docs.iter().map(|d| token_ids(&d.tokens, vocab, config.max_len)).collect();
    let in_split = |s: Split| -> Vec<usize> { (0..docs.len()).filter(|&i| docs[i].split == s).collect() };
    let train_idx = in_split(Split::Train);
    let val_idx = in_split(Split::Val);
    let fakes = train_idx.iter().filter(|&&i| docs[i].label.is_fake()).count();
    if fakes == 0 || fakes == train_idx.len() {
        return Err(Error::Validation("text training set has a single class".into()));
    }
    let mut model = TextCnn::new(config.clone(), vocab.len() + 2, seed)?;
    let mut opt = Optimizer::new(&model.params, AdamConfig::new(train.lr, train.weight_decay), None);
    let mut rng = rng::derive(seed, "text-train");
    let val_docs: Vec<&[usize]> = val_idx.iter().map(|&i| ids[i].as_slice()).collect();
    let val_labels: Vec<bool> = val_idx.iter().map(|&i| docs[i].label.is_fake()).collect();
    let mut best = (f64::NEG_INFINITY, 0usize, model.params.clone());
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut order = train_idx.clone();
    for epoch in 1..=train.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(train.batch_size.max(1)) {
            let tape = Tape::new();
            let bound = model.params.bind(&tape);
            let bdocs: Vec<&[usize]> = batch.iter().map(|&i| ids[i].as_slice()).collect();
            let labels: Vec<f64> = batch.iter().map(|&i| docs[i].label.as_f64()).collect();
            let loss = model
                .logits(&bound, &bdocs, Some(&mut rng))?
                .weighted_bce(&labels, train.fake_weight)?;
            let grads = tape.backward(loss)?;
            model.params.absorb(&grads, &bound)?;
            opt.step(&mut model.params)?;
        }
        let f1 = if val_docs.is_empty() {
            0.0
        } else {
            let preds: Vec<bool> = model.scores(&val_docs, 256)?.iter().map(|&p| p > 0.5).collect();
            f1_fake(&preds, &val_labels)?.f1
        };
        log::debug!("text epoch {epoch}: val F1 {f1:.4}");
        if f1 > best.0 {
            best = (f1, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train.patience {
                break;
            }
        }
    }
    model.params = best.2;
    let all: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
    let vectors = model.embed_all(&all, 256)?;
    let embeddings = docs.iter().map(|d| d.article_id.clone()).zip(vectors).collect();
    Ok(TrainedText {
        model,
        embeddings,
        best_val_f1: best.0.max(0.0),
        best_epoch: best.1,
        epochs_run,
    })
}

/// Writes `article_id<TAB>v_1<TAB>…<TAB>v_d` lines with round-trip float formatting.
pub fn export_embeddings(path: &Path, embeddings: &[DocumentEmbedding]) -> Result<()> {
    let mut w = tsv::Writer::create(path)?;
    for e in embeddings {
        let mut fields = vec![e.article_id.clone()];
        fields.extend(e.vector.iter().map(|v| format!("{v:?}")));
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        w.row(&refs)?;
    }
    w.finish()
}

/// Reads an embedding file. Every row must have the same dimension; when
/// `known` is given, every article id must be in it.
pub fn import_embeddings(path: &Path, known: Option<&BTreeSet<String>>) -> Result<Vec<DocumentEmbedding>> {
    let mut r = tsv::Reader::open(path)?;
    let mut out: Vec<DocumentEmbedding> = Vec::new();
    let mut seen = BTreeSet::new();
    while let Some(row) = r.next_raw()? {
        let mut fields = row.fields.into_iter();
        let id = fields.next().expect("split yields at least one field");
        if known.is_some_and(|k| !k.contains(&id)) {
            return Err(r.error(row.line, format!("unknown article id {id:?}")));
        }
        if !seen.insert(id.clone()) {
            return Err(r.error(row.line, format!("duplicate article id {id:?}")));
        }
        let vector = fields
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| r.error(row.line, "non-numeric or non-finite value"))?;
        if vector.is_empty() {
            return Err(r.error(row.line, "row has no values"));
        }
        if let Some(first) = out.first() {
            if first.vector.len() != vector.len() {
                return Err(r.error(
                    row.line,
                    format!("dimension {} differs from {}", vector.len(), first.vector.len()),
                ));
            }
        }
        out.push(DocumentEmbedding {
            article_id: id,
            vector,
            source: EmbeddingSource::Imported,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(widths: Vec<usize>, filters: usize, embed: usize) -> TextCnn {
        TextCnn::new(
            CnnTextConfig {
                embed_dim: embed,
                widths,
                filters,
                max_len: 512,
                dropout: 0.0,
            },
            12,
            3,
        )
        .unwrap()
    }

    fn encode(m: &TextCnn, docs: &[&[usize]]) -> Tensor {
        let tape = Tape::new();
        let bound = m.params.bind_frozen(&tape);
        (*m.encode(&bound, docs).unwrap().value()).clone()
    }

    #[test]
    fn output_dim_is_widths_times_filters() {
        let m = tiny(vec![3, 4, 5], 6, 4);
        let out = encode(&m, &[&[2, 3, 4, 5, 6, 7, 8], &[2, 3]]);
        assert_eq!(out.dims2(), (2, 18));
        assert_eq!(CnnTextConfig::default().output_dim(), 384);
    }

    #[test]
    fn constant_document_is_position_invariant() {
        let m = tiny(vec![2], 3, 4);
        let short = encode(&m, &[&[5, 5, 5]]);
        let long = encode(&m, &[&[5; 9]]);
        assert!(short.max_abs_diff(&long) < 1e-15);
    }

    #[test]
    fn width_one_is_permutation_invariant() {
        let m = tiny(vec![1], 5, 3);
        let a = encode(&m, &[&[2, 7, 9, 4]]);
        let b = encode(&m, &[&[9, 4, 2, 7]]);
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn batch_padding_does_not_leak() {
        let m = tiny(vec![3, 4], 4, 3);
        let alone = encode(&m, &[&[2, 3, 4, 5]]);
        let batched = encode(&m, &[&[2, 3, 4, 5], &[6; 20]]);
        assert_eq!(alone.row_slice(0), batched.row_slice(0));
    }

    #[test]
    fn hand_kernel_matches_window_oracle() {
        let mut m = tiny(vec![3], 1, 1);
        // embedding of id t is t; kernel sums the window
        let emb = m.params.index("embedding").unwrap();
        for t in 0..12 {
            m.params.get_mut(emb).set(t, 0, t as f64);
        }
        let k = m.params.index("conv3.k").unwrap();
        *m.params.get_mut(k) = Tensor::column(vec![1.0, -2.0, 1.0]);
        let doc = [2usize, 9, 3, 8, 4, 6];
        let oracle = doc
            .windows(3)
            .map(|w| w[0] as f64 - 2.0 * w[1] as f64 + w[2] as f64)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        assert_eq!(encode(&m, &[&doc]).item(), oracle);
    }

    #[test]
    fn empty_document_is_rejected() {
        let m = tiny(vec![2], 1, 2);
        let tape = Tape::new();
        let bound = m.params.bind_frozen(&tape);
        assert!(matches!(m.encode(&bound, &[&[]]), Err(Error::Validation(_))));
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.tsv");
        let e = vec![
            DocumentEmbedding {
                article_id: "a".into(),
                vector: vec![0.1, -1.0 / 3.0, 1e-300],
                source: EmbeddingSource::Cnn,
            },
            DocumentEmbedding {
                article_id: "b".into(),
                vector: vec![f64::MIN_POSITIVE, 2.5, -0.0],
                source: EmbeddingSource::Cnn,
            },
        ];
        export_embeddings(&p, &e).unwrap();
        let back = import_embeddings(&p, None).unwrap();
        for (x, y) in e.iter().zip(&back) {
            assert_eq!(x.article_id, y.article_id);
            assert_eq!(
                x.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                y.vector.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(y.source, EmbeddingSource::Imported);
        }

        std::fs::write(&p, "").unwrap();
        assert!(import_embeddings(&p, None).unwrap().is_empty());
        std::fs::write(&p, "a\t1\t2\nb\t1\n").unwrap();
        assert!(matches!(import_embeddings(&p, None), Err(Error::Load { line: 2, .. })));
        std::fs::write(&p, "zz\t1\n").unwrap();
        let known: BTreeSet<String> = ["a".to_string()].into();
        assert!(matches!(import_embeddings(&p, Some(&known)), Err(Error::Load { line: 1, .. })));
    }
}
