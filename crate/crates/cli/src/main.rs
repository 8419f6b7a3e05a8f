//! `safer`: one subcommand per pipeline stage.
//!
//! ```text
//! safer synth --out data/                     # synthetic dataset + typology report
//! safer build --out run/ --data data/         # splits, vocabulary, graph snapshot
//! safer train --out run/ --data data/         # checkpoints per seed
//! safer eval  --out run/ --data data/         # report.jsonl + table
//! safer ablate --out run/ --data data/        # ablation.jsonl + table
//! safer sweep --out run/ --data data/         # sweep.jsonl + table
//! ```
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or validation
//! error, 3 missing upstream artifact, 4 numeric failure. Log verbosity is
//! read from `SAFER_LOG` (default `info`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use safer_core::builder::synth::synth_generate;
use safer_core::builder::{Corpus, Dataset, SplitManifest, SPLITS_FILE, VOCAB_FILE};
use safer_core::config::RunConfig;
use safer_core::gnn::{EncoderConfig, EncoderKind, GnnEncoder};
use safer_core::graph::snapshot::{read_snapshot, write_snapshot};
use safer_core::graph::CommunityGraph;
use safer_core::params::ParamStore;
use safer_core::pipeline::analysis::{ablate_frequent_users, top_n_sweep, typology_report};
use safer_core::pipeline::baselines::randomize_article_features;
use safer_core::pipeline::{
    run_safer, run_social, run_text, text_features, user_embeddings, Context, EvalRecord, EvalReport,
    LrClassifier, TextFeatures,
};
use safer_core::text::{export_embeddings, import_embeddings, DocumentEmbedding, EmbeddingSource};
use safer_core::{Error, Result};

const MANIFEST_FILE: &str = "manifest.json";
const GRAPH_DIR: &str = "graph";
const REPORT_FILE: &str = "report.jsonl";
const ABLATION_FILE: &str = "ablation.jsonl";
const SWEEP_FILE: &str = "sweep.jsonl";
const TEXT_EMBEDDINGS_FILE: &str = "text_embeddings.tsv";

#[derive(Parser)]
#[command(name = "safer", version, about = "Community-graph fake news detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(Common),
    /// Split, featurise and build the community graph.
    Build(Common),
    /// Train graph, social and text encoders and the fusion classifiers.
    Train(Common),
    /// Evaluate trained checkpoints on the test split.
    Eval(Common),
    /// Frequent-user ablation.
    Ablate(Common),
    /// Sweep over the retained fraction of most active users.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory of this stage.
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory (defaults to --out).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Graph encoder kind, overriding the config.
    #[arg(long)]
    encoder: Option<EncoderKind>,
    /// Synthetic preset, overriding the config.
    #[arg(long)]
    preset: Option<String>,
}

impl Common {
    fn data_dir(&self) -> &Path {
        self.data.as_deref().unwrap_or(&self.out)
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.set_preset(p)?;
        }
        if let Some(k) = self.encoder {
            cfg.set_kind(k)?;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Artifacts written by each stage, keyed by stage name.
#[derive(Debug, Default, Serialize, Deserialize)]
struct RunManifest {
    config_hash: String,
    seeds: Vec<u64>,
    artifacts: BTreeMap<String, Vec<PathBuf>>,
    /// Unix seconds of each stage's last completion.
    timestamps: BTreeMap<String, u64>,
}

fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.canonical_json().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn record_stage(out: &Path, stage: &str, cfg: &RunConfig, artifacts: Vec<PathBuf>) -> Result<()> {
    if let Some(missing) = artifacts.iter().find(|p| !p.exists()) {
        return Err(Error::MissingArtifact(missing.clone()));
    }
    let path = out.join(MANIFEST_FILE);
    let mut manifest: RunManifest = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => RunManifest::default(),
    };
    manifest.config_hash = config_hash(cfg);
    manifest.seeds = cfg.seeds.clone();
    manifest.artifacts.insert(stage.to_string(), artifacts);
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    manifest.timestamps.insert(stage.to_string(), now);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serialises");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn split_seed(cfg: &RunConfig) -> u64 {
    cfg.seeds[0]
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn cmd_synth(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let seed = split_seed(&cfg);
    let generated = synth_generate(&cfg.synth, seed)?;
    create_dir(&args.out)?;
    generated.dataset.save(&args.out)?;
    let typology = typology_report(&generated.dataset.shares, &generated.dataset.labels());
    let mut types = BTreeMap::new();
    for (_, t) in &generated.user_types {
        *types.entry(format!("{t:?}").to_lowercase()).or_insert(0usize) += 1;
    }
    let report = serde_json::json!({
        "preset": cfg.preset,
        "seed": seed,
        "articles": generated.dataset.articles.len(),
        "shares": generated.dataset.shares.len(),
        "follows": generated.dataset.follows.len(),
        "generated_user_types": types,
        "typology": typology,
    });
    let report_path = args.out.join("synth_report.json");
    write_json(&report_path, &report)?;
    println!(
        "typology: a {:.2}%  b {:.2}%  c {:.2}%  ({} users)",
        100.0 * typology.frac_a,
        100.0 * typology.frac_b,
        100.0 * typology.frac_c,
        typology.users
    );
    let files = ["articles.tsv", "shares.tsv", "follows.tsv"].map(|f| args.out.join(f));
    record_stage(&args.out, "synth", &cfg, files.into_iter().chain([report_path]).collect())
}

/// Loads the dataset and the split manifest written by `build`.
fn load_corpus(args: &Common, cfg: &RunConfig) -> Result<Corpus> {
    let splits_path = args.out.join(SPLITS_FILE);
    if !splits_path.exists() {
        return Err(Error::MissingArtifact(splits_path));
    }
    let dataset = Dataset::load(args.data_dir())?;
    let splits = SplitManifest::load(&splits_path)?;
    Corpus::prepare(&dataset, &cfg.build, split_seed(cfg), Some(splits))
}

fn load_graph(args: &Common) -> Result<CommunityGraph> {
    let dir = args.out.join(GRAPH_DIR);
    if !dir.exists() {
        return Err(Error::MissingArtifact(dir));
    }
    read_snapshot(&dir)
}

fn cmd_build(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let dataset = Dataset::load(args.data_dir())?;
    let corpus = Corpus::prepare(&dataset, &cfg.build, split_seed(&cfg), None)?;
    let built = corpus.build(&cfg.build)?;
    create_dir(&args.out)?;
    let splits = args.out.join(SPLITS_FILE);
    let vocab = args.out.join(VOCAB_FILE);
    let graph_dir = args.out.join(GRAPH_DIR);
    corpus.splits.save(&splits)?;
    corpus.vocab.save(&vocab)?;
    write_snapshot(&built.graph, &graph_dir)?;
    let g = &built.graph;
    let report = serde_json::json!({
        "documents": corpus.documents.len(),
        "graph_users": g.user_count(),
        "graph_articles": g.node_count() - g.user_count(),
        "edges": g.edge_count(),
        "feature_dim": g.feature_dim(),
        "dropped_articles": built.dropped.len(),
    });
    let report_path = args.out.join("build_report.json");
    write_json(&report_path, &report)?;
    println!(
        "graph: {} users, {} articles, {} edges, {} features",
        g.user_count(),
        g.node_count() - g.user_count(),
        g.edge_count(),
        g.feature_dim()
    );
    record_stage(&args.out, "build", &cfg, vec![splits, vocab, graph_dir, report_path])
}

fn encoder_from(path: &Path, cfg: &EncoderConfig, input_dim: usize, seed: u64) -> Result<GnnEncoder> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut enc = GnnEncoder::new(cfg.clone(), input_dim, seed)?;
    enc.params.load_values_from(&ParamStore::load(path)?)?;
    Ok(enc)
}

fn embedding_rows(map: &BTreeMap<String, Vec<f64>>, source: EmbeddingSource) -> Vec<DocumentEmbedding> {
    map.iter()
        .map(|(id, v)| DocumentEmbedding {
            article_id: id.clone(),
            vector: v.clone(),
            source,
        })
        .collect()
}

fn read_text_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    Ok(import_embeddings(path, None)?
        .into_iter()
        .map(|e| (e.article_id, e.vector))
        .collect())
}

/// Text embeddings of `seed`: the file written by `train` when present, else trained now.
fn seed_text(args: &Common, cfg: &RunConfig, corpus: &Corpus, seed: u64) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = seed_dir(&args.out, seed).join(TEXT_EMBEDDINGS_FILE);
    if path.exists() {
        return read_text_embeddings(&path);
    }
    Ok(text_features(corpus, &cfg.text, seed)?.embeddings().clone())
}

fn cmd_train(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let corpus = load_corpus(args, &cfg)?;
    let graph = load_graph(args)?;
    let ctx = Context::new(&corpus, &graph);
    let kind = cfg.encoder.kind;
    let mut artifacts = Vec::new();
    for &seed in &cfg.seeds {
        log::info!("seed {seed}");
        let dir = seed_dir(&args.out, seed);
        create_dir(&dir)?;
        let text = text_features(&corpus, &cfg.text, seed)?;
        let emb_path = dir.join(TEXT_EMBEDDINGS_FILE);
        let source = match &text {
            TextFeatures::Cnn { model, .. } => {
                let p = dir.join("text.ckpt");
                model.params.save(&p)?;
                artifacts.push(p);
                EmbeddingSource::Cnn
            }
            TextFeatures::Imported(_) => EmbeddingSource::Imported,
        };
        export_embeddings(&emb_path, &embedding_rows(text.embeddings(), source))?;
        artifacts.push(emb_path);

        let safer = run_safer(&ctx, &cfg.encoder, &cfg.train, &cfg.lr, Some(text.embeddings()), seed)?;
        let p = dir.join(format!("{kind}.ckpt"));
        safer.trained.encoder.params.save(&p)?;
        artifacts.push(p);
        let p = dir.join(format!("lr-safer-{kind}.json"));
        write_json(&p, &safer.fusion.lr)?;
        artifacts.push(p);

        if cfg.baselines.social {
            let social = run_social(&corpus, &graph, &cfg.encoder, &cfg.train, &cfg.lr, seed)?;
            let p = dir.join(format!("social-{kind}.ckpt"));
            social.trained.encoder.params.save(&p)?;
            artifacts.push(p);
            let p = dir.join(format!("lr-social-{kind}.json"));
            write_json(&p, &social.fusion.lr)?;
            artifacts.push(p);
        }
        if cfg.baselines.text {
            let t = run_text(&ctx, text.embeddings(), &cfg.lr)?;
            let p = dir.join("lr-text.json");
            write_json(&p, &t.lr)?;
            artifacts.push(p);
        }
        println!("seed {seed}: trained {kind} (val F1 {:.4})", safer.fusion.val.f1);
    }
    record_stage(&args.out, "train", &cfg, artifacts)
}

fn cmd_eval(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let corpus = load_corpus(args, &cfg)?;
    let graph = load_graph(args)?;
    let ctx = Context::new(&corpus, &graph);
    let kind = cfg.encoder.kind;
    let test = safer_core::Split::Test;
    let mut report = EvalReport::default();
    for &seed in &cfg.seeds {
        let dir = seed_dir(&args.out, seed);
        let emb_path = dir.join(TEXT_EMBEDDINGS_FILE);
        if !emb_path.exists() {
            return Err(Error::MissingArtifact(emb_path));
        }
        let text = read_text_embeddings(&emb_path)?;
        let tag = if dir.join("text.ckpt").exists() { "cnn" } else { "imported" };

        let enc = encoder_from(&dir.join(format!("{kind}.ckpt")), &cfg.encoder, graph.feature_dim(), seed)?;
        let lr: LrClassifier = read_json(&dir.join(format!("lr-safer-{kind}.json")))?;
        let reps = ctx.representations(Some(&user_embeddings(&enc, &graph)?), Some(&text))?;
        report.push(EvalRecord::new("main", "safer", kind.as_str(), seed, &ctx.score(&lr, &reps, test)?));

        if cfg.baselines.social {
            let randomized = randomize_article_features(&graph, seed)?;
            let sctx = Context::new(&corpus, &randomized);
            let path = dir.join(format!("social-{kind}.ckpt"));
            let enc = encoder_from(&path, &cfg.encoder, randomized.feature_dim(), seed)?;
            let lr: LrClassifier = read_json(&dir.join(format!("lr-social-{kind}.json")))?;
            let reps = sctx.representations(Some(&user_embeddings(&enc, &randomized)?), None)?;
            report.push(EvalRecord::new("main", "social", kind.as_str(), seed, &sctx.score(&lr, &reps, test)?));
        }
        if cfg.baselines.text {
            let lr: LrClassifier = read_json(&dir.join("lr-text.json"))?;
            let reps = ctx.representations(None, Some(&text))?;
            report.push(EvalRecord::new("main", "text", tag, seed, &ctx.score(&lr, &reps, test)?));
        }
        if cfg.baselines.majority {
            report.push(EvalRecord::new("main", "majority", "-", seed, &ctx.majority()?));
        }
    }
    finish_report(args, &cfg, "eval", REPORT_FILE, &report)
}

fn finish_report(args: &Common, cfg: &RunConfig, stage: &str, file: &str, report: &EvalReport) -> Result<()> {
    let path = args.out.join(file);
    report.write_jsonl(&path)?;
    print!("{}", report.to_table());
    record_stage(&args.out, stage, cfg, vec![path])
}

fn text_by_seed(args: &Common, cfg: &RunConfig, corpus: &Corpus) -> Result<BTreeMap<u64, BTreeMap<String, Vec<f64>>>> {
    cfg.seeds
        .iter()
        .map(|&s| Ok((s, seed_text(args, cfg, corpus, s)?)))
        .collect()
}

fn cmd_ablate(args: &Common) -> Result<()> {
    let mut cfg = args.resolve()?;
    if let Some(k) = args.encoder {
        cfg.ablation.encoders = vec![k];
    }
    let corpus = load_corpus(args, &cfg)?;
    let text = text_by_seed(args, &cfg, &corpus)?;
    let report = ablate_frequent_users(&corpus, &cfg, &cfg.ablation.encoders, &cfg.ablation.thresholds, &text)?;
    finish_report(args, &cfg, "ablate", ABLATION_FILE, &report)
}

fn cmd_sweep(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let corpus = load_corpus(args, &cfg)?;
    let text = text_by_seed(args, &cfg, &corpus)?;
    let (report, best) = top_n_sweep(&corpus, &cfg, &cfg.sweep.fractions, &text)?;
    finish_report(args, &cfg, "sweep", SWEEP_FILE, &report)?;
    if let Some(f) = best {
        println!("selected fraction (best validation F1): {f}");
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Load { .. } => 2,
        Error::MissingArtifact(_) => 3,
        Error::Numeric(_) | Error::Manifold(_) | Error::ZeroDegree { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SAFER_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Build(a) => cmd_build(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
