//! Directional end-to-end reproduction on the synthetic presets and the
//! frequent-user ablation on the sparse preset.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use safer_core::builder::synth::synth_generate;
use safer_core::builder::Corpus;
use safer_core::config::RunConfig;
use safer_core::gnn::EncoderKind;
use safer_core::pipeline::analysis::{ablate_frequent_users, threshold_label};
use safer_core::pipeline::metrics::mean;
use safer_core::pipeline::{run_safer, run_social, run_text, text_features, Context};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const BUDGET: Duration = Duration::from_secs(300);
const MIN_SAFER_F1: f64 = 0.85;
const RELATIONAL_SLACK: f64 = 0.02;
/// Largest F1 increase between consecutive thresholds still read as flat.
const FLAT: f64 = 0.01;
const HYPERBOLIC_SLACK: f64 = 0.05;
const ABLATION_SEEDS: [u64; 3] = [1, 2, 3];
const ABLATION_DATA_SEED: u64 = 1;

fn ok<T>(r: safer_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn preset(name: &str) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    ok(cfg.set_preset(name))?;
    Ok(cfg)
}

fn corpus(cfg: &RunConfig, seed: u64) -> Result<Corpus, String> {
    let out = ok(synth_generate(&cfg.synth, seed))?;
    ok(Corpus::prepare(&out.dataset, &cfg.build, seed, None))
}

struct SeedScores {
    safer_gcn: f64,
    safer_rgcn: f64,
    social: f64,
    text: f64,
    health_social: f64,
}

fn seed_scores(gossip: &RunConfig, health: &RunConfig, seed: u64) -> Result<SeedScores, String> {
    let (gcn, rgcn) = (EncoderKind::Gcn, EncoderKind::Rgcn);
    let corpus_g = corpus(gossip, seed)?;
    let built = ok(corpus_g.build(&gossip.build))?;
    let ctx = Context::new(&corpus_g, &built.graph);
    let text = ok(text_features(&corpus_g, &gossip.text, seed))?;
    let safer = |kind| -> Result<f64, String> {
        let run = ok(run_safer(
            &ctx,
            &ok(gossip.encoder_for(kind))?,
            &ok(gossip.train_for(kind))?,
            &gossip.lr,
            Some(text.embeddings()),
            seed,
        ))?;
        Ok(run.fusion.test.f1)
    };
    let social = |cfg: &RunConfig, corpus: &Corpus| -> Result<f64, String> {
        let built = ok(corpus.build(&cfg.build))?;
        let run = ok(run_social(
            corpus,
            &built.graph,
            &ok(cfg.encoder_for(gcn))?,
            &ok(cfg.train_for(gcn))?,
            &cfg.lr,
            seed,
        ))?;
        Ok(run.fusion.test.f1)
    };
    let corpus_h = corpus(health, seed)?;
    Ok(SeedScores {
        safer_gcn: safer(gcn)?,
        safer_rgcn: safer(rgcn)?,
        social: social(gossip, &corpus_g)?,
        text: ok(run_text(&ctx, text.embeddings(), &gossip.lr))?.test.f1,
        health_social: social(health, &corpus_h)?,
    })
}

/// Criterion 5: orderings on 5-seed means of the GossipCop-like and
/// HealthStory-like presets.
pub fn directional() -> Result<String, String> {
    let start = Instant::now();
    let gossip = preset("gossipcop-like")?;
    let health = preset("healthstory-like")?;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let s = seed_scores(&gossip, &health, seed)?;
        eprintln!(
            "    seed {seed}: safer(gcn) {:.4} safer(rgcn) {:.4} social {:.4} text {:.4} | healthstory social {:.4}",
            s.safer_gcn, s.safer_rgcn, s.social, s.text, s.health_social
        );
        rows.push(s);
    }
    let m = |f: fn(&SeedScores) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
    let (gcn, rgcn, social, text, health_social) = (
        m(|s| s.safer_gcn),
        m(|s| s.safer_rgcn),
        m(|s| s.social),
        m(|s| s.text),
        m(|s| s.health_social),
    );
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    if !(gcn >= social && social >= text) {
        failures.push(format!("(a) ordering safer {gcn:.4} >= social {social:.4} >= text {text:.4} violated"));
    }
    if !(gcn >= MIN_SAFER_F1) {
        failures.push(format!("(a) safer(gcn) {gcn:.4} < {MIN_SAFER_F1}"));
    }
    if !(health_social < social) {
        failures.push(format!("(b) healthstory graph-only {health_social:.4} not below {social:.4}"));
    }
    if !(rgcn >= gcn - RELATIONAL_SLACK) {
        failures.push(format!("(c) safer(rgcn) {rgcn:.4} < safer(gcn) {gcn:.4} - {RELATIONAL_SLACK}"));
    }
    if elapsed > BUDGET {
        failures.push(format!("took {elapsed:.1?} (budget {BUDGET:?})"));
    }
    let summary = format!(
        "5-seed means: safer(gcn) {gcn:.4}, safer(rgcn) {rgcn:.4}, social {social:.4}, text {text:.4}; \
         healthstory social {health_social:.4}; {elapsed:.1?}"
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}

/// Criterion 6: ρ and F1 trends as the frequent-user threshold tightens.
pub fn ablation() -> Result<String, String> {
    let start = Instant::now();
    let mut cfg = preset("sparse")?;
    cfg.seeds = ABLATION_SEEDS.to_vec();
    let thresholds = [0.10, 0.05, 0.01];
    let kinds = [EncoderKind::Rgcn, EncoderKind::Rgat, EncoderKind::Hygcn, EncoderKind::Hygat];
    let corpus = corpus(&cfg, ABLATION_DATA_SEED)?;
    let mut text = BTreeMap::new();
    for &seed in &cfg.seeds {
        text.insert(seed, ok(text_features(&corpus, &cfg.text, seed))?.embeddings().clone());
    }
    let report = ok(ablate_frequent_users(&corpus, &cfg, &kinds, &thresholds, &text))?;
    let mut failures = Vec::new();

    let rho: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let label = threshold_label(t);
            report
                .records
                .iter()
                .find(|r| r.setting == label)
                .and_then(|r| r.extra.get("rho").copied())
                .unwrap_or(f64::NAN)
        })
        .collect();
    if !rho.windows(2).all(|w| w[1] <= w[0]) {
        failures.push(format!("rho not nonincreasing: {rho:?}"));
    }

    let mut drops = BTreeMap::new();
    let mut table = Vec::new();
    for kind in kinds {
        let f1: Vec<f64> = thresholds
            .iter()
            .map(|&t| report.mean_f1("ablation", kind.as_str(), &threshold_label(t)).unwrap_or(f64::NAN))
            .collect();
        if !f1.windows(2).all(|w| w[1] <= w[0] + FLAT) {
            failures.push(format!("{} F1 rises as the threshold tightens: {f1:.4?}", kind.as_str()));
        }
        drops.insert(kind, f1[0] - f1[2]);
        table.push(format!("{} {:.4}/{:.4}/{:.4}", kind.as_str(), f1[0], f1[1], f1[2]));
    }
    let group = |hyperbolic: bool| {
        mean(&drops.iter().filter(|(k, _)| k.is_hyperbolic() == hyperbolic).map(|(_, d)| *d).collect::<Vec<_>>())
    };
    let (hyper, relational) = (group(true), group(false));
    if !(hyper <= relational + HYPERBOLIC_SLACK) {
        failures.push(format!(
            "hyperbolic drop {hyper:.4} > relational drop {relational:.4} + {HYPERBOLIC_SLACK}"
        ));
    }
    let summary = format!(
        "rho {:.3}/{:.3}/{:.3}; F1 at 10%/5%/1%: {}; mean drop hyperbolic {hyper:.4} vs relational {relational:.4}; {:.1?}",
        rho[0],
        rho[1],
        rho[2],
        table.join(", "),
        start.elapsed()
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}
