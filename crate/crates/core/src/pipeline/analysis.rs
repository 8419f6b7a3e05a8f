//! User typology, frequent-user ablation and the top-N sweep.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::builder::{frequent_users, share_counts, BuildConfig, Corpus, ShareRecord};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gnn::EncoderKind;
use crate::graph::Label;

use super::report::{EvalRecord, EvalReport};
use super::{run_safer, Context};

/// Counts of users sharing only real (a), only fake (b) or both (c) articles,
/// and the mean per-class share counts of type-(c) users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypologyReport {
    pub users: usize,
    pub type_a: usize,
    pub type_b: usize,
    pub type_c: usize,
    pub frac_a: f64,
    pub frac_b: f64,
    pub frac_c: f64,
    pub c_mean_fake_shares: f64,
    pub c_mean_real_shares: f64,
}

pub fn typology_report(shares: &[ShareRecord], labels: &HashMap<&str, Label>) -> TypologyReport {
    let counts = share_counts(shares, labels);
    let (mut a, mut b, mut c) = (0, 0, 0);
    let (mut cf, mut cr) = (0usize, 0usize);
    for &(f, r) in counts.values() {
        match (f > 0, r > 0) {
            (false, true) => a += 1,
            (true, false) => b += 1,
            (true, true) => {
                c += 1;
                cf += f;
                cr += r;
            }
            (false, false) => {}
        }
    }
    let n = counts.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let per_c = |k: usize| if c == 0 { 0.0 } else { k as f64 / c as f64 };
    TypologyReport {
        users: n,
        type_a: a,
        type_b: b,
        type_c: c,
        frac_a: frac(a),
        frac_b: frac(b),
        frac_c: frac(c),
        c_mean_fake_shares: per_c(cf),
        c_mean_real_shares: per_c(cr),
    }
}

pub fn threshold_label(t: f64) -> String {
    format!("excl>{}%", (t * 100.0 * 1000.0).round() / 1000.0)
}

/// Base retained users minus those above each threshold, with the relative
/// edge density `ρ` of the resulting graph against the base graph.
pub fn ablation_user_sets(
    corpus: &Corpus,
    build: &BuildConfig,
    thresholds: &[f64],
) -> Result<Vec<(f64, BTreeSet<String>)>> {
    let base = corpus.select_users(build)?;
    let labels = corpus.graph_labels();
    let counts = share_counts(&corpus.graph_shares(), &labels);
    let fake = labels.values().filter(|l| l.is_fake()).count();
    let sizes = (fake, labels.len() - fake);
    thresholds
        .iter()
        .map(|&t| {
            let frequent = frequent_users(&counts, sizes, t);
            let kept: BTreeSet<String> = base.difference(&frequent).cloned().collect();
            if kept.is_empty() {
                return Err(Error::Validation(format!("threshold {t} removes every user")));
            }
            Ok((t, kept))
        })
        .collect()
}

/// SAFER F1 per encoder and threshold, each record carrying `rho`.
pub fn ablate_frequent_users(
    corpus: &Corpus,
    cfg: &RunConfig,
    kinds: &[EncoderKind],
    thresholds: &[f64],
    text: &BTreeMap<u64, BTreeMap<String, Vec<f64>>>,
) -> Result<EvalReport> {
    let base_edges = corpus.build(&cfg.build)?.graph.edge_count().max(1);
    let mut report = EvalReport::default();
    for (t, users) in ablation_user_sets(corpus, &cfg.build, thresholds)? {
        let built = corpus.assemble(&users)?;
        let rho = built.graph.edge_count() as f64 / base_edges as f64;
        log::info!("{}: {} users, rho {rho:.3}", threshold_label(t), built.graph.user_count());
        let ctx = Context::new(corpus, &built.graph);
        for &kind in kinds {
            for &seed in &cfg.seeds {
                let run = run_safer(
                    &ctx,
                    &cfg.encoder_for(kind)?,
                    &cfg.train_for(kind)?,
                    &cfg.lr,
                    text.get(&seed).map(|m| m as _),
                    seed,
                )?;
                report.push(
                    EvalRecord::new("ablation", kind.as_str(), &threshold_label(t), seed, &run.fusion.test)
                        .with("rho", rho)
                        .with("threshold", t),
                );
            }
        }
    }
    Ok(report)
}

pub fn fraction_label(f: f64) -> String {
    format!("top{}%", (f * 100.0 * 1000.0).round() / 1000.0)
}

/// SAFER with the configured encoder over user-activity fractions; records
/// carry `val_f1`. Returns the report and the fraction with the best mean
/// validation F1 (ties to the larger fraction).
pub fn top_n_sweep(
    corpus: &Corpus,
    cfg: &RunConfig,
    fractions: &[f64],
    text: &BTreeMap<u64, BTreeMap<String, Vec<f64>>>,
) -> Result<(EvalReport, Option<f64>)> {
    let mut report = EvalReport::default();
    let mut curve = Vec::new();
    for &f in fractions {
        let build = BuildConfig {
            top_fraction: f,
            ..cfg.build.clone()
        };
        let built = corpus.build(&build)?;
        let ctx = Context::new(corpus, &built.graph);
        let mut vals = Vec::new();
        for &seed in &cfg.seeds {
            let run = run_safer(
                &ctx,
                &cfg.encoder,
                &cfg.train,
                &cfg.lr,
                text.get(&seed).map(|m| m as _),
                seed,
            )?;
            vals.push(run.fusion.val.f1);
            report.push(
                EvalRecord::new("sweep", "safer", &fraction_label(f), seed, &run.fusion.test)
                    .with("val_f1", run.fusion.val.f1)
                    .with("fraction", f)
                    .with("users", built.graph.user_count() as f64),
            );
        }
        curve.push((f, super::metrics::mean(&vals)));
    }
    Ok((report, select_fraction(&curve)))
}

/// Argmax of the validation curve; ties go to the larger fraction.
pub fn select_fraction(curve: &[(f64, f64)]) -> Option<f64> {
    curve
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn share(u: &str, a: &str) -> ShareRecord {
        ShareRecord {
            user_id: u.into(),
            article_id: a.into(),
        }
    }

    #[test]
    fn typology_cases() {
        let labels: HashMap<&str, Label> = [("r", Label::Real), ("f", Label::Fake), ("r2", Label::Real)].into();
        let t = typology_report(&[share("u", "r")], &labels);
        assert_eq!((t.frac_a, t.frac_b, t.frac_c), (1.0, 0.0, 0.0));

        // 10 users: 3 type a, 2 type b, 5 type c
        let mut s = Vec::new();
        for u in 0..3 {
            s.push(share(&format!("a{u}"), "r"));
        }
        for u in 0..2 {
            s.push(share(&format!("b{u}"), "f"));
        }
        for u in 0..5 {
            s.push(share(&format!("c{u}"), "f"));
            s.push(share(&format!("c{u}"), "r"));
            if u < 2 {
                s.push(share(&format!("c{u}"), "r2"));
            }
        }
        let t = typology_report(&s, &labels);
        assert_eq!((t.type_a, t.type_b, t.type_c, t.users), (3, 2, 5, 10));
        assert_eq!((t.frac_a, t.frac_b, t.frac_c), (0.3, 0.2, 0.5));
        assert_eq!((t.c_mean_fake_shares, t.c_mean_real_shares), (1.0, 7.0 / 5.0));
    }

    #[test]
    fn selection_prefers_larger_fraction_on_ties() {
        assert_eq!(select_fraction(&[(0.2, 0.8), (0.6, 0.9), (1.0, 0.9)]), Some(1.0));
        assert_eq!(select_fraction(&[(0.2, 0.95), (1.0, 0.9)]), Some(0.2));
        assert_eq!(select_fraction(&[]), None);
    }
}
