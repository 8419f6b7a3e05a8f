//! Central-difference gradient checks for every trainable parameter of the
//! seven encoders, the text CNN and the logistic-regression objective.

use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::Rng as _;
use safer_core::autodiff::Tape;
use safer_core::gnn::{EncoderConfig, EncoderKind, GnnEncoder, GraphViews};
use safer_core::params::ParamStore;
use safer_core::pipeline::lr::{objective, LrConfig};
use safer_core::text::{CnnTextConfig, TextCnn};
use safer_core::{rng, NodeKind};

use crate::support::*;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;
const CURVATURE_TOL: f64 = 1e-3;
/// Gradients below this magnitude are compared on an absolute scale.
const FLOOR: f64 = 1e-6;
const BUDGET: Duration = Duration::from_secs(60);

#[derive(Default)]
struct Tally {
    checked: usize,
    worst: f64,
    worst_curvature: f64,
    failures: Vec<String>,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

type Loss<'a> = dyn Fn(&ParamStore, bool) -> (f64, Vec<Vec<f64>>) + 'a;

fn check_store(model: &str, params: &ParamStore, loss: &Loss<'_>, tally: &mut Tally) {
    let (_, analytic) = loss(params, true);
    let mut p = params.clone();
    for idx in 0..params.len() {
        let name = params.name(idx).to_string();
        let curvature = name.starts_with("kappa");
        for j in 0..params.get(idx).len() {
            let orig = p.get(idx).data()[j];
            p.get_mut(idx).data_mut()[j] = orig + STEP;
            let up = loss(&p, false).0;
            p.get_mut(idx).data_mut()[j] = orig - STEP;
            let down = loss(&p, false).0;
            p.get_mut(idx).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = rel_err(analytic[idx][j], numeric);
            tally.checked += 1;
            let tol = if curvature { CURVATURE_TOL } else { TOL };
            if curvature {
                tally.worst_curvature = tally.worst_curvature.max(err);
            } else {
                tally.worst = tally.worst.max(err);
            }
            if !(err < tol) && tally.failures.len() < 10 {
                tally.failures.push(format!(
                    "{model} {name}[{j}]: analytic {:.6e} numeric {numeric:.6e} rel {err:.2e}",
                    analytic[idx][j]
                ));
            }
        }
    }
}

fn check_encoder(kind: EncoderKind, seed: u64, tally: &mut Tally) {
    let mut rng = rng::derive(seed, "acceptance-gradcheck");
    let mut g = random_graph(&mut rng, 12, 4, true);
    // keep hyperbolic points well inside the ball so projections stay inactive
    if kind.is_hyperbolic() {
        g.x.iter_mut().flatten().for_each(|v| *v *= 0.4);
    }
    let graph = g.graph.with_features(csr(&g.x)).unwrap();
    let cfg = EncoderConfig {
        hidden: 3,
        heads: 2,
        relation_heads: 2,
        dropout: 0.0,
        attn_dropout: 0.0,
        node_mask: 0.0,
        init_curvature: 0.8,
        ..EncoderConfig::for_kind(kind)
    };
    let mut enc = GnnEncoder::new(cfg.clone(), 4, seed).unwrap();
    // move biases and ball offsets away from their zero initialisation
    for idx in 0..enc.params.len() {
        let name = enc.params.name(idx).to_string();
        if !name.starts_with("kappa") {
            let scale = if name.ends_with(".b") { 0.05 } else { 0.3 };
            for v in enc.params.get_mut(idx).data_mut() {
                *v += rng.random_range(-scale..scale);
            }
        }
    }
    let views = GraphViews::new(&graph, &cfg).unwrap();
    let features = Rc::new(graph.features().clone());
    let articles: Vec<usize> = (0..graph.node_count())
        .filter(|&n| graph.kind(n) == NodeKind::Article)
        .collect();
    let labels: Vec<f64> = graph.labels().iter().map(|l| l.as_f64()).collect();
    let articles = Rc::new(articles);
    let loss = |p: &ParamStore, want: bool| {
        let model = GnnEncoder {
            config: cfg.clone(),
            input_dim: 4,
            params: p.clone(),
        };
        let tape = Tape::new();
        let bound = model.params.bind(&tape);
        let emb = model.embed(&bound, &views, &features, None).unwrap();
        let logits = model
            .head(&bound, emb.gather_rows(Rc::clone(&articles)).unwrap(), None)
            .unwrap();
        let loss = logits.weighted_bce(&labels, 3.0).unwrap();
        let v = loss.value().item();
        if !want {
            return (v, Vec::new());
        }
        let grads = tape.backward(loss).unwrap();
        (v, bound.iter().map(|b| grads.get_or_zeros(*b)).collect())
    };
    check_store(kind.as_str(), &enc.params, &loss, tally);
}

fn check_cnn(tally: &mut Tally) {
    let cfg = CnnTextConfig {
        embed_dim: 4,
        widths: vec![2, 3],
        filters: 3,
        max_len: 16,
        dropout: 0.0,
    };
    let mut cnn = TextCnn::new(cfg.clone(), 12, 3).unwrap();
    let mut rng = rng::derive(3, "acceptance-gradcheck-cnn");
    for idx in 0..cnn.params.len() {
        if cnn.params.name(idx).ends_with(".b") {
            for v in cnn.params.get_mut(idx).data_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
    }
    let docs: Vec<Vec<usize>> = [1usize, 5, 9, 20]
        .iter()
        .map(|&len| (0..len).map(|_| rng.random_range(1..12)).collect())
        .collect();
    let docs: Vec<&[usize]> = docs.iter().map(Vec::as_slice).collect();
    let labels = [1.0, 0.0, 1.0, 0.0];
    let loss = |p: &ParamStore, want: bool| {
        let model = TextCnn {
            config: cfg.clone(),
            vocab_size: 12,
            params: p.clone(),
        };
        let tape = Tape::new();
        let bound = model.params.bind(&tape);
        let loss = model.logits(&bound, &docs, None).unwrap().weighted_bce(&labels, 3.0).unwrap();
        let v = loss.value().item();
        if !want {
            return (v, Vec::new());
        }
        let grads = tape.backward(loss).unwrap();
        (v, bound.iter().map(|b| grads.get_or_zeros(*b)).collect())
    };
    check_store("cnn", &cnn.params, &loss, tally);
}

fn check_lr(tally: &mut Tally) {
    let mut rng = rng::derive(5, "acceptance-gradcheck-lr");
    let x: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let y: Vec<bool> = (0..40).map(|_| rng.random::<bool>()).collect();
    let cfg = LrConfig {
        l2: 0.3,
        ..LrConfig::default()
    };
    let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grad) = objective(&x, &y, &theta, &cfg);
    for j in 0..theta.len() {
        let mut t = theta.clone();
        t[j] += STEP;
        let up = objective(&x, &y, &t, &cfg).0;
        t[j] -= 2.0 * STEP;
        let down = objective(&x, &y, &t, &cfg).0;
        let numeric = (up - down) / (2.0 * STEP);
        let err = rel_err(grad[j], numeric);
        tally.checked += 1;
        tally.worst = tally.worst.max(err);
        if !(err < TOL) {
            tally.failures.push(format!("lr theta[{j}]: analytic {:.6e} numeric {numeric:.6e}", grad[j]));
        }
    }
}

pub fn run() -> Result<String, String> {
    let start = Instant::now();
    let mut tally = Tally::default();
    for (i, kind) in EncoderKind::ALL.into_iter().enumerate() {
        for seed in 0..2 {
            check_encoder(kind, 100 + 10 * i as u64 + seed, &mut tally);
        }
    }
    check_cnn(&mut tally);
    check_lr(&mut tally);
    let elapsed = start.elapsed();
    if elapsed > BUDGET {
        tally.failures.push(format!("took {elapsed:.1?} (budget {BUDGET:?})"));
    }
    let summary = format!(
        "{} partials over 7 encoders + cnn + lr in {elapsed:.1?}; max rel err {:.1e} (curvature {:.1e})",
        tally.checked, tally.worst, tally.worst_curvature
    );
    if tally.failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", tally.failures.join("; ")))
    }
}
