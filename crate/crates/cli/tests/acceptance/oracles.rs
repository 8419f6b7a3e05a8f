//! Layer forwards against dense brute-force oracles built from edge lists.

use std::collections::BTreeMap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use safer_core::autodiff::{Tape, Var};
use safer_core::gnn::layers::{
    gat_forward, gcn_forward, rgat_forward, rgcn_forward, sage_forward, AttentionPattern, HeadParams, LayerInput,
};
use safer_core::graph::normalize::{
    attention_pattern, mean_view, normalize_diagonal_enhanced, normalize_symmetric, relation_view, RelationFilter,
};
use safer_core::hyperbolic::layers::{hygat_forward, hygcn_forward, Activation, HyInput, HyLayerParams};
use safer_core::{rng, Relation, Tensor};

use crate::support::*;

const TRIALS: u64 = 60;
const EXACT_TOL: f64 = 1e-10;
const LIMIT_TOL: f64 = 1e-5;
const LIMIT_K: f64 = 1e-8;
const BUDGET: Duration = Duration::from_secs(30);

fn neighbours(adj: &[Vec<bool>], self_loops: bool) -> Vec<Vec<usize>> {
    adj.iter()
        .enumerate()
        .map(|(i, row)| (0..row.len()).filter(|&j| row[j] || (self_loops && i == j)).collect())
        .collect()
}

fn aggregate(nbrs: &[Vec<usize>], h: &Dense, coeff: impl Fn(usize, usize) -> f64) -> Dense {
    let cols = h[0].len();
    nbrs.iter()
        .enumerate()
        .map(|(i, ns)| (0..cols).map(|c| ns.iter().map(|&j| coeff(i, j) * h[j][c]).sum()).collect())
        .collect()
}

fn attend(nbrs: &[Vec<usize>], wh: &Dense, a_src: &[f64], a_dst: &[f64]) -> Dense {
    let cols = wh[0].len();
    nbrs.iter()
        .enumerate()
        .map(|(i, ns)| {
            if ns.is_empty() {
                return vec![0.0; cols];
            }
            let e: Vec<f64> = ns.iter().map(|&j| leaky(dot(a_src, &wh[i]) + dot(a_dst, &wh[j]))).collect();
            let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = w.iter().sum();
            (0..cols).map(|c| ns.iter().zip(&w).map(|(&j, wj)| wj / z * wh[j][c]).sum()).collect()
        })
        .collect()
}

fn map(d: Dense, f: impl Fn(f64) -> f64) -> Dense {
    d.into_iter().map(|r| r.into_iter().map(&f).collect()).collect()
}

fn add(a: Dense, b: &Dense) -> Dense {
    a.into_iter()
        .zip(b)
        .map(|(r, s)| r.into_iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

fn add_row(a: Dense, b: &[f64]) -> Dense {
    a.into_iter().map(|r| r.into_iter().zip(b).map(|(x, y)| x + y).collect()).collect()
}

struct Head {
    w: Dense,
    a_src: Dense,
    a_dst: Dense,
}

impl Head {
    fn random(rng: &mut safer_core::rng::Rng, d_in: usize, d_out: usize) -> Self {
        Head {
            w: random_dense(rng, d_in, d_out, 1.0),
            a_src: random_dense(rng, d_out, 1, 1.0),
            a_dst: random_dense(rng, d_out, 1, 1.0),
        }
    }

    fn bind<'t>(&self, tape: &'t Tape) -> HeadParams<'t> {
        HeadParams {
            w: tape.constant(tensor(&self.w)),
            a_src: tape.constant(tensor(&self.a_src)),
            a_dst: tape.constant(tensor(&self.a_dst)),
        }
    }

    fn oracle(&self, nbrs: &[Vec<usize>], x: &Dense) -> Dense {
        attend(nbrs, &matmul(x, &self.w), &column(&self.a_src), &column(&self.a_dst))
    }
}

fn concat(parts: Vec<Dense>) -> Dense {
    let n = parts[0].len();
    (0..n).map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect()).collect()
}

fn value(v: safer_core::Result<Var<'_>>) -> Tensor {
    (*v.expect("layer forward").value()).clone()
}

pub fn run() -> Result<String, String> {
    let start = Instant::now();
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, err: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(err);
    };
    for trial in 0..TRIALS {
        let mut rng = rng::derive(trial, "acceptance-oracles");
        let g = random_graph(&mut rng, 20, 5, false);
        let (f, h) = (5, 3);
        let adj = g.adjacency(None);
        let x = &g.x;
        let tape = Tape::new();
        let k = |d: &Dense| tape.constant(tensor(d));
        let inputs = [
            LayerInput::Dense(k(x)),
            LayerInput::Sparse(Rc::new(csr(x))),
        ];

        // GCN, both normalisations
        let w = random_dense(&mut rng, f, h, 1.0);
        let xw = matmul(x, &w);
        let with_self = neighbours(&adj, true);
        let deg: Vec<f64> = with_self.iter().map(|r| r.len() as f64).collect();
        let de = map(aggregate(&with_self, &xw, |i, _| 1.0 / deg[i]), relu);
        let sym = map(aggregate(&with_self, &xw, |i, j| 1.0 / (deg[i] * deg[j]).sqrt()), relu);
        let de_adj = Rc::new(normalize_diagonal_enhanced(&g.graph).unwrap().matrix);
        let sym_adj = Rc::new(normalize_symmetric(&g.graph, true).unwrap().matrix);
        for input in &inputs {
            note("gcn (diag-enhanced)", max_abs_diff(&de, &value(gcn_forward(&de_adj, input, k(&w)))));
            note("gcn (symmetric)", max_abs_diff(&sym, &value(gcn_forward(&sym_adj, input, k(&w)))));
        }

        // GAT, two heads concatenated
        let heads: Vec<Head> = (0..2).map(|_| Head::random(&mut rng, f, h)).collect();
        let gat = map(concat(heads.iter().map(|hd| hd.oracle(&with_self, x)).collect()), elu);
        let pattern = AttentionPattern::new(attention_pattern(&g.graph, RelationFilter::All, true).unwrap());
        let bound: Vec<HeadParams> = heads.iter().map(|hd| hd.bind(&tape)).collect();
        for input in &inputs {
            note("gat", max_abs_diff(&gat, &value(gat_forward(&pattern, input, &bound, 0.0, None))));
        }

        // GraphSAGE, mean aggregator
        let plain = neighbours(&adj, false);
        let (w1, w2) = (random_dense(&mut rng, f, h, 1.0), random_dense(&mut rng, f, h, 1.0));
        let mean = aggregate(&plain, &matmul(x, &w2), |i, _| 1.0 / plain[i].len() as f64);
        let sage: Dense = add(matmul(x, &w1), &mean)
            .into_iter()
            .map(|r| {
                let n = dot(&r, &r).sqrt();
                r.into_iter().map(|v| if n > 0.0 { v / n } else { 0.0 }).collect()
            })
            .collect();
        let mean_adj = Rc::new(mean_view(&g.graph).unwrap().matrix);
        for input in &inputs {
            note("sage", max_abs_diff(&sage, &value(sage_forward(&mean_adj, input, k(&w1), k(&w2)))));
        }

        // R-GCN and R-GAT over the two relations
        let rel_nbrs: Vec<Vec<Vec<usize>>> = Relation::ALL
            .iter()
            .map(|&r| neighbours(&g.adjacency(Some(r)), false))
            .collect();
        let w0 = random_dense(&mut rng, f, h, 1.0);
        let w_rel: Vec<Dense> = Relation::ALL.iter().map(|_| random_dense(&mut rng, f, h, 1.0)).collect();
        let mut rgcn = matmul(x, &w0);
        for (ns, wr) in rel_nbrs.iter().zip(&w_rel) {
            rgcn = add(rgcn, &aggregate(ns, &matmul(x, wr), |i, _| 1.0 / ns[i].len() as f64));
        }
        let rgcn = map(rgcn, relu);
        let views: Vec<Rc<_>> = Relation::ALL
            .iter()
            .map(|&r| Rc::new(relation_view(&g.graph, r).unwrap().matrix))
            .collect();
        let w_rel_vars: Vec<Var> = w_rel.iter().map(|w| k(w)).collect();
        for input in &inputs {
            note("rgcn", max_abs_diff(&rgcn, &value(rgcn_forward(&views, input, &w_rel_vars, k(&w0)))));
        }

        let rel_heads: Vec<Head> = Relation::ALL.iter().map(|_| Head::random(&mut rng, f, h)).collect();
        let mut rgat = matmul(x, &w0);
        for (ns, hd) in rel_nbrs.iter().zip(&rel_heads) {
            rgat = add(rgat, &hd.oracle(ns, x));
        }
        let rgat = map(rgat, elu);
        let patterns: Vec<AttentionPattern> = Relation::ALL
            .iter()
            .map(|&r| AttentionPattern::new(attention_pattern(&g.graph, RelationFilter::Only(r), false).unwrap()))
            .collect();
        let bound: Vec<HeadParams> = rel_heads.iter().map(|hd| hd.bind(&tape)).collect();
        for input in &inputs {
            note(
                "rgat",
                max_abs_diff(&rgat, &value(rgat_forward(&patterns, input, &bound, k(&w0), 0.0, None))),
            );
        }

        // Hy-GCN and Hy-GAT in the K -> 0 limit
        let (wh, b) = (random_dense(&mut rng, f, h, 1.0), random_dense(&mut rng, 1, h, 0.5));
        let t = add_row(matmul(x, &wh), &b[0]);
        let kv = tape.constant(Tensor::scalar(LIMIT_K));
        let p = HyLayerParams {
            w: k(&wh),
            bias: Some(k(&b)),
            k_in: kv,
            k_out: kv,
        };
        let hy_inputs = [
            HyInput::Ball(k(x)),
            HyInput::Euclidean {
                x: Rc::new(csr(x)),
                row_norms: Rc::new(Tensor::column(x.iter().map(|r| dot(r, r).sqrt()).collect())),
            },
        ];
        let hygcn = map(aggregate(&with_self, &t, |i, _| 1.0 / deg[i]), relu);
        let hd = Head::random(&mut rng, h, h);
        let hygat = map(attend(&with_self, &t, &column(&hd.a_src), &column(&hd.a_dst)), elu);
        let (a_src, a_dst) = (k(&hd.a_src), k(&hd.a_dst));
        for input in &hy_inputs {
            note(
                "hygcn (K->0)",
                max_abs_diff(&hygcn, &value(hygcn_forward(&de_adj, input, &p, Activation::Relu))),
            );
            note(
                "hygat (K->0)",
                max_abs_diff(
                    &hygat,
                    &value(hygat_forward(&pattern, input, &p, a_src, a_dst, Activation::Elu, 0.0, None)),
                ),
            );
        }
    }
    let elapsed = start.elapsed();
    let mut failures = Vec::new();
    let detail: Vec<String> = worst
        .iter()
        .map(|(name, &err)| {
            let tol = if name.contains("K->0") { LIMIT_TOL } else { EXACT_TOL };
            if !(err <= tol) {
                failures.push(format!("{name} error {err:.2e} > {tol:.0e}"));
            }
            format!("{name} {err:.1e}")
        })
        .collect();
    if elapsed > BUDGET {
        failures.push(format!("took {elapsed:.1?} (budget {BUDGET:?})"));
    }
    let summary = format!("{TRIALS} graphs <= 20 nodes in {elapsed:.1?}; max errors: {}", detail.join(", "));
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}
