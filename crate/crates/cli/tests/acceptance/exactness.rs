//! Metrics, baselines, aggregation and adjacency normalisation against
//! brute-force oracles in exact rational arithmetic.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng as _;
use safer_core::builder::ShareRecord;
use safer_core::graph::normalize::{mean_view, normalize_diagonal_enhanced, normalize_symmetric, relation_view};
use safer_core::graph::Label;
use safer_core::pipeline::analysis::typology_report;
use safer_core::pipeline::baselines::majority_baseline;
use safer_core::pipeline::{aggregate, f1_fake};
use safer_core::rng::{self, Rng};
use safer_core::{Csr, Relation, Tensor};

use crate::support::random_graph;

/// Reduced fraction with a positive denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    fn new(num: i128, den: i128) -> Self {
        assert!(den != 0);
        let g = gcd(num, den).max(1) * den.signum();
        Ratio { num: num / g, den: den / g }
    }

    /// Zero for an empty denominator, as the metrics define it.
    fn or_zero(num: i128, den: i128) -> Self {
        if den == 0 {
            Ratio::new(0, 1)
        } else {
            Ratio::new(num, den)
        }
    }

    /// Correctly rounded; exact inputs below 2^53 convert without loss.
    fn to_f64(self) -> f64 {
        assert!(self.num.abs() < 1 << 53 && self.den < 1 << 53);
        self.num as f64 / self.den as f64
    }

    fn gt(self, other: Ratio) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Check {
    cases: usize,
    failures: Vec<String>,
}

impl Check {
    fn expect(&mut self, what: &str, got: f64, want: Ratio) {
        self.cases += 1;
        if got.to_bits() != want.to_f64().to_bits() && self.failures.len() < 10 {
            self.failures.push(format!("{what}: got {got:?}, want {}/{}", want.num, want.den));
        }
    }

    fn expect_eq<T: PartialEq + std::fmt::Debug>(&mut self, what: &str, got: T, want: T) {
        self.cases += 1;
        if got != want && self.failures.len() < 10 {
            self.failures.push(format!("{what}: got {got:?}, want {want:?}"));
        }
    }
}

fn f1_suite(rng: &mut Rng, c: &mut Check) {
    let hand: [(&[bool], &[bool], (i128, i128), (i128, i128), (i128, i128)); 4] = [
        (&[true, true, false, false], &[true, false, true, false], (1, 2), (1, 2), (1, 2)),
        (&[true, true, true], &[true, true, false], (2, 3), (1, 1), (4, 5)),
        (&[false, false], &[true, false], (0, 1), (0, 1), (0, 1)),
        (&[false, false], &[false, false], (0, 1), (0, 1), (0, 1)),
    ];
    for (p, y, prec, rec, f1) in hand {
        let s = f1_fake(p, y).unwrap();
        c.expect("hand precision", s.precision, Ratio::new(prec.0, prec.1));
        c.expect("hand recall", s.recall, Ratio::new(rec.0, rec.1));
        c.expect("hand f1", s.f1, Ratio::new(f1.0, f1.1));
    }
    for _ in 0..2000 {
        let n = rng.random_range(1..300);
        let bias = rng.random_range(0.0..1.0);
        let p: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < bias).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
        let (mut tp, mut fp, mut fn_) = (0i128, 0i128, 0i128);
        for i in 0..n {
            tp += (p[i] && y[i]) as i128;
            fp += (p[i] && !y[i]) as i128;
            fn_ += (!p[i] && y[i]) as i128;
        }
        let s = f1_fake(&p, &y).unwrap();
        c.expect_eq("confusion", (s.tp, s.fp, s.fn_), (tp as usize, fp as usize, fn_ as usize));
        c.expect("precision", s.precision, Ratio::or_zero(tp, tp + fp));
        c.expect("recall", s.recall, Ratio::or_zero(tp, tp + fn_));
        c.expect("f1", s.f1, Ratio::or_zero(2 * tp, 2 * tp + fp + fn_));
    }
}

fn majority_suite(rng: &mut Rng, c: &mut Check) {
    for _ in 0..500 {
        let users = rng.random_range(1..40);
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for u in 0..users {
            if rng.random::<f64>() < 0.8 {
                counts.insert(format!("u{u}"), (rng.random_range(0..6), rng.random_range(0..6)));
            }
        }
        let ids: Vec<String> = (0..users + 5).map(|u| format!("u{u}")).collect();
        let articles: Vec<Vec<&str>> = (0..30)
            .map(|_| {
                let k = rng.random_range(0..8);
                let mut a: Vec<&str> = (0..k).map(|_| ids[rng.random_range(0..ids.len())].as_str()).collect();
                a.sort_unstable();
                a.dedup();
                a
            })
            .collect();
        let got = majority_baseline(&articles, &counts);
        for (a, &pred) in articles.iter().zip(&got) {
            let known: Vec<(usize, usize)> = a.iter().filter_map(|u| counts.get(*u).copied()).collect();
            let want = if known.is_empty() {
                false
            } else {
                let m = known.len() as i128;
                let fake = Ratio::new(known.iter().map(|k| k.0 as i128).sum(), m);
                let real = Ratio::new(known.iter().map(|k| k.1 as i128).sum(), m);
                fake.gt(real)
            };
            c.expect_eq("majority", pred, want);
        }
    }
}

fn typology_suite(rng: &mut Rng, c: &mut Check) {
    for _ in 0..300 {
        let articles: Vec<String> = (0..rng.random_range(1..20)).map(|a| format!("a{a}")).collect();
        let mut labels: HashMap<&str, Label> = HashMap::new();
        for a in &articles {
            if rng.random::<f64>() < 0.9 {
                labels.insert(a, if rng.random::<bool>() { Label::Fake } else { Label::Real });
            }
        }
        let mut pairs = BTreeSet::new();
        for _ in 0..rng.random_range(0..120) {
            pairs.insert((rng.random_range(0..30), rng.random_range(0..articles.len())));
        }
        let shares: Vec<ShareRecord> = pairs
            .iter()
            .map(|&(u, a)| ShareRecord {
                user_id: format!("u{u}"),
                article_id: articles[a].clone(),
            })
            .collect();
        let mut per_user: BTreeMap<&str, (i128, i128)> = BTreeMap::new();
        for s in &shares {
            if let Some(l) = labels.get(s.article_id.as_str()) {
                let e = per_user.entry(s.user_id.as_str()).or_default();
                if *l == Label::Fake {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        let n = per_user.len() as i128;
        let a = per_user.values().filter(|v| v.0 == 0 && v.1 > 0).count() as i128;
        let b = per_user.values().filter(|v| v.0 > 0 && v.1 == 0).count() as i128;
        let mixed: Vec<_> = per_user.values().filter(|v| v.0 > 0 && v.1 > 0).collect();
        let cc = mixed.len() as i128;
        let t = typology_report(&shares, &labels);
        c.expect_eq("typology counts", (t.users, t.type_a, t.type_b, t.type_c), (n as usize, a as usize, b as usize, cc as usize));
        c.expect("frac a", t.frac_a, Ratio::or_zero(a, n));
        c.expect("frac b", t.frac_b, Ratio::or_zero(b, n));
        c.expect("frac c", t.frac_c, Ratio::or_zero(cc, n));
        c.expect("c fake mean", t.c_mean_fake_shares, Ratio::or_zero(mixed.iter().map(|v| v.0).sum(), cc));
        c.expect("c real mean", t.c_mean_real_shares, Ratio::or_zero(mixed.iter().map(|v| v.1).sum(), cc));
    }
}

fn aggregate_suite(rng: &mut Rng, c: &mut Check) {
    for _ in 0..500 {
        let (rows, cols) = (rng.random_range(1..30), rng.random_range(1..6));
        let ints: Vec<i128> = (0..rows * cols).map(|_| rng.random_range(-1000..1000)).collect();
        let e = Tensor::matrix(rows, cols, ints.iter().map(|&v| v as f64).collect()).unwrap();
        let users: Vec<usize> = (0..rows).filter(|_| rng.random::<f64>() < 0.5).collect();
        let got = aggregate(&e, &users);
        c.expect_eq("aggregate width", got.len(), cols);
        for (j, &g) in got.iter().enumerate() {
            let sum: i128 = users.iter().map(|&u| ints[u * cols + j]).sum();
            c.expect("aggregate", g, Ratio::or_zero(sum, users.len() as i128));
        }
    }
}

/// Compares every stored entry and the sparsity pattern against `want(i, j)`.
fn expect_matrix(c: &mut Check, what: &str, m: &Csr, n: usize, want: impl Fn(usize, usize) -> Option<Ratio>) {
    for i in 0..n {
        let row: BTreeMap<usize, f64> = m.row(i).collect();
        for j in 0..n {
            match (row.get(&j), want(i, j)) {
                (Some(&g), Some(w)) => c.expect(what, g, w),
                (None, None) => {}
                (g, w) => c.expect_eq(&format!("{what} pattern ({i},{j})"), g.is_some(), w.is_some()),
            }
        }
    }
}

fn normalize_suite(rng: &mut Rng, c: &mut Check) {
    for _ in 0..200 {
        let g = random_graph(rng, 20, 2, false);
        let n = g.n();
        let adj = g.adjacency(None);
        let deg: Vec<i128> = adj.iter().map(|r| r.iter().filter(|&&b| b).count() as i128).collect();
        let linked = |i: usize, j: usize| adj[i][j] || i == j;

        let de = normalize_diagonal_enhanced(&g.graph).unwrap().matrix;
        expect_matrix(c, "diag-enhanced", &de, n, |i, j| linked(i, j).then(|| Ratio::new(1, deg[i] + 1)));

        // 1/sqrt(d_i d_j) is irrational: the product is exact and the square
        // root and division are each correctly rounded, so the value is fixed;
        // the square of each entry must also sit within a few ulps of the rational.
        let sym = normalize_symmetric(&g.graph, true).unwrap().matrix;
        for i in 0..n {
            for (j, v) in sym.row(i) {
                let p = (deg[i] + 1) * (deg[j] + 1);
                c.expect_eq("symmetric value", v.to_bits(), (1.0 / (p as f64).sqrt()).to_bits());
                let rel = (v * v * p as f64 - 1.0).abs();
                c.expect_eq("symmetric square", rel <= 4.0 * f64::EPSILON, true);
            }
            c.expect_eq("symmetric row pattern", sym.row_nnz(i), deg[i] as usize + 1);
        }

        let mean = mean_view(&g.graph).unwrap().matrix;
        expect_matrix(c, "mean view", &mean, n, |i, j| adj[i][j].then(|| Ratio::new(1, deg[i])));
        for r in Relation::ALL {
            let ra = g.adjacency(Some(r));
            let rdeg: Vec<i128> = ra.iter().map(|row| row.iter().filter(|&&b| b).count() as i128).collect();
            let view = relation_view(&g.graph, r).unwrap().matrix;
            expect_matrix(c, r.as_str(), &view, n, |i, j| ra[i][j].then(|| Ratio::new(1, rdeg[i])));
        }
    }
}

pub fn run() -> Result<String, String> {
    let mut rng = rng::derive(0, "acceptance-exactness");
    let mut c = Check {
        cases: 0,
        failures: Vec::new(),
    };
    f1_suite(&mut rng, &mut c);
    majority_suite(&mut rng, &mut c);
    typology_suite(&mut rng, &mut c);
    aggregate_suite(&mut rng, &mut c);
    normalize_suite(&mut rng, &mut c);
    let summary = format!(
        "{} exact comparisons over f1_fake, majority_baseline, typology_report, aggregate, normalize_*",
        c.cases
    );
    if c.failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", c.failures.join("; ")))
    }
}
