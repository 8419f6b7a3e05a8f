//! Poincaré-ball identities, containment under random operation chains and
//! the small-curvature Euclidean limit.

use std::ops::Range;

use rand::Rng as _;
use safer_core::hyperbolic::{
    exp0_raw, exp_map_origin, exp_map_raw, hyperbolic_activation, log0_raw, max_norm, mobius_add, mobius_add_raw,
    mobius_scalar_mul, norm, tangent_aggregate, BallPoint,
};
use safer_core::rng::{self, Rng};

const INVERSION_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-9;
const LIMIT_TOL: f64 = 1e-5;
const LIMIT_K: f64 = 1e-8;
const CHAINS: usize = 10_000;
const CHAIN_LEN: usize = 12;
const DIM: usize = 4;

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn direction(rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A vector with length drawn from `len`.
fn vector(rng: &mut Rng, len: Range<f64>) -> Vec<f64> {
    let len = rng.random_range(len);
    direction(rng).into_iter().map(|x| x * len).collect()
}

/// A point with hyperbolic scale `√K‖x‖` drawn from `r`.
fn point(rng: &mut Rng, k: f64, r: Range<f64>) -> BallPoint {
    let s = k.sqrt();
    BallPoint::strict(vector(rng, r.start / s..r.end / s), k).unwrap()
}

fn curvature(rng: &mut Rng) -> f64 {
    10f64.powf(rng.random_range(-1.0..0.7))
}

#[derive(Default)]
struct Worst {
    inversion: f64,
    identity: f64,
    limit: f64,
}

fn inversion(rng: &mut Rng, w: &mut Worst) {
    for _ in 0..2000 {
        let k = curvature(rng);
        let v = vector(rng, 0.0..3.0 / k.sqrt());
        w.inversion = w.inversion.max(diff(&log0_raw(&exp0_raw(&v, k), k), &v));
        let x = point(rng, k, 0.0..0.99);
        w.inversion = w.inversion.max(diff(&exp0_raw(&log0_raw(x.coords(), k), k), x.coords()));
    }
}

fn identities(rng: &mut Rng, w: &mut Worst) {
    for _ in 0..2000 {
        let k = curvature(rng);
        let x = point(rng, k, 0.0..0.9);
        let zero = BallPoint::origin(DIM, k);
        w.identity = w.identity.max(diff(mobius_add(&zero, &x).unwrap().coords(), x.coords()));
        let neg = BallPoint::strict(x.coords().iter().map(|v| -v).collect(), k).unwrap();
        w.identity = w.identity.max(diff(mobius_add(&neg, &x).unwrap().coords(), zero.coords()));
        let (r1, r2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let lhs = mobius_scalar_mul(r1 * r2, &x);
        let rhs = mobius_scalar_mul(r1, &mobius_scalar_mul(r2, &x));
        w.identity = w.identity.max(diff(lhs.coords(), rhs.coords()));
    }
}

fn euclidean_limit(rng: &mut Rng, w: &mut Worst) {
    let k = LIMIT_K;
    for _ in 0..2000 {
        let x = vector(rng, 0.0..3.0);
        let y = vector(rng, 0.0..3.0);
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let r = rng.random_range(-3.0..3.0);
        let scaled: Vec<f64> = x.iter().map(|v| r * v).collect();
        let xp = BallPoint::strict(x.clone(), k).unwrap();
        for err in [
            diff(&mobius_add_raw(&x, &y, k), &sum),
            diff(&exp0_raw(&x, k), &x),
            diff(&log0_raw(&x, k), &x),
            diff(&exp_map_raw(&x, &y, k), &sum),
            diff(mobius_scalar_mul(r, &xp).coords(), &scaled),
        ] {
            w.limit = w.limit.max(err);
        }
    }
}

/// Applies random ball operations and reports the first point that leaves the ball.
fn containment(rng: &mut Rng) -> Result<usize, String> {
    let mut ops = 0;
    for chain in 0..CHAINS {
        let k = curvature(rng);
        let mut x = point(rng, k, 0.0..0.999);
        for _ in 0..CHAIN_LEN {
                        x = match rng.random_range(0..6) {
                0 => mobius_add(&x, &exp_map_origin(&vector(rng, 0.0..60.0), k).unwrap()).unwrap(),
                1 => mobius_scalar_mul(rng.random_range(-20.0..20.0), &x),
                2 => BallPoint::new(exp_map_raw(x.coords(), &vector(rng, 0.0..60.0), k), k).unwrap(),
                3 => hyperbolic_activation(&x, k, |v| v.max(0.0) * 40.0).unwrap(),
                4 => {
                    let y = point(rng, k, 0.9..0.99999);
                    tangent_aggregate(&[x, y], &[rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)]).unwrap()
                }
                _ => mobius_add(&point(rng, k, 0.99..0.999999), &x).unwrap(),
            };
            ops += 1;
            let n = x.norm();
            if !n.is_finite() || x.coords().iter().any(|v| !v.is_finite()) {
                return Err(format!("chain {chain}: non-finite point"));
            }
            if n * k.sqrt() >= 1.0 || n > max_norm(k) * (1.0 + 1e-12) {
                return Err(format!("chain {chain}: norm {n} escapes radius {}", 1.0 / k.sqrt()));
            }
        }
    }
    Ok(ops)
}

pub fn run() -> Result<String, String> {
    let mut rng = rng::derive(0, "acceptance-geometry");
    let mut w = Worst::default();
    inversion(&mut rng, &mut w);
    identities(&mut rng, &mut w);
    euclidean_limit(&mut rng, &mut w);
    let contained = containment(&mut rng);
    let mut failures = Vec::new();
    if !(w.inversion <= INVERSION_TOL) {
        failures.push(format!("exp/log inversion {:.2e}", w.inversion));
    }
    if !(w.identity <= IDENTITY_TOL) {
        failures.push(format!("Möbius identities {:.2e}", w.identity));
    }
    if !(w.limit <= LIMIT_TOL) {
        failures.push(format!("Euclidean limit {:.2e}", w.limit));
    }
    let ops = match contained {
        Ok(ops) => ops,
        Err(e) => {
            failures.push(e);
            0
        }
    };
    let summary = format!(
        "inversion {:.1e}, identities {:.1e}, K=1e-8 limit {:.1e}, {CHAINS} chains ({ops} ops) contained",
        w.inversion, w.identity, w.limit
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failures.join("; ")))
    }
}
