//! L2-regularised, class-weighted logistic regression.
//!
//! Objective: `(1/n) Σ c_i·[softplus(z_i) − y_i·z_i] + (λ/2)‖w‖²` with
//! `z_i = w·x_i + b`, `c_i = fake_weight` for fake articles and 1 otherwise.
//! The bias is not penalised. Minimised by accelerated gradient descent with
//! backtracking and gradient-based restarts. With `standardize`, features are
//! centred and scaled by their train statistics before fitting and scoring.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, softplus};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrConfig {
    pub l2: f64,
    pub fake_weight: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub standardize: bool,
    /// Candidate `l2` values; when non-empty the fusion step picks the one
    /// with the best validation F1 instead of using `l2`.
    pub l2_grid: Vec<f64>,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            l2: 1e-2,
            fake_weight: 3.0,
            max_iter: 5000,
            tol: 1e-6,
            standardize: true,
            l2_grid: vec![0.01, 0.1, 1.0, 10.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Per-feature centre and scale; empty when not standardising.
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub scale: Vec<f64>,
}

/// Objective value and gradient (`[∂w…, ∂b]`) at `theta = [w…, b]`.
pub fn objective(x: &[Vec<f64>], y: &[bool], theta: &[f64], config: &LrConfig) -> (f64, Vec<f64>) {
    let d = theta.len() - 1;
    let n = x.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &fake) in x.iter().zip(y) {
        let z = dot(&theta[..d], row) + theta[d];
        let c = if fake { config.fake_weight } else { 1.0 };
        let t = f64::from(u8::from(fake));
        value += c * (softplus(z) - t * z);
        let r = c * (sigmoid(z) - t) / n;
        for (g, v) in grad[..d].iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    value /= n;
    let w2: f64 = theta[..d].iter().map(|w| w * w).sum();
    value += 0.5 * config.l2 * w2;
    for (g, w) in grad[..d].iter_mut().zip(&theta[..d]) {
        *g += config.l2 * w;
    }
    (value, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column means and standard deviations (1 for constant columns).
fn moments(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for r in x {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let scale = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    (mean, scale)
}

fn apply(x: &[f64], center: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(center).zip(scale).map(|((v, c), s)| (v - c) / s).collect()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LrClassifier {
    pub fn fit(x: &[Vec<f64>], y: &[bool], config: &LrConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Validation(format!(
                "logistic regression needs matching non-empty inputs ({} rows, {} labels)",
                x.len(),
                y.len()
            )));
        }
        let d = x[0].len();
        if let Some(i) = x.iter().position(|r| r.len() != d) {
            return Err(Error::dim("lr features", &[i, x[i].len()], &[d]));
        }
        if let Some(i) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Validation(format!("row {i} has non-finite features")));
        }
        if !(config.l2 >= 0.0 && config.fake_weight > 0.0) {
            return Err(Error::Config("l2 must be ≥ 0 and fake_weight > 0".into()));
        }
        let (center, scale) = if config.standardize { moments(x) } else { (Vec::new(), Vec::new()) };
        let standardized: Vec<Vec<f64>>;
        let x = if config.standardize {
            standardized = x.iter().map(|r| apply(r, &center, &scale)).collect();
            &standardized[..]
        } else {
            x
        };
        let mut theta = vec![0.0; d + 1];
        let mut prev = theta.clone();
        let mut momentum = 1.0f64;
        let mut step = 1.0;
        let (mut f, mut g) = objective(x, y, &theta, config);
        let mut iterations = 0;
        while iterations < config.max_iter && norm(&g) >= config.tol {
            iterations += 1;
            // extrapolated point
            let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next_m;
            let yk: Vec<f64> = theta.iter().zip(&prev).map(|(t, p)| t + beta * (t - p)).collect();
            let (fy, gy) = objective(x, y, &yk, config);
            let gy2 = dot(&gy, &gy);
            // backtracking on the quadratic upper bound
            let candidate = loop {
                let c: Vec<f64> = yk.iter().zip(&gy).map(|(v, g)| v - step * g).collect();
                let (fc, gc) = objective(x, y, &c, config);
                if fc <= fy - 0.5 * step * gy2 + 1e-15 * fy.abs() || step < 1e-20 {
                    break (c, fc, gc);
                }
                step *= 0.5;
            };
            let (c, fc, gc) = candidate;
            if fc > f {
                // restart without momentum
                momentum = 1.0;
                prev = theta.clone();
                let plain: Vec<f64> = theta.iter().zip(&g).map(|(v, gg)| v - step * gg).collect();
                let (fp, gp) = objective(x, y, &plain, config);
                if fp <= f {
                    theta = plain;
                    f = fp;
                    g = gp;
                } else {
                    step *= 0.5;
                }
                continue;
            }
            prev = std::mem::replace(&mut theta, c);
            f = fc;
            g = gc;
            momentum = next_m;
            step *= 1.1;
        }
        let grad_norm = norm(&g);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("logistic regression diverged".into()));
        }
        let bias = theta.pop().expect("bias slot");
        Ok(Self {
            weights: theta,
            bias,
            l2: config.l2,
            iterations,
            grad_norm,
            center,
            scale,
        })
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        if self.center.is_empty() {
            dot(&self.weights, x) + self.bias
        } else {
            dot(&self.weights, &apply(x, &self.center, &self.scale)) + self.bias
        }
    }

    /// Probability of the fake class.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.score(x) > 0.5
    }

    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| -w).collect(),
            bias: -self.bias,
            ..self.clone()
        }
    }
}
