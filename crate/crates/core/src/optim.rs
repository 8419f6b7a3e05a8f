//! AdamW and Riemannian Adam.
//!
//! Riemannian Adam treats each row of a ball parameter as a point `x` on the
//! Poincaré ball. The Euclidean gradient is rescaled to the Riemannian one
//! (`g / λ_x²`), the moments are updated elementwise as in Adam, and the
//! resulting direction is applied through the exponential map at `x`.

use crate::error::{Error, Result};
use crate::hyperbolic::{conformal_factor, curvature_from_raw, exp_map_raw, norm, project_in_place};
use crate::params::{ParamKind, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Euclidean,
    Riemannian { curvature: f64 },
}

/// Moment buffers and step count for one parameter tensor.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub config: AdamConfig,
    pub mode: Mode,
}

fn check_finite(grads: &[f64]) -> Result<()> {
    if grads.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite gradient, update aborted".into()))
    }
}

impl OptimizerState {
    pub fn new(len: usize, config: AdamConfig, mode: Mode) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            config,
            mode,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check_len(&self, params: &[f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim("optimizer", &[params.len(), grads.len()], &[self.m.len()]));
        }
        Ok(())
    }

    /// Updates the moments with `g` and returns the bias-corrected direction.
    fn direction(&mut self, grads: &[f64]) -> Vec<f64> {
        let c = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let mut dir = Vec::with_capacity(grads.len());
        for ((m, v), &g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grads) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            dir.push((*m / bc1) / ((*v / bc2).sqrt() + c.eps));
        }
        dir
    }

    /// Adam step with weight decay subtracted from the parameter directly.
    pub fn adamw_step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if self.mode != Mode::Euclidean {
            return Err(Error::Contract("adamw_step on a Riemannian state".into()));
        }
        self.check_len(params, grads)?;
        check_finite(grads)?;
        let c = self.config;
        let dir = self.direction(grads);
        for (p, d) in params.iter_mut().zip(dir) {
            *p -= c.lr * c.weight_decay * *p;
            *p -= c.lr * d;
        }
        Ok(())
    }

    /// Riemannian Adam on rows of width `dim`, each a point on the ball.
    /// `grads` are Euclidean gradients.
    pub fn riemannian_adam_step(&mut self, params: &mut [f64], dim: usize, grads: &[f64]) -> Result<()> {
        let Mode::Riemannian { curvature: k } = self.mode else {
            return Err(Error::Contract("riemannian_adam_step on a Euclidean state".into()));
        };
        self.check_len(params, grads)?;
        check_finite(grads)?;
        if dim == 0 || params.len() % dim != 0 {
            return Err(Error::dim("riemannian_adam_step", &[params.len()], &[dim]));
        }
        for row in params.chunks(dim) {
            if k.sqrt() * norm(row) >= 1.0 {
                return Err(Error::Manifold(format!("parameter row norm {} outside the ball", norm(row))));
            }
        }
        let mut rgrad = Vec::with_capacity(grads.len());
        for (row, g) in params.chunks(dim).zip(grads.chunks(dim)) {
            let lambda = conformal_factor(row, k);
            rgrad.extend(g.iter().map(|v| v / (lambda * lambda)));
        }
        let lr = self.config.lr;
        let dir = self.direction(&rgrad);
        for (row, d) in params.chunks_mut(dim).zip(dir.chunks(dim)) {
            let u: Vec<f64> = d.iter().map(|v| -lr * v).collect();
            let mut next = exp_map_raw(row, &u, k);
            project_in_place(&mut next, k);
            row.copy_from_slice(&next);
        }
        Ok(())
    }
}

/// One optimiser state per parameter of a [`ParamStore`]; ball parameters
/// take the Riemannian rule, everything else AdamW.
#[derive(Clone, Debug)]
pub struct Optimizer {
    states: Vec<OptimizerState>,
    pub clip_norm: Option<f64>,
}

impl Optimizer {
    pub fn new(store: &ParamStore, config: AdamConfig, clip_norm: Option<f64>) -> Self {
        let states = (0..store.len())
            .map(|i| {
                let mode = match store.kind(i) {
                    ParamKind::Euclidean => Mode::Euclidean,
                    ParamKind::Ball { curvature } => Mode::Riemannian {
                        curvature: curvature_from_raw(store.get(curvature).item()),
                    },
                };
                let cfg = if store.decays(i) {
                    config
                } else {
                    AdamConfig {
                        weight_decay: 0.0,
                        ..config
                    }
                };
                OptimizerState::new(store.get(i).len(), cfg, mode)
            })
            .collect();
        Self { states, clip_norm }
    }

    pub fn states(&self) -> &[OptimizerState] {
        &self.states
    }

    /// Applies one update from the gradients stored on each tensor.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for t in store.tensors() {
            if let Some(g) = t.grad() {
                check_finite(g)?;
            }
        }
        if let Some(max) = self.clip_norm {
            store.clip_grad_norm(max);
        }
        // Curvatures are read before any parameter (including κ) moves.
        let curvatures: Vec<Option<f64>> = (0..store.len())
            .map(|i| match store.kind(i) {
                ParamKind::Ball { curvature } => Some(curvature_from_raw(store.get(curvature).item())),
                ParamKind::Euclidean => None,
            })
            .collect();
        for (i, state) in self.states.iter_mut().enumerate() {
            if store.is_frozen(i) {
                continue;
            }
            let t = store.get_mut(i);
            let Some(g) = t.grad().map(<[f64]>::to_vec) else { continue };
            let dim = t.cols();
            match curvatures[i] {
                Some(k) => {
                    state.mode = Mode::Riemannian { curvature: k };
                    state.riemannian_adam_step(t.data_mut(), dim, &g)?;
                }
                None => state.adamw_step(t.data_mut(), &g)?,
            }
        }
        Ok(())
    }
}
