//! Poincaré-ball geometry.
//!
//! A ball of curvature `−1/K` has radius `1/√K`. Points are kept strictly
//! inside by projecting onto radius `(1 − BALL_EPS)/√K` after every map.
//! The free functions here work on plain slices; [`layers`] re-expresses the
//! same maps on the autodiff tape for the Hy-GCN / Hy-GAT layers.

pub mod layers;

use crate::autodiff::{softplus, ATANH_CLAMP};
use crate::error::{Error, Result};

/// Relative margin kept from the ball boundary.
pub const BALL_EPS: f64 = 1e-5;
/// Norms below this are treated as the origin.
pub const MIN_NORM: f64 = 1e-15;
/// Offset keeping the curvature strictly positive.
pub const CURVATURE_FLOOR: f64 = 1e-4;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn clamped_atanh(x: f64) -> f64 {
    x.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh()
}

/// Largest admissible Euclidean norm on the ball of curvature `k`.
pub fn max_norm(k: f64) -> f64 {
    (1.0 - BALL_EPS) / k.sqrt()
}

/// Curvature from its unconstrained parameter: `softplus(raw) + 1e-4`.
pub fn curvature_from_raw(raw: f64) -> f64 {
    softplus(raw) + CURVATURE_FLOOR
}

/// Inverse of [`curvature_from_raw`].
pub fn raw_from_curvature(k: f64) -> f64 {
    let s = k - CURVATURE_FLOOR;
    assert!(s > 0.0, "curvature {k} below floor");
    // softplus⁻¹(s) = ln(eˢ − 1)
    s.exp_m1().ln()
}

/// A point on the Poincaré ball of curvature `−1/K`.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    curvature: f64,
}

impl BallPoint {
    /// Wraps coordinates, projecting them inside the ball.
    pub fn new(coords: Vec<f64>, curvature: f64) -> Result<Self> {
        if !(curvature > 0.0) || !curvature.is_finite() {
            return Err(Error::Validation(format!("curvature must be > 0, got {curvature}")));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite ball coordinates".into()));
        }
        let mut coords = coords;
        project_in_place(&mut coords, curvature);
        Ok(Self { coords, curvature })
    }

    /// Wraps coordinates that must already satisfy `√K‖x‖ < 1`.
    pub fn strict(coords: Vec<f64>, curvature: f64) -> Result<Self> {
        if curvature.sqrt() * norm(&coords) >= 1.0 {
            return Err(Error::Manifold(format!(
                "norm {} outside radius {}",
                norm(&coords),
                1.0 / curvature.sqrt()
            )));
        }
        Self::new(coords, curvature)
    }

    pub fn origin(dim: usize, curvature: f64) -> Self {
        Self::new(vec![0.0; dim], curvature).expect("origin is inside")
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    fn check_same(&self, other: &BallPoint) -> Result<()> {
        if self.curvature != other.curvature {
            return Err(Error::Contract(format!(
                "curvature mismatch {} vs {}",
                self.curvature, other.curvature
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::dim("ball", &[self.dim()], &[other.dim()]));
        }
        Ok(())
    }
}

/// Scales `x` back inside the ball if it reached the margin.
pub fn project_in_place(x: &mut [f64], k: f64) {
    let n = norm(x);
    let max = max_norm(k);
    if n > max {
        let s = max / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// Conformal factor `λ_x = 2 / (1 − K‖x‖²)`.
pub fn conformal_factor(x: &[f64], k: f64) -> f64 {
    2.0 / (1.0 - k * dot(x, x)).max(MIN_NORM)
}

/// Gyro-addition `x ⊕ y` on the ball of curvature `k`.
pub fn mobius_add_raw(x: &[f64], y: &[f64], k: f64) -> Vec<f64> {
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let a = 1.0 + 2.0 * k * xy + k * y2;
    let b = 1.0 - k * x2;
    let den = (1.0 + 2.0 * k * xy + k * k * x2 * y2).max(MIN_NORM);
    let mut out: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| (a * xi + b * yi) / den).collect();
    project_in_place(&mut out, k);
    out
}

pub fn mobius_add(x: &BallPoint, y: &BallPoint) -> Result<BallPoint> {
    x.check_same(y)?;
    Ok(BallPoint {
        coords: mobius_add_raw(&x.coords, &y.coords, x.curvature),
        curvature: x.curvature,
    })
}

/// `r ⊗ x = (1/√K) tanh(r · atanh(√K‖x‖)) · x/‖x‖`.
pub fn mobius_scalar_mul(r: f64, x: &BallPoint) -> BallPoint {
    let k = x.curvature;
    let n = x.norm();
    if n < MIN_NORM {
        return BallPoint::origin(x.dim(), k);
    }
    let sk = k.sqrt();
    let target = (r * clamped_atanh(sk * n)).tanh() / sk;
    let mut coords: Vec<f64> = x.coords.iter().map(|v| v * target / n).collect();
    project_in_place(&mut coords, k);
    BallPoint { coords, curvature: k }
}

/// Exponential map at the origin.
pub fn exp0_raw(v: &[f64], k: f64) -> Vec<f64> {
    let n = norm(v);
    if n < MIN_NORM {
        return vec![0.0; v.len()];
    }
    let sk = k.sqrt();
    let s = (sk * n).tanh() / (sk * n);
    let mut out: Vec<f64> = v.iter().map(|x| x * s).collect();
    project_in_place(&mut out, k);
    out
}

/// Logarithmic map at the origin.
pub fn log0_raw(x: &[f64], k: f64) -> Vec<f64> {
    let n = norm(x);
    if n < MIN_NORM {
        return vec![0.0; x.len()];
    }
    let sk = k.sqrt();
    let s = clamped_atanh(sk * n) / (sk * n);
    x.iter().map(|v| v * s).collect()
}

pub fn exp_map_origin(v: &[f64], k: f64) -> Result<BallPoint> {
    BallPoint::new(exp0_raw(v, k), k)
}

pub fn log_map_origin(x: &BallPoint) -> Vec<f64> {
    log0_raw(&x.coords, x.curvature)
}

/// Exponential map at an arbitrary base point `x`.
pub fn exp_map_raw(x: &[f64], u: &[f64], k: f64) -> Vec<f64> {
    let n = norm(u);
    if n < MIN_NORM {
        return x.to_vec();
    }
    let sk = k.sqrt();
    let lambda = conformal_factor(x, k);
    let s = (sk * lambda * n / 2.0).tanh() / (sk * n);
    let second: Vec<f64> = u.iter().map(|v| v * s).collect();
    mobius_add_raw(x, &second, k)
}

/// `exp₀(Σ wᵢ · log₀(xᵢ))`: tangent-space proxy for the weighted Fréchet mean.
pub fn tangent_aggregate(points: &[BallPoint], weights: &[f64]) -> Result<BallPoint> {
    let first = points
        .first()
        .ok_or_else(|| Error::Contract("aggregate over an empty neighbourhood".into()))?;
    if points.len() != weights.len() {
        return Err(Error::dim("tangent_aggregate", &[points.len()], &[weights.len()]));
    }
    let mut acc = vec![0.0; first.dim()];
    for (p, &w) in points.iter().zip(weights) {
        first.check_same(p)?;
        for (a, t) in acc.iter_mut().zip(log_map_origin(p)) {
            *a += w * t;
        }
    }
    exp_map_origin(&acc, first.curvature)
}

/// `exp₀^{K_out}(σ(log₀^{K_in}(x)))`.
pub fn hyperbolic_activation(x: &BallPoint, k_out: f64, sigma: impl Fn(f64) -> f64) -> Result<BallPoint> {
    let t: Vec<f64> = log_map_origin(x).into_iter().map(sigma).collect();
    exp_map_origin(&t, k_out)
}

/// Per-layer curvatures `K_0 … K_L`, stored through their raw parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureSchedule {
    raw: Vec<f64>,
    pub learnable: bool,
}

impl CurvatureSchedule {
    pub fn constant(layers: usize, k: f64, learnable: bool) -> Self {
        Self {
            raw: vec![raw_from_curvature(k); layers + 1],
            learnable,
        }
    }

    pub fn from_raw(raw: Vec<f64>, learnable: bool) -> Self {
        Self { raw, learnable }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn curvature(&self, i: usize) -> f64 {
        curvature_from_raw(self.raw[i])
    }

    pub fn curvatures(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| curvature_from_raw(r)).collect()
    }
}
