//! Fake-class precision/recall/F1 and the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Fake is the positive class: `F1 = 2PR/(P+R)`, `0` when `P + R = 0`.
///
/// Computed as `2·TP / (2·TP + FP + FN)`, which equals the harmonic mean
/// whenever it is defined and avoids rounding in `P` and `R`.
pub fn f1_fake(predicted_fake: &[bool], is_fake: &[bool]) -> Result<F1Score> {
    if predicted_fake.len() != is_fake.len() {
        return Err(Error::dim("f1_fake", &[predicted_fake.len()], &[is_fake.len()]));
    }
    if is_fake.is_empty() {
        return Err(Error::Validation("f1 of an empty prediction set".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &y) in predicted_fake.iter().zip(is_fake) {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(F1Score {
        tp,
        fp,
        fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_diff: f64,
    pub t: f64,
    pub dof: usize,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Paired t-test of `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::dim("paired_t_test", &[a.len()], &[b.len()]));
    }
    if a.len() < 2 {
        return Err(Error::Validation("paired t-test needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let dof = a.len() - 1;
    if var == 0.0 {
        let p = if mean == 0.0 { 1.0 } else { 0.0 };
        let t = if mean == 0.0 { 0.0 } else { mean.signum() * f64::INFINITY };
        return Ok(PairedTTest {
            mean_diff: mean,
            t,
            dof,
            p_value: p,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(PairedTTest {
        mean_diff: mean,
        t,
        dof,
        p_value: 2.0 * (1.0 - dist.cdf(t.abs())),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
