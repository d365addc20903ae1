//! Regression losses and test metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Test metrics. `mae` is the maximum absolute error; the mean absolute
/// error is reported separately as `mean_abs`. `rel_l2` is in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mean_abs: f64,
    pub rmse: f64,
    pub rel_l2: f64,
    pub r2: f64,
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

pub fn compute_metrics(pred: &[f64], reference: &[f64]) -> Result<Metrics> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} references",
            pred.len(),
            reference.len()
        )));
    }
    let n = pred.len() as f64;
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0;
    let mut sum_sq = 0.0;
    let mut ref_sq = 0.0;
    for (&p, &r) in pred.iter().zip(reference) {
        let e = p - r;
        max_abs = max_abs.max(e.abs());
        sum_abs += e.abs();
        sum_sq += e * e;
        ref_sq += r * r;
    }
    if ref_sq == 0.0 {
        return Err(Error::invalid("reference", "zero norm; relative error undefined"));
    }
    let mean = reference.iter().sum::<f64>() / n;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean) * (r - mean)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - sum_sq / ss_tot
    } else if sum_sq == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(Metrics {
        mae: max_abs,
        mean_abs: sum_abs / n,
        rmse: (sum_sq / n).sqrt(),
        rel_l2: 100.0 * (sum_sq / ref_sq).sqrt(),
        r2,
    })
}
