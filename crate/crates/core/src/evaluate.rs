//! Coefficient of determination on held-out data.

use serde::{Deserialize, Serialize};

use crate::domain::TaskPoint;
use crate::error::{Error, Result};
use crate::gp::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    pub per_output: Vec<f64>,
    /// Residual and total sums added over all outputs before dividing.
    pub pooled: f64,
    pub n_test: usize,
}

/// R² of `predicted` against `truth`; both are indexed `[sample][output]`.
pub fn r2_scores(predicted: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<R2Report> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} test samples",
            predicted.len(),
            truth.len()
        )));
    }
    let outputs = truth[0].len();
    if truth.iter().chain(predicted).any(|y| y.len() != outputs) {
        return Err(Error::InvalidArgument("inconsistent output dimension".into()));
    }
    let n = truth.len() as f64;
    let mut per_output = Vec::with_capacity(outputs);
    let (mut res_all, mut tot_all) = (0.0, 0.0);
    for o in 0..outputs {
        let mean = truth.iter().map(|y| y[o]).sum::<f64>() / n;
        let tot: f64 = truth.iter().map(|y| (y[o] - mean).powi(2)).sum();
        let res: f64 = truth.iter().zip(predicted).map(|(y, p)| (y[o] - p[o]).powi(2)).sum();
        if tot == 0.0 {
            return Err(Error::DegenerateData(format!("test output {o} has zero variance")));
        }
        per_output.push(1.0 - res / tot);
        res_all += res;
        tot_all += tot;
    }
    Ok(R2Report {
        per_output,
        pooled: 1.0 - res_all / tot_all,
        n_test: truth.len(),
    })
}

/// R² of the policy's predictive mean on a test set.
pub fn evaluate_r2(policy: &Policy, points: &[TaskPoint], truth: &[Vec<f64>]) -> Result<R2Report> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let pred = policy.predict(points, false)?;
    let predicted: Vec<Vec<f64>> = (0..points.len())
        .map(|k| pred.mean.iter().map(|m| m[k]).collect())
        .collect();
    r2_scores(&predicted, truth)
}
