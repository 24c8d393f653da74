//! Ensemble verification: RMSE of the ensemble mean and the ensemble CRPS.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};

/// RMSE between the ensemble mean and `truth`, over dimensions.
pub fn rmse(ensemble: &Ensemble, truth: &[f64]) -> f64 {
    rmse_of_mean(&ensemble.mean(), truth)
}

pub fn rmse_of_mean(mean: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(mean.len(), truth.len(), "rmse: dimension mismatch");
    let d = mean.len() as f64;
    (mean.iter().zip(truth).map(|(m, t)| (m - t).powi(2)).sum::<f64>() / d).sqrt()
}

/// CRPS of a one-dimensional ensemble against a scalar outcome.
///
/// Uses the standard estimator `mean|x_j - t| - 1/(2 n^2) sum_jk |x_j - x_k|`,
/// with the double sum evaluated on the sorted members in `O(n log n)`.
pub fn crps(members: &[f64], truth: f64) -> f64 {
    let n = members.len();
    assert!(n >= 1, "crps needs at least one member");
    let nf = n as f64;
    let mut sorted = members.to_vec();
    sorted.sort_by(f64::total_cmp);
    let abs_err = sorted.iter().map(|x| (x - truth).abs()).sum::<f64>() / nf;
    // sum_jk |x_j - x_k| = 2 sum_i (2i - n + 1) x_(i), 0-based i
    let pair_sum: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * i as f64 - nf + 1.0) * x)
        .sum::<f64>()
        * 2.0;
    (abs_err - pair_sum / (2.0 * nf * nf)).max(0.0)
}

/// Mean over dimensions of the per-dimension CRPS.
pub fn ensemble_crps(ensemble: &Ensemble, truth: &[f64]) -> f64 {
    assert_eq!(ensemble.dim(), truth.len(), "crps: dimension mismatch");
    let d = truth.len();
    (0..d).map(|k| crps(&ensemble.column(k), truth[k])).sum::<f64>() / d as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub time: f64,
    pub frmse: f64,
    pub armse: f64,
    pub fcrps: f64,
    pub acrps: f64,
}

/// Column means over a window of cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cycles: usize,
    pub frmse: f64,
    pub armse: f64,
    pub fcrps: f64,
    pub acrps: f64,
}

pub fn summarize(series: &[CycleMetrics], window: Range<usize>) -> Result<Summary> {
    let slice = series.get(window.clone()).ok_or_else(|| {
        Error::InvalidParameter(format!("window {window:?} exceeds {} cycles", series.len()))
    })?;
    if slice.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let m = slice.len() as f64;
    let mean = |f: fn(&CycleMetrics) -> f64| slice.iter().map(f).sum::<f64>() / m;
    Ok(Summary {
        cycles: slice.len(),
        frmse: mean(|c| c.frmse),
        armse: mean(|c| c.armse),
        fcrps: mean(|c| c.fcrps),
        acrps: mean(|c| c.acrps),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub cycles: Vec<CycleMetrics>,
    /// Seconds spent in the cycle loop.
    pub wallclock: f64,
}

impl MetricSeries {
    pub fn new(cycles: Vec<CycleMetrics>, wallclock: f64) -> Self {
        Self { cycles, wallclock }
    }

    /// Summary over every recorded cycle.
    pub fn summary(&self) -> Result<Summary> {
        summarize(&self.cycles, 0..self.cycles.len())
    }

    pub fn summary_window(&self, window: Range<usize>) -> Result<Summary> {
        summarize(&self.cycles, window)
    }
}
