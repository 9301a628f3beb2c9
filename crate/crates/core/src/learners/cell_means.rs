//! Saturated cell-mean regression over discrete covariate cells.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::Result;

/// Per-cell training means keyed by the design's base binary pattern.
/// Prediction for an unseen cell falls back to the global training mean.
#[derive(Debug, Clone)]
pub struct CellMeansFit {
    means: BTreeMap<u32, f64>,
    pub global_mean: f64,
    /// Per-cell training counts, for standard-error style diagnostics.
    counts: BTreeMap<u32, usize>,
    /// Per-cell sum of squared responses.
    sq_sums: BTreeMap<u32, f64>,
}

impl CellMeansFit {
    pub fn predict(&self, pattern: u32) -> f64 {
        self.means.get(&pattern).copied().unwrap_or(self.global_mean)
    }

    pub fn count(&self, pattern: u32) -> usize {
        self.counts.get(&pattern).copied().unwrap_or(0)
    }

    /// Standard error of the cell mean (sample SD / sqrt(count)), `None`
    /// for unseen or singleton cells.
    pub fn cell_se(&self, pattern: u32) -> Option<f64> {
        let n = *self.counts.get(&pattern)? as f64;
        if n < 2.0 {
            return None;
        }
        let mean = self.means[&pattern];
        let var = (self.sq_sums[&pattern] / n - mean * mean).max(0.0) * n / (n - 1.0);
        Some((var / n).sqrt())
    }

    pub fn sorted_cells(&self) -> Vec<(u32, f64)> {
        self.means.iter().map(|(&k, &v)| (k, v)).collect()
    }

    pub(super) fn from_parts(cells: Vec<(u32, f64)>, global_mean: f64) -> Self {
        Self {
            means: cells.into_iter().collect(),
            global_mean,
            counts: BTreeMap::new(),
            sq_sums: BTreeMap::new(),
        }
    }
}

/// Fits per-cell means of `y` over the cells in `patterns`.
pub fn fit_cell_means(patterns: &[u32], y: &[f64]) -> Result<CellMeansFit> {
    if patterns.is_empty() || patterns.len() != y.len() {
        return Err(Error::EmptyTraining {
            what: "cell-mean regression",
        });
    }
    let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
    let mut sq_sums: BTreeMap<u32, f64> = BTreeMap::new();
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (&p, &v) in patterns.iter().zip(y.iter()) {
        *sums.entry(p).or_default() += v;
        *sq_sums.entry(p).or_default() += v * v;
        *counts.entry(p).or_default() += 1;
    }
    let global_mean = y.iter().sum::<f64>() / y.len() as f64;
    let means = sums
        .iter()
        .map(|(&p, &s)| (p, s / counts[&p] as f64))
        .collect();
    for (p, s) in sq_sums.iter_mut() {
        *s /= counts[p] as f64;
    }
    Ok(CellMeansFit {
        means,
        global_mean,
        counts,
        sq_sums,
    })
}
