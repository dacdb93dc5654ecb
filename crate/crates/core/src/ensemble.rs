//! Monte Carlo ensembles of vector draws and their quantile summaries.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Draws stored one per row (`nsamples x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    draws: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(draws: DMatrix<f64>) -> Result<Self> {
        if draws.nrows() == 0 || draws.ncols() == 0 {
            return Err(Error::input("empty ensemble"));
        }
        Ok(Self { draws })
    }

    pub fn from_rows(rows: &[DVector<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::input("empty ensemble"));
        };
        let dim = first.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::dim("ensemble rows differ in length"));
        }
        Self::new(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
    }

    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn draw(&self, i: usize) -> DVector<f64> {
        self.draws.row(i).transpose()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().copied().collect()
    }

    pub fn columns(&self, start: usize, count: usize) -> Ensemble {
        Ensemble { draws: self.draws.columns(start, count).into_owned() }
    }

    pub fn mean(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    /// Sample standard deviation per column.
    pub fn std_dev(&self) -> DVector<f64> {
        let n = self.len() as f64;
        let mean = self.mean();
        DVector::from_fn(self.dim(), |j, _| {
            let ss: f64 = self.draws.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum();
            (ss / (n - 1.0).max(1.0)).sqrt()
        })
    }

    /// Monte Carlo standard error of the column means.
    pub fn mean_std_error(&self) -> DVector<f64> {
        self.std_dev() / (self.len() as f64).sqrt()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len() as f64;
        let centered = &self.draws - DMatrix::from_fn(self.len(), self.dim(), |_, j| self.mean()[j]);
        centered.transpose() * centered / (n - 1.0).max(1.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Ensemble {
        Ensemble { draws: self.draws.map(f) }
    }

    /// Empirical quantiles of column `j` (linear interpolation between order
    /// statistics).
    pub fn column_quantiles(&self, j: usize, probs: &[f64]) -> Vec<f64> {
        let mut col = self.column(j);
        col.sort_by(f64::total_cmp);
        probs.iter().map(|&p| quantile_sorted(&col, p)).collect()
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    let v = sorted[lo] + w * (sorted[hi] - sorted[lo]);
    // interpolation can step outside [sorted[lo], sorted[hi]] by an ulp
    v.clamp(sorted[lo], sorted[hi])
}

pub const DEFAULT_PROBS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Quantiles of each column of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSummary {
    pub probs: Vec<f64>,
    /// `values[j][k]` is the `probs[k]` quantile of column `j`.
    pub values: Vec<Vec<f64>>,
}

impl QuantileSummary {
    pub fn median(&self, j: usize) -> Option<f64> {
        self.probs.iter().position(|&p| p == 0.5).map(|k| self.values[j][k])
    }
}

pub fn summarize(ensemble: &Ensemble, probs: &[f64]) -> Result<QuantileSummary> {
    if ensemble.is_empty() {
        return Err(Error::input("cannot summarize an empty ensemble"));
    }
    if probs.is_empty() || probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::input("quantile probabilities must lie in (0, 1)"));
    }
    if probs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("quantile probabilities must be strictly increasing"));
    }
    let values = (0..ensemble.dim()).map(|j| ensemble.column_quantiles(j, probs)).collect();
    Ok(QuantileSummary { probs: probs.to_vec(), values })
}
