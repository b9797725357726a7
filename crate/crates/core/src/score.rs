//! Base predictors and the absolute-residual conformity score.

use std::sync::Arc;

use crate::error::{LcpError, Result};

/// A fitted regression function `x -> f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Constant(f64),
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
    /// Mean response of the `k` nearest pretraining points in standardized
    /// feature space; ties in distance go to the lower index.
    Knn(Arc<KnnModel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub(crate) k: usize,
    pub(crate) dim: usize,
    pub(crate) mean: Vec<f64>,
    pub(crate) scale: Vec<f64>,
    /// Standardized pretraining features, row-major.
    pub(crate) points: Vec<f64>,
    pub(crate) response: Vec<f64>,
}

impl KnnModel {
    fn predict(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let mut dist: Vec<(f64, usize)> = self
            .points
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        let sum: f64 = dist[..self.k].iter().map(|&(_, i)| self.response[i]).sum();
        sum / self.k as f64
    }
}

impl Predictor {
    /// Input dimension, when the predictor fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Predictor::Constant(_) => None,
            Predictor::Linear { coefficients, .. } => Some(coefficients.len()),
            Predictor::Knn(m) => Some(m.dim),
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Predictor::Constant(c) => *c,
            Predictor::Linear {
                intercept,
                coefficients,
            } => intercept + coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>(),
            Predictor::Knn(m) => m.predict(x),
        }
    }
}

/// `s(x, y) = |y - f(x)|` for a pretrained `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFunction {
    predictor: Predictor,
}

impl ScoreFunction {
    pub fn absolute_residual(predictor: Predictor) -> Self {
        Self { predictor }
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.predictor.dim() {
            Some(d) if d != x.len() => Err(LcpError::DimensionMismatch {
                expected: d,
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Point prediction `f(x)`, the center of every residual-score set.
    pub fn center(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predictor.predict(x))
    }

    pub fn score(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok((y - self.center(x)?).abs())
    }

    /// Scores of every row of `data`.
    pub fn scores(&self, data: &crate::Dataset) -> Result<Vec<f64>> {
        data.rows()
            .zip(data.response())
            .map(|(x, &y)| self.score(x, y))
            .collect()
    }
}
