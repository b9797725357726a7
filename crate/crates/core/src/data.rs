//! Row-major feature matrix with a response vector.

use crate::error::{LcpError, Result};

/// A regression sample `{(X_i, Y_i)}`.
///
/// Features are stored row-major in one buffer. Categorical columns hold
/// small integer codes and are flagged in `categorical`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    categorical: Vec<bool>,
    response: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, response: Vec<f64>) -> Result<Self> {
        Self::with_categorical(features, dim, vec![false; dim], response)
    }

    pub fn with_categorical(
        features: Vec<f64>,
        dim: usize,
        categorical: Vec<bool>,
        response: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(LcpError::contract("feature dimension must be positive"));
        }
        if categorical.len() != dim {
            return Err(LcpError::DimensionMismatch {
                expected: dim,
                got: categorical.len(),
            });
        }
        if features.len() != response.len() * dim {
            return Err(LcpError::contract(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                response.len()
            )));
        }
        if let Some(v) = features.iter().chain(&response).find(|v| !v.is_finite()) {
            return Err(LcpError::contract(format!("non-finite value {v} in dataset")));
        }
        Ok(Self {
            features,
            dim,
            categorical,
            response,
        })
    }

    /// Builds a dataset from per-row feature vectors.
    pub fn from_rows(rows: &[Vec<f64>], response: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(LcpError::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(rows.concat(), dim, response)
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn categorical(&self) -> &[bool] {
        &self.categorical
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn y(&self, i: usize) -> f64 {
        self.response[i]
    }

    /// Copies the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut response = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            response.push(self.response[i]);
        }
        Self {
            features,
            dim: self.dim,
            categorical: self.categorical.clone(),
            response,
        }
    }

    /// Appends the rows of `other`, which must share this schema.
    pub fn concat(mut self, other: &Dataset) -> Result<Self> {
        if other.dim != self.dim {
            return Err(LcpError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        self.features.extend_from_slice(&other.features);
        self.response.extend_from_slice(&other.response);
        Ok(self)
    }
}
