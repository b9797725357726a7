//! Weighted empirical score distributions, p-values and their inversion.
//!
//! Scores live on a grid of their unique sorted values `u_0 < .. < u_{m-1}`.
//! Every p-value used here is a nonincreasing step function of the test
//! score that can only change at those values, so it is enough to evaluate
//! it at `2m + 1` candidate positions: position `2j` stands for the open gap
//! just below `u_j` (with `2m` meaning "above every score") and position
//! `2r + 1` stands for `u_r` itself.

use serde::{Deserialize, Serialize};

use crate::error::{LcpError, Result};
use crate::predset::Threshold;

/// Slack used when comparing a p-value with `alpha` and a cumulative weight
/// with a quantile level. Weights are sums of floats, so exact boundary
/// cases such as `1/5 == 0.2` would otherwise flip on rounding noise.
pub const TOL: f64 = 1e-12;

/// `sum_i w_i delta_{s_i} + w_inf delta_{+inf}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScoreDistribution {
    scores: Vec<f64>,
    weights: Vec<f64>,
    infinity_mass: f64,
}

impl WeightedScoreDistribution {
    pub fn new(scores: Vec<f64>, weights: Vec<f64>, infinity_mass: f64) -> Result<Self> {
        if scores.len() != weights.len() {
            return Err(LcpError::DimensionMismatch {
                expected: scores.len(),
                got: weights.len(),
            });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(LcpError::contract("scores must not be NaN"));
        }
        if weights
            .iter()
            .chain(std::iter::once(&infinity_mass))
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(LcpError::contract("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum::<f64>() + infinity_mass;
        if (total - 1.0).abs() > 1e-9 {
            return Err(LcpError::contract(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            scores,
            weights,
            infinity_mass,
        })
    }

    /// Weight vector over `n + 1` points whose last entry belongs to the
    /// test point and becomes the atom at `+inf`.
    pub fn with_test_weight(scores: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        let inf = weights
            .pop()
            .ok_or_else(|| LcpError::contract("weight vector must include the test point"))?;
        Self::new(scores, weights, inf)
    }

    /// Equal weights `1/(n+1)` on every score and on `+inf`.
    pub fn uniform(scores: Vec<f64>) -> Self {
        let w = 1.0 / (scores.len() + 1) as f64;
        let weights = vec![w; scores.len()];
        Self {
            scores,
            weights,
            infinity_mass: w,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    /// Mass on `(-inf, t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        let finite: f64 = self
            .scores
            .iter()
            .zip(&self.weights)
            .filter(|(s, _)| **s <= t)
            .map(|(_, w)| w)
            .sum();
        if t == f64::INFINITY {
            finite + self.infinity_mass
        } else {
            finite
        }
    }

    /// Smallest value whose cumulative weight reaches `level`, scanning the
    /// merged unique scores and then `+inf`.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(LcpError::contract(format!(
                "quantile level must lie in (0,1), got {level}"
            )));
        }
        let grid = ScoreGrid::new(&self.scores);
        let mass = grid.masses(&self.weights);
        let mut acc = 0.0;
        for (v, w) in grid.values().iter().zip(&mass) {
            acc += w;
            if acc >= level - TOL {
                return Ok(*v);
            }
        }
        Ok(f64::INFINITY)
    }

    /// `sum_i w_i 1{s_i >= s} + w_inf`.
    pub fn pvalue_deterministic(&self, s: f64) -> f64 {
        self.pvalue_smoothed(s, 1.0)
    }

    /// `sum_i w_i 1{s_i > s} + u (sum_i w_i 1{s_i = s} + w_inf)`.
    pub fn pvalue_smoothed(&self, s: f64, u: f64) -> f64 {
        let mut above = 0.0;
        let mut tied = 0.0;
        for (si, w) in self.scores.iter().zip(&self.weights) {
            if *si > s {
                above += w;
            } else if *si == s {
                tied += w;
            }
        }
        above + u * (tied + self.infinity_mass)
    }

    /// The p-value at every candidate position of `grid`, which must be
    /// built from this distribution's scores.
    pub fn pvalue_profile(&self, grid: &ScoreGrid, u: f64) -> Vec<f64> {
        pvalue_profile(grid, &grid.masses(&self.weights), self.infinity_mass, u)
    }

    /// `{s : p(s) > alpha}` with the smoothed p-value at draw `u`
    /// (`u = 1` gives the deterministic set).
    pub fn threshold(&self, alpha: f64, u: f64) -> Threshold {
        let grid = ScoreGrid::new(&self.scores);
        let profile = self.pvalue_profile(&grid, u);
        threshold_from_pvalue_sweep(&grid, alpha, |c| profile[c])
    }
}

/// Unique sorted values of a score vector, with each original score's rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    values: Vec<f64>,
    rank: Vec<usize>,
}

impl ScoreGrid {
    pub fn new(scores: &[f64]) -> Self {
        let mut values: Vec<f64> = scores.to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let rank = scores.iter().map(|s| values.partition_point(|v| v < s)).collect();
        Self { values, rank }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of unique scores `m`.
    pub fn unique(&self) -> usize {
        self.values.len()
    }

    /// Number of candidate positions, `2m + 1`.
    pub fn candidates(&self) -> usize {
        2 * self.values.len() + 1
    }

    /// Index of score `i` among the unique values.
    pub fn rank(&self, i: usize) -> usize {
        self.rank[i]
    }

    /// Candidate position of score `i`.
    pub fn position(&self, i: usize) -> usize {
        2 * self.rank[i] + 1
    }

    /// Candidate position describing an arbitrary score `s`.
    pub fn locate(&self, s: f64) -> usize {
        let j = self.values.partition_point(|v| *v < s);
        if j < self.values.len() && self.values[j] == s {
            2 * j + 1
        } else {
            2 * j
        }
    }

    /// A score lying at candidate position `c`.
    pub fn representative(&self, c: usize) -> f64 {
        let m = self.values.len();
        assert!(c <= 2 * m, "candidate {c} out of range");
        if c % 2 == 1 {
            return self.values[c / 2];
        }
        let j = c / 2;
        match (j, m) {
            (_, 0) => 0.0,
            (0, _) => self.values[0] - 1.0,
            (j, m) if j == m => self.values[m - 1] + 1.0,
            (j, _) => 0.5 * (self.values[j - 1] + self.values[j]),
        }
    }

    /// Weights of the original scores merged onto the unique values.
    pub fn masses(&self, weights: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.values.len()];
        for (r, w) in self.rank.iter().zip(weights) {
            mass[*r] += w;
        }
        mass
    }
}

/// Smoothed weighted p-value at every candidate position, from merged
/// masses. Suffix sums keep the profile monotone in floating point.
pub fn pvalue_profile(grid: &ScoreGrid, mass: &[f64], test_weight: f64, u: f64) -> Vec<f64> {
    let m = grid.unique();
    let mut above = vec![0.0; m + 1];
    for j in (0..m).rev() {
        above[j] = above[j + 1] + mass[j];
    }
    (0..=2 * m)
        .map(|c| {
            let j = c / 2;
            if c % 2 == 0 {
                above[j] + u * test_weight
            } else {
                above[j + 1] + u * (mass[j] + test_weight)
            }
        })
        .collect()
}

/// Inverts a nonincreasing p-value given at the candidate positions into
/// the set `{s : p(s) > alpha}`.
pub fn threshold_from_pvalue_sweep(grid: &ScoreGrid, alpha: f64, mut pvalue: impl FnMut(usize) -> f64) -> Threshold {
    let m = grid.unique();
    let top = (0..=2 * m).rev().find(|&c| pvalue(c) > alpha + TOL);
    match top {
        None => Threshold::Empty,
        Some(c) if c == 2 * m => Threshold::Full,
        Some(c) if c % 2 == 1 => Threshold::Closed(grid.values[c / 2]),
        Some(c) => Threshold::Open(grid.values[c / 2]),
    }
}

/// Index of the `ceil((1 - alpha)(n + 1))`-th order statistic, or `None`
/// when it exceeds `n`.
pub fn split_rank(n: usize, alpha: f64) -> Option<usize> {
    let k = ((1.0 - alpha) * (n + 1) as f64 - 1e-9).ceil().max(1.0) as usize;
    (k <= n).then_some(k)
}
