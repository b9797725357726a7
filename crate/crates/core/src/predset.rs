//! Prediction sets of the form `{y : s(x, y) <= q}`.

use serde::{Deserialize, Serialize};

/// Score threshold of a prediction set.
///
/// Inverting a step-function p-value can produce a set that stops just
/// short of a calibration score, so the open boundary is represented
/// explicitly rather than approximated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// No score is accepted.
    Empty,
    /// Scores `< q`.
    Open(f64),
    /// Scores `<= q`.
    Closed(f64),
    /// Every score is accepted (`q = +inf`).
    Full,
}

impl Threshold {
    pub fn accepts(&self, score: f64) -> bool {
        match *self {
            Threshold::Empty => false,
            Threshold::Open(q) => score < q,
            Threshold::Closed(q) => score <= q,
            Threshold::Full => true,
        }
    }

    /// Boundary value, `+inf` for the full set and `-inf` for the empty set.
    pub fn value(&self) -> f64 {
        match *self {
            Threshold::Empty => f64::NEG_INFINITY,
            Threshold::Open(q) | Threshold::Closed(q) => q,
            Threshold::Full => f64::INFINITY,
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Threshold::Full)
    }

    /// Lebesgue measure of `{y : |y - c| <= q}` (or `< q`).
    pub fn residual_width(&self) -> f64 {
        match *self {
            Threshold::Empty => 0.0,
            Threshold::Open(q) | Threshold::Closed(q) => 2.0 * q.max(0.0),
            Threshold::Full => f64::INFINITY,
        }
    }

    /// Short tag used in CSV output.
    pub fn kind(&self) -> &'static str {
        match self {
            Threshold::Empty => "empty",
            Threshold::Open(_) => "open",
            Threshold::Closed(_) => "closed",
            Threshold::Full => "full",
        }
    }
}

/// A residual-score prediction set at a test point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub threshold: Threshold,
    /// `f(x)` at the test point.
    pub center: f64,
    pub alpha: f64,
}

impl PredictionSet {
    pub fn new(threshold: Threshold, center: f64, alpha: f64) -> Self {
        Self {
            threshold,
            center,
            alpha,
        }
    }

    /// `y` is in the set iff `|y - f(x)|` passes the threshold. The
    /// boundary `|y - f(x)| = q` is included for closed thresholds.
    pub fn contains(&self, y: f64) -> bool {
        self.threshold.accepts((y - self.center).abs())
    }

    pub fn width(&self) -> f64 {
        self.threshold.residual_width()
    }

    /// Interval endpoints `[f(x) - q, f(x) + q]`; `None` for the empty set.
    pub fn interval(&self) -> Option<(f64, f64)> {
        match self.threshold {
            Threshold::Empty => None,
            t => {
                let q = t.value();
                Some((self.center - q, self.center + q))
            }
        }
    }
}
