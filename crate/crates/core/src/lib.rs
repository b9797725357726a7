//! Localized conformal prediction.
//!
//! Split and weighted conformal prediction, the two kernel-localized
//! variants (`baseLCP`, `calLCP`), randomly-localized conformal prediction
//! (RLCP) and its m-fold averaged form, together with the kernels,
//! bandwidth calibration, synthetic data generators and coverage metrics
//! needed to study them.
//!
//! Every stochastic operation takes its randomness from an explicit
//! [`rng::StreamKey`], so results never depend on evaluation order.

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod kernel;
pub mod methods;
mod parse;
pub mod predset;
pub mod real;
pub mod rng;
pub mod score;
pub mod simgen;
pub mod special;
pub mod wdist;

pub use data::Dataset;
pub use error::{LcpError, Result};
pub use kernel::{Kernel, KernelSpec};
pub use methods::{Method, MethodConfig};
pub use predset::{PredictionSet, Threshold};
pub use rng::{Purpose, RngStream, StreamKey};
pub use score::{Predictor, ScoreFunction};
pub use wdist::WeightedScoreDistribution;
