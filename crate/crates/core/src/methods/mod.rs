//! Conformal procedures: split CP, weighted CP, baseLCP, calLCP, RLCP and
//! m-RLCP, each deterministic (`U = 1`) or smoothed (`U ~ Uniform[0,1]`).
//!
//! Every method is expressed as a nonincreasing p-value evaluated on the
//! calibration score grid and inverted by [`threshold_from_pvalue_sweep`].

mod callcp;
mod weighted;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LcpError, Result};
use crate::kernel::{Kernel, KernelSpec};
use crate::parse::SpecString;
use crate::predset::{PredictionSet, Threshold};
use crate::score::ScoreFunction;
use crate::wdist::{threshold_from_pvalue_sweep, ScoreGrid};

pub use callcp::{cal_lcp, CalLcpCache};
pub use weighted::{base_lcp, m_rlcp, rlcp, rlcp_with_prototype, split_cp, weighted_cp};

/// Which conformal procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Method {
    Split,
    Wcp,
    BaseLcp,
    CalLcp,
    Rlcp,
    MRlcp { m: usize },
}

impl Method {
    pub fn needs_kernel(&self) -> bool {
        !matches!(self, Method::Split | Method::Wcp)
    }

    /// Short name used in file output.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl FromStr for Method {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        let name = spec.name.to_ascii_lowercase();
        if name == "mrlcp" {
            spec.only(&["m"])?;
            let m = spec.usize_or("m", 10)?;
            if m == 0 {
                return Err(spec.error("m must be at least 1"));
            }
            return Ok(Method::MRlcp { m });
        }
        spec.only(&[])?;
        match name.as_str() {
            "split" => Ok(Method::Split),
            "wcp" => Ok(Method::Wcp),
            "baselcp" => Ok(Method::BaseLcp),
            "callcp" => Ok(Method::CalLcp),
            "rlcp" => Ok(Method::Rlcp),
            other => Err(spec.error(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Split => write!(f, "split"),
            Method::Wcp => write!(f, "wcp"),
            Method::BaseLcp => write!(f, "baselcp"),
            Method::CalLcp => write!(f, "callcp"),
            Method::Rlcp => write!(f, "rlcp"),
            Method::MRlcp { m } => write!(f, "mrlcp:m={m}"),
        }
    }
}

/// A method together with its level, kernel and smoothing flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub alpha: f64,
    pub kernel: Option<KernelSpec>,
    pub smoothed: bool,
}

impl MethodConfig {
    pub fn new(method: Method, alpha: f64, kernel: Option<KernelSpec>, smoothed: bool) -> Result<Self> {
        check_alpha(alpha)?;
        if method.needs_kernel() && kernel.is_none() {
            return Err(LcpError::contract(format!("method `{method}` needs a kernel")));
        }
        if let Method::MRlcp { m: 0 } = method {
            return Err(LcpError::contract("m-RLCP needs m >= 1"));
        }
        Ok(Self {
            method,
            alpha,
            kernel,
            smoothed,
        })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(LcpError::contract(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// Calibration data with its scores and score grid.
#[derive(Debug, Clone)]
pub struct Calibration {
    data: Dataset,
    sf: ScoreFunction,
    scores: Vec<f64>,
    sorted: Vec<f64>,
    grid: ScoreGrid,
}

impl Calibration {
    pub fn new(data: Dataset, sf: ScoreFunction) -> Result<Self> {
        if data.is_empty() {
            return Err(LcpError::contract("calibration set must be nonempty"));
        }
        let scores = sf.scores(&data)?;
        Ok(Self::from_scores(data, sf, scores))
    }

    fn from_scores(data: Dataset, sf: ScoreFunction, scores: Vec<f64>) -> Self {
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let grid = ScoreGrid::new(&scores);
        Self {
            data,
            sf,
            scores,
            sorted,
            grid,
        }
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn score_function(&self) -> &ScoreFunction {
        &self.sf
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn grid(&self) -> &ScoreGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `k`-th smallest score, 1-based.
    pub(crate) fn order_statistic(&self, k: usize) -> f64 {
        self.sorted[k - 1]
    }
}

/// Result of one method call at one test point.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub prediction: PredictionSet,
    /// First prototype drawn (RLCP and m-RLCP).
    pub prototype: Option<Vec<f64>>,
    /// First smoothing draw, when smoothed.
    pub u: Option<f64>,
    /// The p-value at every candidate position of the calibration grid.
    pub pvalues: Vec<f64>,
}

/// RLCP reports the prototype alongside the set.
pub type RlcpOutput = MethodOutput;

impl MethodOutput {
    pub(crate) fn from_profile(cal: &Calibration, center: f64, alpha: f64, pvalues: Vec<f64>) -> Self {
        let threshold = threshold_from_pvalue_sweep(cal.grid(), alpha, |c| pvalues[c]);
        Self {
            prediction: PredictionSet::new(threshold, center, alpha),
            prototype: None,
            u: None,
            pvalues,
        }
    }

    pub fn threshold(&self) -> Threshold {
        self.prediction.threshold
    }

    /// The method's p-value at test score `s`.
    pub fn pvalue_at(&self, cal: &Calibration, s: f64) -> f64 {
        self.pvalues[cal.grid().locate(s)]
    }
}

/// Likelihood ratio for weighted CP.
pub type LikelihoodRatio = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A method bound to a calibration set, ready to predict at test points.
#[derive(Clone)]
pub struct Conformal {
    config: MethodConfig,
    cal: Arc<Calibration>,
    kernel: Option<Kernel>,
    cal_cache: Option<Arc<CalLcpCache>>,
    ratio: Option<LikelihoodRatio>,
}

impl fmt::Debug for Conformal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Conformal")
            .field("config", &self.config)
            .field("n", &self.cal.len())
            .finish()
    }
}

impl Conformal {
    pub fn new(config: MethodConfig, cal: Arc<Calibration>) -> Result<Self> {
        let kernel = match &config.kernel {
            Some(spec) if config.method.needs_kernel() => Some(spec.bind(cal.data().dim(), cal.data().categorical())?),
            _ => None,
        };
        Self::with_kernel(config, cal, kernel)
    }

    /// Uses an already bound kernel, e.g. a product box with per-coordinate
    /// bandwidths.
    pub fn with_kernel(config: MethodConfig, cal: Arc<Calibration>, kernel: Option<Kernel>) -> Result<Self> {
        check_alpha(config.alpha)?;
        if config.method.needs_kernel() && kernel.is_none() {
            return Err(LcpError::contract(format!("method `{}` needs a kernel", config.method)));
        }
        let cal_cache = match (&config.method, &kernel) {
            (Method::CalLcp, Some(k)) => Some(Arc::new(CalLcpCache::new(&cal, k)?)),
            _ => None,
        };
        Ok(Self {
            config,
            cal,
            kernel,
            cal_cache,
            ratio: None,
        })
    }

    /// Likelihood ratio used by weighted CP; constant when not set.
    pub fn with_likelihood_ratio(mut self, ratio: LikelihoodRatio) -> Self {
        self.ratio = Some(ratio);
        self
    }

    pub fn config(&self) -> &MethodConfig {
        &self.config
    }

    pub fn calibration(&self) -> &Calibration {
        &self.cal
    }

    pub fn kernel(&self) -> Option<&Kernel> {
        self.kernel.as_ref()
    }

    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<MethodOutput> {
        let MethodConfig {
            method,
            alpha,
            smoothed,
            ..
        } = self.config;
        let cal = &*self.cal;
        match method {
            Method::Split => split_cp(cal, x, alpha, smoothed, rng),
            Method::Wcp => match &self.ratio {
                Some(ratio) => weighted_cp(cal, x, |z| ratio(z), alpha, smoothed, rng),
                None => weighted_cp(cal, x, |_| 1.0, alpha, smoothed, rng),
            },
            Method::BaseLcp => base_lcp(cal, x, self.bound_kernel(), alpha, smoothed, rng),
            Method::CalLcp => {
                let cache = self.cal_cache.as_ref().expect("calLCP cache is built with the method");
                cache.predict(cal, x, alpha, smoothed, rng)
            }
            Method::Rlcp => rlcp(cal, x, self.bound_kernel(), alpha, smoothed, rng),
            Method::MRlcp { m } => m_rlcp(cal, x, self.bound_kernel(), alpha, m, smoothed, rng),
        }
    }

    fn bound_kernel(&self) -> &Kernel {
        self.kernel.as_ref().expect("kernel methods are built with a kernel")
    }
}

pub(crate) fn draw_u<R: Rng + ?Sized>(smoothed: bool, rng: &mut R) -> f64 {
    if smoothed {
        rng.random()
    } else {
        1.0
    }
}
