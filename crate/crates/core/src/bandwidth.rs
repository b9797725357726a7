//! Effective sample size of a localization kernel and bandwidth calibration.
//!
//! ```text
//! n_eff(h) = n E[ E[H(X, X') | X]^2 ] / E[ H(X, X')^2 ]
//! ```
//!
//! with both expectations replaced by averages over a pretraining sample.
//! The prototype variant replaces `X'` by `X~' ~ H(X', .)`, matching the
//! weights RLCP actually uses.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LcpError, Result};
use crate::kernel::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeffVariant {
    /// Partners are pretraining points.
    Plain,
    /// Partners are prototypes drawn around pretraining points.
    Prototype,
}

impl FromStr for NeffVariant {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(NeffVariant::Plain),
            "prototype" => Ok(NeffVariant::Prototype),
            _ => Err(LcpError::parse(s, "expected `plain` or `prototype`")),
        }
    }
}

impl fmt::Display for NeffVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeffVariant::Plain => write!(f, "plain"),
            NeffVariant::Prototype => write!(f, "prototype"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffSampleEstimate {
    /// Bandwidth, `None` for kernels without one.
    pub h: Option<f64>,
    pub n_eff: f64,
    pub variant: NeffVariant,
    /// Kernel evaluations averaged (pairs times repetitions).
    pub mc_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeffOptions {
    /// The `n` in front of the ratio; defaults to the pretraining size.
    pub sample_size: Option<usize>,
    /// Prototype redraws averaged by the prototype variant.
    pub repetitions: usize,
    /// Up to this many points every ordered pair is used.
    pub all_pairs_limit: usize,
    /// Pair budget for larger samples, spread evenly over anchors.
    pub max_pairs: usize,
}

impl Default for NeffOptions {
    fn default() -> Self {
        Self {
            sample_size: None,
            repetitions: 5,
            all_pairs_limit: 2000,
            max_pairs: 2_000_000,
        }
    }
}

/// Pretraining points plus the random quantities held fixed while the
/// bandwidth varies: partner subsamples and prototype noise.
struct NeffProblem<'a> {
    data: &'a Dataset,
    partners: Option<Vec<Vec<usize>>>,
    noise: Vec<Vec<Vec<f64>>>,
    variant: NeffVariant,
    sample_size: f64,
}

struct AnchorSums {
    max: f64,
    s1: f64,
    s2: f64,
    count: usize,
}

impl<'a> NeffProblem<'a> {
    fn new<R: Rng + ?Sized>(
        data: &'a Dataset,
        template: &Kernel,
        variant: NeffVariant,
        options: &NeffOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let n = data.len();
        if n < 2 {
            return Err(LcpError::contract("effective sample size needs at least 2 points"));
        }
        if template.dim() != data.dim() {
            return Err(LcpError::DimensionMismatch {
                expected: data.dim(),
                got: template.dim(),
            });
        }
        if variant == NeffVariant::Prototype && options.repetitions == 0 {
            return Err(LcpError::contract("prototype variant needs at least one repetition"));
        }
        let partners = (n > options.all_pairs_limit).then(|| {
            let per_anchor = (options.max_pairs / n).max(1);
            (0..n)
                .map(|i| {
                    (0..per_anchor)
                        .map(|_| {
                            // uniform over j != i
                            let j = rng.random_range(0..n - 1);
                            if j >= i {
                                j + 1
                            } else {
                                j
                            }
                        })
                        .collect()
                })
                .collect()
        });
        let noise = match variant {
            NeffVariant::Plain => Vec::new(),
            NeffVariant::Prototype => (0..options.repetitions)
                .map(|_| (0..n).map(|_| template.draw_noise(rng)).collect())
                .collect(),
        };
        Ok(Self {
            data,
            partners,
            noise,
            variant,
            sample_size: options.sample_size.unwrap_or(n) as f64,
        })
    }

    fn partners_of(&self, i: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        match &self.partners {
            Some(p) => Box::new(p[i].iter().copied()),
            None => Box::new((0..self.data.len()).filter(move |&j| j != i)),
        }
    }

    fn anchor_sums(&self, kernel: &Kernel, i: usize, partner_points: &[Vec<f64>]) -> AnchorSums {
        let anchor = self.data.row(i);
        let logs: Vec<f64> = self
            .partners_of(i)
            .map(|j| kernel.log_shape(anchor, &partner_points[j]))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut s1, mut s2) = (0.0, 0.0);
        if max > f64::NEG_INFINITY {
            for l in &logs {
                let v = (l - max).exp();
                s1 += v;
                s2 += v * v;
            }
        }
        AnchorSums {
            max,
            s1,
            s2,
            count: logs.len(),
        }
    }

    fn estimate(&self, kernel: &Kernel) -> Result<EffSampleEstimate> {
        let n = self.data.len();
        let rows: Vec<Vec<f64>> = self.data.rows().map(|r| r.to_vec()).collect();
        let partner_sets: Vec<Vec<Vec<f64>>> = match self.variant {
            NeffVariant::Plain => vec![rows],
            NeffVariant::Prototype => self
                .noise
                .iter()
                .map(|rep| rows.iter().zip(rep).map(|(x, z)| kernel.apply_noise(x, z)).collect())
                .collect(),
        };
        let sums: Vec<AnchorSums> = partner_sets
            .iter()
            .flat_map(|points| {
                (0..n)
                    .into_par_iter()
                    .map(|i| self.anchor_sums(kernel, i, points))
                    .collect::<Vec<_>>()
            })
            .collect();

        let global = sums.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max);
        if global == f64::NEG_INFINITY {
            return Err(LcpError::BandwidthDegenerate(
                "every kernel value on the pretraining pairs is zero".into(),
            ));
        }
        let (mut inner_sq, mut h_sq, mut pairs) = (0.0, 0.0, 0usize);
        for s in &sums {
            let scale = (s.max - global).exp();
            let inner = s.s1 * scale / s.count as f64;
            inner_sq += inner * inner;
            h_sq += s.s2 * scale * scale;
            pairs += s.count;
        }
        let numerator = inner_sq / sums.len() as f64;
        let denominator = h_sq / pairs as f64;
        if denominator <= 0.0 || !denominator.is_finite() {
            return Err(LcpError::BandwidthDegenerate("second moment estimate is zero".into()));
        }
        Ok(EffSampleEstimate {
            h: kernel.bandwidth(),
            n_eff: self.sample_size * numerator / denominator,
            variant: self.variant,
            mc_pairs: pairs,
        })
    }

    /// Largest distance over the pairs in use.
    fn diameter(&self) -> f64 {
        (0..self.data.len())
            .map(|i| {
                let a = self.data.row(i);
                self.partners_of(i)
                    .map(|j| crate::kernel::sq_dist(a, self.data.row(j)))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Plug-in estimate of the effective sample size of `kernel` on the
/// pretraining features.
pub fn estimate_n_eff<R: Rng + ?Sized>(
    pretrain: &Dataset,
    kernel: &Kernel,
    variant: NeffVariant,
    options: &NeffOptions,
    rng: &mut R,
) -> Result<EffSampleEstimate> {
    NeffProblem::new(pretrain, kernel, variant, options, rng)?.estimate(kernel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSolution {
    pub h: f64,
    pub estimate: EffSampleEstimate,
    pub target: f64,
    pub bracket: Bracket,
    pub iterations: usize,
    /// The target was at or above the largest reachable value, so the top
    /// of the bracket was returned.
    pub saturated: bool,
}

/// Finds `h` with `n_eff(h)` within 1 of `target` by bisection on `log h`.
///
/// All evaluations share one set of partner subsamples and prototype noise,
/// which makes `n_eff` a deterministic function of `h`. The bracket
/// defaults to `[1e-3 D, D]` for the sample diameter `D`.
pub fn solve_bandwidth<R: Rng + ?Sized>(
    pretrain: &Dataset,
    family: &Kernel,
    target: f64,
    variant: NeffVariant,
    options: &NeffOptions,
    bracket: Option<Bracket>,
    rng: &mut R,
) -> Result<BandwidthSolution> {
    if family.bandwidth().is_none() {
        return Err(LcpError::contract("kernel family has no bandwidth to solve for"));
    }
    if !(target > 1.0 && target.is_finite()) {
        return Err(LcpError::contract(format!(
            "target effective sample size must exceed 1, got {target}"
        )));
    }
    let problem = NeffProblem::new(pretrain, family, variant, options, rng)?;
    let bracket = match bracket {
        Some(b) => b,
        None => {
            let diam = problem.diameter();
            if diam <= 0.0 {
                return Err(LcpError::BandwidthDegenerate("pretraining points all coincide".into()));
            }
            Bracket {
                lo: 1e-3 * diam,
                hi: diam,
            }
        }
    };
    if !(bracket.lo > 0.0 && bracket.lo < bracket.hi) {
        return Err(LcpError::contract("bandwidth bracket must satisfy 0 < lo < hi"));
    }
    let eval = |h: f64| problem.estimate(&family.with_bandwidth(h)?);
    let lo_est = eval(bracket.lo)?;
    let hi_est = eval(bracket.hi)?;
    if lo_est.n_eff > hi_est.n_eff {
        return Err(LcpError::BandwidthDegenerate(format!(
            "n_eff is not increasing over the bracket: {} at h={} but {} at h={}",
            lo_est.n_eff, bracket.lo, hi_est.n_eff, bracket.hi
        )));
    }
    let done = |est: &EffSampleEstimate, h: f64, iterations, saturated| BandwidthSolution {
        h,
        estimate: *est,
        target,
        bracket,
        iterations,
        saturated,
    };
    if (hi_est.n_eff - target).abs() <= 1.0 {
        return Ok(done(&hi_est, bracket.hi, 0, target >= problem.sample_size));
    }
    if hi_est.n_eff < target {
        if target >= problem.sample_size {
            return Ok(done(&hi_est, bracket.hi, 0, true));
        }
        return Err(LcpError::BandwidthDegenerate(format!(
            "target {target} is above n_eff {} at the top of the bracket h={}",
            hi_est.n_eff, bracket.hi
        )));
    }
    if (lo_est.n_eff - target).abs() <= 1.0 {
        return Ok(done(&lo_est, bracket.lo, 0, false));
    }
    if lo_est.n_eff > target {
        return Err(LcpError::BandwidthDegenerate(format!(
            "target {target} is below n_eff {} at the bottom of the bracket h={}",
            lo_est.n_eff, bracket.lo
        )));
    }

    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let mut best = (hi, hi_est);
    let mut iterations = 0;
    while hi - lo > 1e-4 * bracket.hi {
        iterations += 1;
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        let est = eval(mid)?;
        if (est.n_eff - target).abs() < (best.1.n_eff - target).abs() {
            best = (mid, est);
        }
        if (est.n_eff - target).abs() <= 1.0 {
            break;
        }
        if est.n_eff < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(&best.1, best.0, iterations, false))
}
