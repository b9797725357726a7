//! Methods whose p-value is a weighted count of calibration scores:
//! split CP, weighted CP, baseLCP, RLCP and m-RLCP.

use rand::Rng;

use super::{check_alpha, draw_u, Calibration, MethodOutput};
use crate::error::{LcpError, Result};
use crate::kernel::Kernel;
use crate::predset::{PredictionSet, Threshold};
use crate::wdist::{pvalue_profile, split_rank, ScoreGrid};

/// Split CP p-value from integer counts, `(#{s_i > s} + u (#{s_i = s} + 1)) / (n + 1)`.
fn uniform_profile(cal: &Calibration, u: f64) -> Vec<f64> {
    let grid = cal.grid();
    let m = grid.unique();
    let mut count = vec![0usize; m];
    for i in 0..cal.len() {
        count[grid.rank(i)] += 1;
    }
    let denom = (cal.len() + 1) as f64;
    let mut above = vec![0usize; m + 1];
    for j in (0..m).rev() {
        above[j] = above[j + 1] + count[j];
    }
    (0..=2 * m)
        .map(|c| {
            let j = c / 2;
            if c % 2 == 0 {
                (above[j] as f64 + u) / denom
            } else {
                (above[j + 1] as f64 + u * (count[j] + 1) as f64) / denom
            }
        })
        .collect()
}

/// Weighted p-value profile; `weights` covers the `n` calibration points
/// followed by the test point.
fn weighted_profile(grid: &ScoreGrid, weights: &[f64], u: f64) -> Vec<f64> {
    let (cal_w, test_w) = weights.split_at(weights.len() - 1);
    pvalue_profile(grid, &grid.masses(cal_w), test_w[0], u)
}

/// Profile of a set that accepts everything: the anchor carries no
/// calibration weight, so all mass sits on the `+inf` atom.
fn isolated_profile(grid: &ScoreGrid) -> Vec<f64> {
    vec![1.0; grid.candidates()]
}

fn anchored_weights(cal: &Calibration, x: &[f64], kernel: &Kernel, anchor: &[f64]) -> Result<Option<Vec<f64>>> {
    let centers = cal.data().rows().chain(std::iter::once(x));
    match kernel.weights_at(centers, anchor) {
        Ok(w) => Ok(Some(w)),
        Err(LcpError::AnchorIsolated) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn split_cp<R: Rng + ?Sized>(
    cal: &Calibration,
    x: &[f64],
    alpha: f64,
    smoothed: bool,
    rng: &mut R,
) -> Result<MethodOutput> {
    check_alpha(alpha)?;
    let center = cal.score_function().center(x)?;
    let u = draw_u(smoothed, rng);
    let pvalues = uniform_profile(cal, u);
    let mut out = MethodOutput::from_profile(cal, center, alpha, pvalues);
    if smoothed {
        out.u = Some(u);
    } else {
        // the order-statistic form, which the sweep reproduces
        let threshold = match split_rank(cal.len(), alpha) {
            Some(k) => Threshold::Closed(cal.order_statistic(k)),
            None => Threshold::Full,
        };
        out.prediction = PredictionSet::new(threshold, center, alpha);
    }
    Ok(out)
}

/// Weighted CP under covariate shift with likelihood ratio `ratio`,
/// evaluated at the calibration features and at `x`.
pub fn weighted_cp<R: Rng + ?Sized>(
    cal: &Calibration,
    x: &[f64],
    ratio: impl Fn(&[f64]) -> f64,
    alpha: f64,
    smoothed: bool,
    rng: &mut R,
) -> Result<MethodOutput> {
    check_alpha(alpha)?;
    let center = cal.score_function().center(x)?;
    let mut weights: Vec<f64> = cal.data().rows().chain(std::iter::once(x)).map(&ratio).collect();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(LcpError::contract("likelihood ratio must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(LcpError::AnchorIsolated);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let u = draw_u(smoothed, rng);
    let pvalues = weighted_profile(cal.grid(), &weights, u);
    let mut out = MethodOutput::from_profile(cal, center, alpha, pvalues);
    out.u = smoothed.then_some(u);
    Ok(out)
}

/// Weighted quantile anchored at the test point itself.
pub fn base_lcp<R: Rng + ?Sized>(
    cal: &Calibration,
    x: &[f64],
    kernel: &Kernel,
    alpha: f64,
    smoothed: bool,
    rng: &mut R,
) -> Result<MethodOutput> {
    check_alpha(alpha)?;
    let center = cal.score_function().center(x)?;
    let u = draw_u(smoothed, rng);
    let pvalues = match anchored_weights(cal, x, kernel, x)? {
        Some(w) => weighted_profile(cal.grid(), &w, u),
        None => isolated_profile(cal.grid()),
    };
    let mut out = MethodOutput::from_profile(cal, center, alpha, pvalues);
    out.u = smoothed.then_some(u);
    Ok(out)
}

/// RLCP at a given prototype and smoothing draw. Equivalent to weighted CP
/// with likelihood ratio `H(., prototype)`.
pub fn rlcp_with_prototype(
    cal: &Calibration,
    x: &[f64],
    kernel: &Kernel,
    prototype: &[f64],
    alpha: f64,
    u: f64,
) -> Result<MethodOutput> {
    check_alpha(alpha)?;
    let center = cal.score_function().center(x)?;
    let pvalues = rlcp_profile(cal, x, kernel, prototype, u)?;
    let mut out = MethodOutput::from_profile(cal, center, alpha, pvalues);
    out.prototype = Some(prototype.to_vec());
    Ok(out)
}

fn rlcp_profile(cal: &Calibration, x: &[f64], kernel: &Kernel, prototype: &[f64], u: f64) -> Result<Vec<f64>> {
    Ok(match anchored_weights(cal, x, kernel, prototype)? {
        Some(w) => weighted_profile(cal.grid(), &w, u),
        None => isolated_profile(cal.grid()),
    })
}

/// Randomly localized CP: anchor the weights at a prototype drawn from
/// `H(x, .)`. The prototype is drawn before the smoothing variable.
pub fn rlcp<R: Rng + ?Sized>(
    cal: &Calibration,
    x: &[f64],
    kernel: &Kernel,
    alpha: f64,
    smoothed: bool,
    rng: &mut R,
) -> Result<MethodOutput> {
    let prototype = kernel.sample(x, rng)?;
    let u = draw_u(smoothed, rng);
    let mut out = rlcp_with_prototype(cal, x, kernel, &prototype, alpha, u)?;
    out.u = smoothed.then_some(u);
    Ok(out)
}

/// Averages `m` RLCP p-value functions, each with its own prototype and,
/// when smoothed, its own `U`. Draws happen in the same order as `m`
/// successive [`rlcp`] calls, so `m = 1` reproduces RLCP exactly.
#[allow(clippy::too_many_arguments)]
pub fn m_rlcp<R: Rng + ?Sized>(
    cal: &Calibration,
    x: &[f64],
    kernel: &Kernel,
    alpha: f64,
    m: usize,
    smoothed: bool,
    rng: &mut R,
) -> Result<MethodOutput> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(LcpError::contract("m-RLCP needs m >= 1"));
    }
    let center = cal.score_function().center(x)?;
    let mut sum = vec![0.0; cal.grid().candidates()];
    let mut first = None;
    for _ in 0..m {
        let prototype = kernel.sample(x, rng)?;
        let u = draw_u(smoothed, rng);
        let profile = rlcp_profile(cal, x, kernel, &prototype, u)?;
        sum.iter_mut().zip(&profile).for_each(|(s, p)| *s += p);
        first.get_or_insert((prototype, u));
    }
    let pvalues = sum.into_iter().map(|s| s / m as f64).collect();
    let mut out = MethodOutput::from_profile(cal, center, alpha, pvalues);
    let (prototype, u) = first.expect("m >= 1");
    out.prototype = Some(prototype);
    out.u = smoothed.then_some(u);
    Ok(out)
}
