//! Special functions and the goodness-of-fit helpers used by the
//! Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Upper 5% point of the standard normal.
pub const Z_95: f64 = 1.644_853_626_951_472_2;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal parameters are valid")
}

/// `ln V_d`, the log-volume of the unit Euclidean ball in `R^d`.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    half * std::f64::consts::PI.ln() - ln_gamma(half + 1.0)
}

/// CDF of the chi-square distribution with `d` degrees of freedom.
pub fn chi2_cdf(x: f64, d: usize) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(d as f64 / 2.0, x / 2.0)
    }
}

/// Median of chi-square(d), by bisection on the regularized lower
/// incomplete gamma function to an absolute tolerance of `1e-10`.
pub fn chi2_median(d: usize) -> f64 {
    assert!(d >= 1, "chi-square needs at least one degree of freedom");
    let mut lo = 0.0;
    let mut hi = d as f64 + 10.0;
    while chi2_cdf(hi, d) < 0.5 {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, d) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Asymptotic Kolmogorov tail probability `P(K > lambda)`.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of `sample` against `cdf`.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    let en = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((en + 0.12 + 0.11 / en) * d),
    }
}

/// KS test of `sample` against Uniform[0, 1].
pub fn ks_uniform(sample: &[f64]) -> KsResult {
    ks_one_sample(sample, |x| x.clamp(0.0, 1.0))
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = ((na * nb) as f64 / (na + nb) as f64).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d),
    }
}

/// Pearson chi-square goodness-of-fit p-value for observed bin counts
/// against expected counts, with `bins - 1` degrees of freedom.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat)
}

/// Sample median; `+inf` entries sort last. Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty sample");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            0.5 * (a + b)
        }
    }
}

/// Empirical quantile at `p` by the inverse-CDF (type 1) rule.
pub fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    v[k - 1]
}
