//! Localization kernels `H(x, x')`.
//!
//! Each kernel is a probability density in its second argument, so it can
//! both weight calibration points and generate synthetic prototypes. Every
//! kind factors as `H(x, x') = c * shape(x, x')` with a constant `c`; the
//! weight computations only ever need `shape`, evaluated in log space.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{LcpError, Result};
use crate::parse::SpecString;
use crate::special::ln_unit_ball_volume;

/// A kernel family and its bandwidth, independent of the feature schema.
///
/// String forms: `gaussian:h=0.4`, `box:h=1.5`, `productbox:h=0.05`,
/// `flat:lo=-3,hi=3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { h: f64 },
    Box { h: f64 },
    ProductBox { h: f64 },
    Flat { lo: f64, hi: f64 },
}

impl KernelSpec {
    pub fn bandwidth(&self) -> Option<f64> {
        match *self {
            KernelSpec::Gaussian { h } | KernelSpec::Box { h } | KernelSpec::ProductBox { h } => Some(h),
            KernelSpec::Flat { .. } => None,
        }
    }

    /// Same family at bandwidth `h`; flat kernels are returned unchanged.
    pub fn with_bandwidth(&self, h: f64) -> Self {
        match *self {
            KernelSpec::Gaussian { .. } => KernelSpec::Gaussian { h },
            KernelSpec::Box { .. } => KernelSpec::Box { h },
            KernelSpec::ProductBox { .. } => KernelSpec::ProductBox { h },
            flat @ KernelSpec::Flat { .. } => flat,
        }
    }

    /// Binds the family to a feature schema.
    pub fn bind(&self, dim: usize, categorical: &[bool]) -> Result<Kernel> {
        if categorical.len() != dim {
            return Err(LcpError::DimensionMismatch {
                expected: dim,
                got: categorical.len(),
            });
        }
        let kind = match *self {
            KernelSpec::Gaussian { h } => KernelKind::Gaussian { h },
            KernelSpec::Box { h } => KernelKind::Box { h },
            KernelSpec::ProductBox { h } => KernelKind::ProductBox { h: vec![h; dim] },
            KernelSpec::Flat { lo, hi } => KernelKind::Flat { lo, hi },
        };
        Kernel::from_parts(kind, dim, categorical.to_vec())
    }

    /// Binds to an all-numeric schema of dimension `dim`.
    pub fn bind_numeric(&self, dim: usize) -> Result<Kernel> {
        self.bind(dim, &vec![false; dim])
    }
}

impl FromStr for KernelSpec {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        let parsed = match spec.name.to_ascii_lowercase().as_str() {
            "gaussian" => {
                spec.only(&["h"])?;
                KernelSpec::Gaussian { h: spec.f64("h")? }
            }
            "box" => {
                spec.only(&["h"])?;
                KernelSpec::Box { h: spec.f64("h")? }
            }
            "productbox" => {
                spec.only(&["h"])?;
                KernelSpec::ProductBox { h: spec.f64("h")? }
            }
            "flat" => {
                spec.only(&["lo", "hi"])?;
                KernelSpec::Flat {
                    lo: spec.f64("lo")?,
                    hi: spec.f64("hi")?,
                }
            }
            other => return Err(spec.error(format!("unknown kernel `{other}`"))),
        };
        validate_spec(&parsed).map_err(|e| spec.error(e.to_string()))?;
        Ok(parsed)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { h } => write!(f, "gaussian:h={h}"),
            KernelSpec::Box { h } => write!(f, "box:h={h}"),
            KernelSpec::ProductBox { h } => write!(f, "productbox:h={h}"),
            KernelSpec::Flat { lo, hi } => write!(f, "flat:lo={lo},hi={hi}"),
        }
    }
}

fn validate_spec(spec: &KernelSpec) -> Result<()> {
    match *spec {
        KernelSpec::Flat { lo, hi } => check_support(lo, hi),
        _ => check_bandwidth(spec.bandwidth().unwrap_or(f64::NAN)),
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(LcpError::contract(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(LcpError::contract(format!(
            "flat kernel needs a bounded support lo < hi, got [{lo}, {hi}]"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum KernelKind {
    /// `(2 pi h^2)^{-d/2} exp(-|x - x'|^2 / 2h^2)`
    Gaussian { h: f64 },
    /// `1{|x - x'| <= h} / (V_d h^d)`
    Box { h: f64 },
    /// Uniform on `prod_j [x_j - h_j, x_j + h_j]` over numeric coordinates,
    /// with categorical coordinates required to match exactly.
    ProductBox { h: Vec<f64> },
    /// Constant density on `[lo, hi]^d`; the base measure is Lebesgue
    /// measure restricted to that box.
    Flat { lo: f64, hi: f64 },
}

/// A kernel bound to a feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
    dim: usize,
    categorical: Vec<bool>,
    log_norm: f64,
}

impl Kernel {
    fn from_parts(kind: KernelKind, dim: usize, categorical: Vec<bool>) -> Result<Self> {
        if dim == 0 {
            return Err(LcpError::contract("kernel dimension must be positive"));
        }
        let d = dim as f64;
        let numeric = categorical.iter().filter(|c| !**c).count() as f64;
        let log_norm = match &kind {
            KernelKind::Gaussian { h } => {
                check_bandwidth(*h)?;
                -0.5 * d * (2.0 * std::f64::consts::PI * h * h).ln()
            }
            KernelKind::Box { h } => {
                check_bandwidth(*h)?;
                -ln_unit_ball_volume(dim) - d * h.ln()
            }
            KernelKind::ProductBox { h } => {
                if h.len() != dim {
                    return Err(LcpError::DimensionMismatch {
                        expected: dim,
                        got: h.len(),
                    });
                }
                let mut acc = 0.0;
                for (hj, cat) in h.iter().zip(&categorical) {
                    if !cat {
                        check_bandwidth(*hj)?;
                        acc -= (2.0 * hj).ln();
                    }
                }
                acc
            }
            KernelKind::Flat { lo, hi } => {
                check_support(*lo, *hi)?;
                -numeric * (hi - lo).ln()
            }
        };
        Ok(Self {
            kind,
            dim,
            categorical,
            log_norm,
        })
    }

    pub fn gaussian(h: f64, dim: usize) -> Result<Self> {
        Self::from_parts(KernelKind::Gaussian { h }, dim, vec![false; dim])
    }

    pub fn ball(h: f64, dim: usize) -> Result<Self> {
        Self::from_parts(KernelKind::Box { h }, dim, vec![false; dim])
    }

    pub fn flat(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::from_parts(KernelKind::Flat { lo, hi }, dim, vec![false; dim])
    }

    /// Product box with one bandwidth per coordinate; entries at
    /// categorical coordinates are ignored.
    pub fn product_box(bandwidths: Vec<f64>, categorical: Vec<bool>) -> Result<Self> {
        let dim = bandwidths.len();
        if categorical.len() != dim {
            return Err(LcpError::DimensionMismatch {
                expected: dim,
                got: categorical.len(),
            });
        }
        Self::from_parts(KernelKind::ProductBox { h: bandwidths }, dim, categorical)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, KernelKind::Flat { .. })
    }

    /// Common bandwidth, if the kernel has one.
    pub fn bandwidth(&self) -> Option<f64> {
        match &self.kind {
            KernelKind::Gaussian { h } | KernelKind::Box { h } => Some(*h),
            KernelKind::ProductBox { h } => h.iter().zip(&self.categorical).find(|(_, c)| !**c).map(|(h, _)| *h),
            KernelKind::Flat { .. } => None,
        }
    }

    /// Same family and schema at bandwidth `h`.
    pub fn with_bandwidth(&self, h: f64) -> Result<Self> {
        let kind = match &self.kind {
            KernelKind::Gaussian { .. } => KernelKind::Gaussian { h },
            KernelKind::Box { .. } => KernelKind::Box { h },
            KernelKind::ProductBox { h: old } => KernelKind::ProductBox { h: vec![h; old.len()] },
            KernelKind::Flat { .. } => self.kind.clone(),
        };
        Self::from_parts(kind, self.dim, self.categorical.clone())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(LcpError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        }
    }

    /// `ln shape(x, x')`; `-inf` outside the support.
    #[inline]
    pub(crate) fn log_shape(&self, x: &[f64], xp: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::Gaussian { h } => -sq_dist(x, xp) / (2.0 * h * h),
            KernelKind::Box { h } => {
                if sq_dist(x, xp) <= h * h {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KernelKind::ProductBox { h } => {
                let inside = x
                    .iter()
                    .zip(xp)
                    .zip(h.iter().zip(&self.categorical))
                    .all(|((a, b), (hj, cat))| if *cat { a == b } else { (a - b).abs() <= *hj });
                if inside {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KernelKind::Flat { .. } => 0.0,
        }
    }

    /// Kernel value up to the family's normalizing constant.
    #[inline]
    pub(crate) fn shape(&self, x: &[f64], xp: &[f64]) -> f64 {
        self.log_shape(x, xp).exp()
    }

    /// Density value `H(x, x')`.
    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(xp)?;
        Ok((self.log_norm + self.log_shape(x, xp)).exp())
    }

    /// Draws the kernel's standard noise: a standard normal vector
    /// (gaussian), a uniform point of the unit ball (box), uniforms on
    /// `[-1, 1]` (product box) or uniforms on `[0, 1]` (flat).
    ///
    /// [`Kernel::apply_noise`] turns it into a draw from `H(x, .)`; keeping
    /// the two apart lets bandwidth searches reuse one noise realization.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            KernelKind::Gaussian { .. } => (0..self.dim).map(|_| rng.sample(StandardNormal)).collect(),
            KernelKind::Box { .. } => {
                let mut dir: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u: f64 = rng.random();
                let radius = u.powf(1.0 / self.dim as f64);
                let scale = if norm > 0.0 { radius / norm } else { 0.0 };
                dir.iter_mut().for_each(|v| *v *= scale);
                dir
            }
            KernelKind::ProductBox { .. } => {
                let unif = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
                (0..self.dim).map(|_| rng.sample(unif)).collect()
            }
            KernelKind::Flat { .. } => (0..self.dim).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// Maps standard noise to a point drawn from `H(x, .)`.
    pub fn apply_noise(&self, x: &[f64], noise: &[f64]) -> Vec<f64> {
        match &self.kind {
            KernelKind::Gaussian { h } | KernelKind::Box { h } => x.iter().zip(noise).map(|(a, z)| a + h * z).collect(),
            KernelKind::ProductBox { h } => x
                .iter()
                .zip(noise)
                .zip(h.iter().zip(&self.categorical))
                .map(|((a, z), (hj, cat))| if *cat { *a } else { a + hj * z })
                .collect(),
            KernelKind::Flat { lo, hi } => x
                .iter()
                .zip(noise)
                .zip(&self.categorical)
                .map(|((a, u), cat)| if *cat { *a } else { lo + (hi - lo) * u })
                .collect(),
        }
    }

    /// An exact draw from the density `H(x, .)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        self.check(x)?;
        let noise = self.draw_noise(rng);
        Ok(self.apply_noise(x, &noise))
    }

    /// Normalized weights `H(X_i, anchor) / sum_j H(X_j, anchor)`.
    ///
    /// Accumulated in log space with the largest exponent subtracted, so
    /// distant anchors at small bandwidths do not underflow to all zeros.
    /// A flat kernel yields the exactly uniform vector.
    pub fn weights_at<'a, I>(&self, centers: I, anchor: &[f64]) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        self.check(anchor)?;
        let mut logs = Vec::new();
        for c in centers {
            self.check(c)?;
            logs.push(self.log_shape(c, anchor));
        }
        if logs.is_empty() {
            return Err(LcpError::contract("weights_at needs at least one center"));
        }
        if self.is_flat() {
            let w = 1.0 / logs.len() as f64;
            return Ok(vec![w; logs.len()]);
        }
        normalize_log_weights(logs)
    }
}

/// Exponentiates and normalizes log-weights after subtracting their max.
pub(crate) fn normalize_log_weights(mut logs: Vec<f64>) -> Result<Vec<f64>> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(LcpError::AnchorIsolated);
    }
    let mut total = 0.0;
    for v in logs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logs.iter_mut() {
        *v /= total;
    }
    Ok(logs)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
