//! Synthetic regression settings, base predictors and oracle intervals.
//!
//! Every setting draws `Y | X ~ N(mu(X), spread(X))`. Whether `spread` is a
//! standard deviation or a variance is a [`NoiseConvention`]; the default
//! reads it as a standard deviation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LcpError, Result};
use crate::parse::SpecString;
use crate::score::{KnnModel, Predictor, ScoreFunction};
use crate::special::{normal_pdf, Z_95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Setting {
    /// `X ~ N(0,1)`, spread `|sin X|`.
    Setting1,
    /// `X ~ N(0,1)`, spread `(4/3) phi(2X/3)`.
    Setting2,
    /// `X ~ N_d(0, I)`, spread `sum_i |sin X_i|`.
    MvSin { d: usize },
    /// `X ~ Uniform([-3,3]^d)`, spread `sum_i |sin X_i|`.
    Cube { d: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseConvention {
    #[default]
    StdDev,
    Variance,
}

impl FromStr for NoiseConvention {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stddev" | "std-dev" | "sd" => Ok(NoiseConvention::StdDev),
            "variance" | "var" => Ok(NoiseConvention::Variance),
            _ => Err(LcpError::parse(s, "expected `stddev` or `variance`")),
        }
    }
}

impl fmt::Display for NoiseConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseConvention::StdDev => write!(f, "stddev"),
            NoiseConvention::Variance => write!(f, "variance"),
        }
    }
}

/// A data-generating distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SettingSpec {
    pub setting: Setting,
    pub noise: NoiseConvention,
}

/// Central 90% interval of `Y | X = x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleInterval {
    pub lower: f64,
    pub upper: f64,
}

impl OracleInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

impl SettingSpec {
    pub fn new(setting: Setting) -> Result<Self> {
        if let Setting::MvSin { d: 0 } | Setting::Cube { d: 0 } = setting {
            return Err(LcpError::contract("dimension must be positive"));
        }
        Ok(Self {
            setting,
            noise: NoiseConvention::StdDev,
        })
    }

    pub fn with_noise(mut self, noise: NoiseConvention) -> Self {
        self.noise = noise;
        self
    }

    pub fn dim(&self) -> usize {
        match self.setting {
            Setting::Setting1 | Setting::Setting2 => 1,
            Setting::MvSin { d } | Setting::Cube { d } => d,
        }
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / 2.0
    }

    /// The second parameter of the conditional normal, before the
    /// convention is applied.
    pub fn spread(&self, x: &[f64]) -> f64 {
        match self.setting {
            Setting::Setting2 => 4.0 / 3.0 * normal_pdf(2.0 * x[0] / 3.0),
            _ => x.iter().map(|v| v.sin().abs()).sum(),
        }
    }

    /// Conditional standard deviation under the configured convention.
    pub fn sigma(&self, x: &[f64]) -> f64 {
        match self.noise {
            NoiseConvention::StdDev => self.spread(x),
            NoiseConvention::Variance => self.spread(x).sqrt(),
        }
    }

    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.setting {
            Setting::Cube { d } => {
                let unif = Uniform::new_inclusive(-3.0, 3.0).expect("valid range");
                (0..d).map(|_| rng.sample(unif)).collect()
            }
            _ => (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }

    pub fn sample_y<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean(x) + self.sigma(x) * z
    }

    /// `n` i.i.d. draws of `(X, Y)`.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        self.generate_with(n, rng, |s, r| Ok(s.sample_x(r)))
            .expect("untilted generation cannot fail")
    }

    fn generate_with<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        mut draw_x: impl FnMut(&Self, &mut R) -> Result<Vec<f64>>,
    ) -> Result<Dataset> {
        let d = self.dim();
        let mut features = Vec::with_capacity(n * d);
        let mut response = Vec::with_capacity(n);
        for _ in 0..n {
            let x = draw_x(self, rng)?;
            response.push(self.sample_y(&x, rng));
            features.extend(x);
        }
        Dataset::new(features, d, response)
    }

    /// `mu(x) -/+ z_0.95 sigma(x)`.
    pub fn oracle_interval(&self, x: &[f64]) -> OracleInterval {
        let mu = self.mean(x);
        let half = Z_95 * self.sigma(x);
        OracleInterval {
            lower: mu - half,
            upper: mu + half,
        }
    }

    /// Draws from `(P_X o g) x P_{Y|X}` by rejection: propose `X ~ P_X` and
    /// accept with probability `g(X) / bound`.
    pub fn sample_tilted<R: Rng + ?Sized>(
        &self,
        g: impl Fn(&[f64]) -> f64,
        bound: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<Dataset> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(LcpError::contract("tilt bound must be positive and finite"));
        }
        const CHECK_AFTER: u64 = 1_000_000;
        const MIN_RATE: f64 = 1e-4;
        let mut proposals = 0u64;
        let mut accepted = 0u64;
        self.generate_with(n, rng, |spec, r| loop {
            let x = spec.sample_x(r);
            proposals += 1;
            let gx = g(&x);
            if !(gx >= 0.0 && gx <= bound * (1.0 + 1e-12)) {
                return Err(LcpError::contract(format!("tilt g(x) = {gx} outside [0, {bound}]")));
            }
            if r.random::<f64>() * bound < gx {
                accepted += 1;
                return Ok(x);
            }
            if proposals >= CHECK_AFTER && (accepted as f64) < MIN_RATE * proposals as f64 {
                return Err(LcpError::TiltDegenerate(format!(
                    "{accepted} acceptances in {proposals} proposals"
                )));
            }
        })
    }
}

impl FromStr for SettingSpec {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        let setting = match spec.name.to_ascii_lowercase().as_str() {
            "setting1" => {
                spec.only(&[])?;
                Setting::Setting1
            }
            "setting2" => {
                spec.only(&[])?;
                Setting::Setting2
            }
            "mvsin" => {
                spec.only(&["d"])?;
                Setting::MvSin { d: spec.usize("d")? }
            }
            "cube" => {
                spec.only(&["d"])?;
                Setting::Cube { d: spec.usize("d")? }
            }
            other => return Err(spec.error(format!("unknown setting `{other}`"))),
        };
        SettingSpec::new(setting).map_err(|e| spec.error(e.to_string()))
    }
}

impl fmt::Display for SettingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.setting {
            Setting::Setting1 => write!(f, "setting1"),
            Setting::Setting2 => write!(f, "setting2"),
            Setting::MvSin { d } => write!(f, "mvsin:d={d}"),
            Setting::Cube { d } => write!(f, "cube:d={d}"),
        }
    }
}

/// Least squares with intercept.
///
/// Solves the centered normal equations with a ridge of `1e-8` times the
/// mean diagonal, followed by one refinement step toward the unridged
/// solution.
pub fn fit_linear(pretrain: &Dataset) -> Result<ScoreFunction> {
    let n = pretrain.len();
    let d = pretrain.dim();
    if n <= d {
        return Err(LcpError::contract(format!("linear fit needs n > d, got n={n}, d={d}")));
    }
    let mean_x: Vec<f64> = (0..d)
        .map(|j| pretrain.rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mean_y = pretrain.response().iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, d, |i, j| pretrain.row(i)[j] - mean_x[j]);
    let yc = DVector::from_fn(n, |i, _| pretrain.y(i) - mean_y);
    let gram = xc.transpose() * &xc;
    let rhs = xc.transpose() * &yc;
    let scale = gram.trace() / d as f64;
    let ridge = 1e-8 * if scale > 0.0 { scale } else { 1.0 };
    let mut reg = gram.clone();
    for j in 0..d {
        reg[(j, j)] += ridge;
    }
    let chol = reg
        .cholesky()
        .ok_or_else(|| LcpError::FitDegenerate("normal equations are not positive definite".into()))?;
    let mut beta = chol.solve(&rhs);
    // refine against the unregularized system to shed most of the ridge bias
    let residual = &rhs - &gram * &beta;
    beta += chol.solve(&residual);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(LcpError::FitDegenerate("non-finite coefficients".into()));
    }
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = mean_y - coefficients.iter().zip(&mean_x).map(|(b, m)| b * m).sum::<f64>();
    Ok(ScoreFunction::absolute_residual(Predictor::Linear {
        intercept,
        coefficients,
    }))
}

/// `k`-nearest-neighbour regression on standardized features.
pub fn fit_knn(pretrain: &Dataset, k: usize) -> Result<ScoreFunction> {
    let n = pretrain.len();
    if k == 0 || k > n {
        return Err(LcpError::contract(format!("k must lie in [1, {n}], got {k}")));
    }
    let d = pretrain.dim();
    let mean: Vec<f64> = (0..d)
        .map(|j| pretrain.rows().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = pretrain.rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let points = pretrain
        .rows()
        .flat_map(|r| {
            r.iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(ScoreFunction::absolute_residual(Predictor::Knn(Arc::new(KnnModel {
        k,
        dim: d,
        mean,
        scale,
        points,
        response: pretrain.response().to_vec(),
    }))))
}
