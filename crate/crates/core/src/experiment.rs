//! Running methods over test sets and simulated trials.
//!
//! Test point `j` of trial `t` draws its method randomness from the stream
//! `(seed, t, j, Method)`, so results do not depend on scheduling and two
//! methods that consume randomness the same way see the same draws.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LcpError, Result};
use crate::methods::{Calibration, Conformal, MethodConfig};
use crate::parse::SpecString;
use crate::predset::Threshold;
use crate::rng::{Purpose, StreamKey};
use crate::score::ScoreFunction;
use crate::simgen::{fit_knn, fit_linear, SettingSpec};

/// Outcome at one test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub x: Vec<f64>,
    pub y: f64,
    pub center: f64,
    pub threshold: Threshold,
    pub covered: bool,
    /// Length of the interval; `+inf` for the full set.
    pub width: f64,
    /// The method's p-value at the true response.
    pub pvalue: f64,
    pub prototype: Option<Vec<f64>>,
}

/// All test records of one method in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: u64,
    pub method: MethodConfig,
    pub records: Vec<TestRecord>,
}

impl TrialReport {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covered(&self) -> usize {
        self.records.iter().filter(|r| r.covered).count()
    }

    pub fn coverage(&self) -> f64 {
        self.covered() as f64 / self.len() as f64
    }
}

/// Runs a calibrated method on every point of `test`.
pub fn evaluate(conformal: &Conformal, test: &Dataset, key: StreamKey) -> Result<TrialReport> {
    let cal = conformal.calibration();
    let sf = cal.score_function();
    let records = (0..test.len())
        .into_par_iter()
        .map(|j| {
            let x = test.row(j);
            let y = test.y(j);
            let mut rng = key.at_point(j as u64).stream(Purpose::Method);
            let out = conformal.predict(x, &mut rng)?;
            let s = sf.score(x, y)?;
            let threshold = out.prediction.threshold;
            Ok(TestRecord {
                x: x.to_vec(),
                y,
                center: out.prediction.center,
                threshold,
                covered: threshold.accepts(s),
                width: threshold.residual_width(),
                pvalue: out.pvalue_at(cal, s),
                prototype: out.prototype,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialReport {
        trial: key.trial,
        method: conformal.config().clone(),
        records,
    })
}

/// Base regression model fitted on the pretraining split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum BasePredictor {
    Linear,
    Knn { k: usize },
}

impl BasePredictor {
    pub fn fit(&self, pretrain: &Dataset) -> Result<ScoreFunction> {
        match *self {
            BasePredictor::Linear => fit_linear(pretrain),
            BasePredictor::Knn { k } => fit_knn(pretrain, k),
        }
    }
}

impl FromStr for BasePredictor {
    type Err = LcpError;

    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        match spec.name.to_ascii_lowercase().as_str() {
            "linear" => {
                spec.only(&[])?;
                Ok(BasePredictor::Linear)
            }
            "knn" => {
                spec.only(&["k"])?;
                Ok(BasePredictor::Knn {
                    k: spec.usize_or("k", 25)?,
                })
            }
            other => Err(spec.error(format!("unknown predictor `{other}`"))),
        }
    }
}

impl fmt::Display for BasePredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasePredictor::Linear => write!(f, "linear"),
            BasePredictor::Knn { k } => write!(f, "knn:k={k}"),
        }
    }
}

/// Sizes and model for a simulated experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub setting: SettingSpec,
    pub n_pretrain: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub predictor: BasePredictor,
}

impl SimulationConfig {
    pub fn new(setting: SettingSpec) -> Self {
        Self {
            setting,
            n_pretrain: 2000,
            n_cal: 2000,
            n_test: 2000,
            predictor: BasePredictor::Linear,
        }
    }
}

/// Data of one simulated trial, with the score function already fitted.
#[derive(Debug, Clone)]
pub struct SimulatedTrial {
    pub trial: u64,
    pub pretrain: Dataset,
    pub calibration: Arc<Calibration>,
    pub test: Dataset,
}

pub fn simulate_trial(cfg: &SimulationConfig, seed: u64, trial: u64) -> Result<SimulatedTrial> {
    let key = StreamKey::new(seed, trial, 0);
    let test = cfg.setting.generate(cfg.n_test, &mut key.stream(Purpose::Test));
    simulate_trial_with_test(cfg, seed, trial, test)
}

/// Like [`simulate_trial`] but with a caller-supplied test set, e.g. one
/// drawn from a tilted feature law.
pub fn simulate_trial_with_test(
    cfg: &SimulationConfig,
    seed: u64,
    trial: u64,
    test: Dataset,
) -> Result<SimulatedTrial> {
    let key = StreamKey::new(seed, trial, 0);
    let pretrain = cfg.setting.generate(cfg.n_pretrain, &mut key.stream(Purpose::Pretrain));
    let cal = cfg.setting.generate(cfg.n_cal, &mut key.stream(Purpose::Calibration));
    let sf = cfg.predictor.fit(&pretrain)?;
    Ok(SimulatedTrial {
        trial,
        pretrain,
        calibration: Arc::new(Calibration::new(cal, sf)?),
        test,
    })
}

impl SimulatedTrial {
    pub fn run(&self, method: &MethodConfig, seed: u64) -> Result<TrialReport> {
        let conformal = Conformal::new(method.clone(), self.calibration.clone())?;
        evaluate(&conformal, &self.test, StreamKey::new(seed, self.trial, 0))
    }
}

/// Runs every method on trials `0..trials`; reports are grouped by method,
/// in trial order.
pub fn run_simulation(
    cfg: &SimulationConfig,
    methods: &[MethodConfig],
    seed: u64,
    trials: u64,
) -> Result<Vec<Vec<TrialReport>>> {
    let mut by_method = vec![Vec::with_capacity(trials as usize); methods.len()];
    for t in 0..trials {
        let sim = simulate_trial(cfg, seed, t)?;
        for (m, method) in methods.iter().enumerate() {
            by_method[m].push(sim.run(method, seed)?);
        }
    }
    Ok(by_method)
}
