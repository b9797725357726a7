//! Coverage and width metrics over trial reports, plus the Monte Carlo
//! experiments built on them (prototype variability, training-conditional
//! miscoverage, covariate shift).
//!
//! Every metric is a deterministic function of the reports it is given.
//! Test points are pooled across trials unless stated otherwise.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LcpError, Result};
use crate::experiment::{simulate_trial, simulate_trial_with_test, SimulationConfig, TestRecord, TrialReport};
use crate::kernel::Kernel;
use crate::methods::{rlcp, Calibration, MethodConfig};
use crate::rng::{Purpose, StreamKey};
use crate::special::{chi2_median, empirical_quantile, median};

/// Regions with fewer pooled points than this are flagged as sparse.
pub const MIN_REGION_POINTS: usize = 50;
/// Balls with fewer pooled points than this are reported as missing.
pub const MIN_BALL_POINTS: usize = 20;

fn records(reports: &[TrialReport]) -> impl Iterator<Item = &TestRecord> {
    reports.iter().flat_map(|r| r.records.iter())
}

/// Pooled coverage with a standard error taken from the spread of
/// per-trial coverages (binomial when there is a single trial).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub coverage: f64,
    pub se: f64,
    pub points: usize,
    pub trials: usize,
}

impl CoverageEstimate {
    fn from_trials(per_trial: &[(usize, usize)]) -> Result<Self> {
        let points: usize = per_trial.iter().map(|t| t.1).sum();
        if points == 0 {
            return Err(LcpError::contract("coverage needs at least one test point"));
        }
        let covered: usize = per_trial.iter().map(|t| t.0).sum();
        let coverage = covered as f64 / points as f64;
        let rates: Vec<f64> = per_trial
            .iter()
            .filter(|t| t.1 > 0)
            .map(|&(c, n)| c as f64 / n as f64)
            .collect();
        let t = rates.len();
        let se = if t >= 2 {
            let mean = rates.iter().sum::<f64>() / t as f64;
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
            (var / t as f64).sqrt()
        } else {
            (coverage * (1.0 - coverage) / points as f64).sqrt()
        };
        Ok(Self {
            coverage,
            se,
            points,
            trials: per_trial.len(),
        })
    }
}

pub fn marginal_coverage(reports: &[TrialReport]) -> Result<CoverageEstimate> {
    if reports.is_empty() {
        return Err(LcpError::contract("marginal coverage needs at least one trial"));
    }
    let per_trial: Vec<_> = reports.iter().map(|r| (r.covered(), r.len())).collect();
    CoverageEstimate::from_trials(&per_trial)
}

/// A partition of feature space into labelled regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionSpec {
    Whole,
    /// `in` is the closed ball, `out` its complement.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `in` is `{ |x| <= tau }`, `out` its complement.
    NormSplit {
        tau: f64,
    },
    /// Cells `[i, i+1)` for `i` in `-3..=2` on each of the first three
    /// coordinates; anything else falls into `outside`.
    AxisBins,
    /// One region per level of an integer-coded column.
    Categorical {
        column: usize,
        levels: Vec<String>,
    },
}

const AXIS_LO: i64 = -3;
const AXIS_BINS: usize = 6;

impl RegionSpec {
    /// Norm split at the median radius of a standard `d`-variate normal.
    pub fn norm_split(d: usize) -> Self {
        RegionSpec::NormSplit {
            tau: chi2_median(d).sqrt(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            RegionSpec::Whole => vec!["all".into()],
            RegionSpec::Ball { .. } | RegionSpec::NormSplit { .. } => vec!["in".into(), "out".into()],
            RegionSpec::AxisBins => {
                let lo = |i: usize| AXIS_LO + i as i64;
                let mut out = Vec::with_capacity(AXIS_BINS.pow(3) + 1);
                for a in 0..AXIS_BINS {
                    for b in 0..AXIS_BINS {
                        for c in 0..AXIS_BINS {
                            out.push(format!("{}|{}|{}", lo(a), lo(b), lo(c)));
                        }
                    }
                }
                out.push("outside".into());
                out
            }
            RegionSpec::Categorical { levels, .. } => levels.clone(),
        }
    }

    /// Index into [`RegionSpec::labels`] of the region holding `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        let in_out = |inside: bool| if inside { 0 } else { 1 };
        match self {
            RegionSpec::Whole => Ok(0),
            RegionSpec::Ball { center, radius } => {
                if center.len() != x.len() {
                    return Err(LcpError::DimensionMismatch {
                        expected: center.len(),
                        got: x.len(),
                    });
                }
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                Ok(in_out(d2.sqrt() <= *radius))
            }
            RegionSpec::NormSplit { tau } => {
                let n2: f64 = x.iter().map(|v| v * v).sum();
                Ok(in_out(n2.sqrt() <= *tau))
            }
            RegionSpec::AxisBins => {
                if x.len() < 3 {
                    return Err(LcpError::contract("axis bins need at least three coordinates"));
                }
                let mut cell = 0;
                for &v in &x[..3] {
                    let f = v.floor();
                    let i = f as i64 - AXIS_LO;
                    if !v.is_finite() || i < 0 || i >= AXIS_BINS as i64 {
                        return Ok(AXIS_BINS.pow(3));
                    }
                    cell = cell * AXIS_BINS + i as usize;
                }
                Ok(cell)
            }
            RegionSpec::Categorical { column, levels } => {
                let v = *x.get(*column).ok_or_else(|| LcpError::DimensionMismatch {
                    expected: column + 1,
                    got: x.len(),
                })?;
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < levels.len() {
                    Ok(v as usize)
                } else {
                    Err(LcpError::contract(format!("category code {v} has no level")))
                }
            }
        }
    }
}

impl fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionSpec::Whole => write!(f, "whole"),
            RegionSpec::Ball { radius, .. } => write!(f, "ball:r={radius}"),
            RegionSpec::NormSplit { tau } => write!(f, "norm-split:tau={tau}"),
            RegionSpec::AxisBins => write!(f, "axis-bins"),
            RegionSpec::Categorical { column, .. } => write!(f, "categorical:column={column}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCoverage {
    pub label: String,
    pub points: usize,
    pub covered: usize,
    /// `None` when the region received no test points.
    pub coverage: Option<f64>,
    /// Fraction of all pooled test points falling in the region.
    pub mass: f64,
    /// Binomial standard error of `coverage`.
    pub se: Option<f64>,
    /// Fewer than [`MIN_REGION_POINTS`] points.
    pub sparse: bool,
}

pub fn conditional_coverage(reports: &[TrialReport], region: &RegionSpec) -> Result<Vec<RegionCoverage>> {
    let labels = region.labels();
    let mut counts = vec![(0usize, 0usize); labels.len()];
    let mut total = 0usize;
    for r in records(reports) {
        let i = region.locate(&r.x)?;
        counts[i].0 += usize::from(r.covered);
        counts[i].1 += 1;
        total += 1;
    }
    Ok(labels
        .into_iter()
        .zip(counts)
        .map(|(label, (covered, points))| {
            let coverage = (points > 0).then(|| covered as f64 / points as f64);
            RegionCoverage {
                label,
                points,
                covered,
                coverage,
                mass: if total > 0 { points as f64 / total as f64 } else { 0.0 },
                se: coverage.map(|c| (c * (1.0 - c) / points as f64).sqrt()),
                sparse: points < MIN_REGION_POINTS,
            }
        })
        .collect())
}

/// Mass-weighted sum of region coverages. On a partition this is the
/// pooled marginal coverage.
pub fn recombine(table: &[RegionCoverage]) -> f64 {
    let total: usize = table.iter().map(|r| r.points).sum();
    let covered: usize = table.iter().map(|r| r.covered).sum();
    covered as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub at: f64,
    pub points: usize,
    /// `None` when too few points fall in the window.
    pub coverage: Option<f64>,
}

/// Centers `-3.0, -2.9, ..., 3.0`.
pub fn default_local_grid() -> Vec<f64> {
    (-30..=30).map(|i| i as f64 / 10.0).collect()
}

/// Coverage over test points within `radius` of each center, for
/// one-dimensional features.
pub fn local_coverage_curve(reports: &[TrialReport], radius: f64, centers: &[f64]) -> Result<Vec<CurvePoint>> {
    let pts: Vec<(f64, bool)> = records(reports)
        .map(|r| {
            if r.x.len() != 1 {
                return Err(LcpError::DimensionMismatch {
                    expected: 1,
                    got: r.x.len(),
                });
            }
            Ok((r.x[0], r.covered))
        })
        .collect::<Result<_>>()?;
    Ok(centers
        .iter()
        .map(|&c| {
            let (mut n, mut k) = (0usize, 0usize);
            for &(x, cov) in &pts {
                if (x - c).abs() <= radius {
                    n += 1;
                    k += usize::from(cov);
                }
            }
            CurvePoint {
                at: c,
                points: n,
                coverage: (n >= MIN_BALL_POINTS).then(|| k as f64 / n as f64),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub at: f64,
    /// Closed lower edge of the window.
    pub lo: f64,
    /// Open upper edge; `+inf` when the window runs to the largest value.
    pub hi: f64,
    pub points: usize,
    pub coverage: f64,
    /// One side ran out of points and the other side was widened.
    pub boundary: bool,
}

/// Coverage in a window around each evaluation point holding `mass / 2`
/// of the pooled covariate values on either side.
///
/// Near the edges of the data a side may hold fewer points than asked
/// for; the shortfall is taken from the other side so every window keeps
/// the same size, and the point is flagged.
pub fn sliding_window_coverage(
    reports: &[TrialReport],
    covariate: usize,
    mass: f64,
    at: &[f64],
) -> Result<Vec<WindowPoint>> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(LcpError::contract(format!(
            "window mass must lie in (0, 1], got {mass}"
        )));
    }
    let mut pts: Vec<(f64, bool)> = records(reports)
        .map(|r| {
            r.x.get(covariate)
                .map(|&v| (v, r.covered))
                .ok_or(LcpError::DimensionMismatch {
                    expected: covariate + 1,
                    got: r.x.len(),
                })
        })
        .collect::<Result<_>>()?;
    if pts.is_empty() {
        return Err(LcpError::contract("sliding window needs at least one test point"));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let side = ((n as f64 * mass / 2.0).round() as usize).max(1);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for p in &pts {
        prefix.push(prefix.last().unwrap() + usize::from(p.1));
    }
    Ok(at
        .iter()
        .map(|&x| {
            let a = pts.partition_point(|p| p.0 < x);
            let want = (2 * side).min(n);
            let boundary = a < side || n - a < side;
            let below = a.min(want - (n - a).min(side));
            let above = want - below;
            let (start, end) = (a - below, a + above);
            let points = end - start;
            WindowPoint {
                at: x,
                lo: pts[start].0,
                hi: if end < n { pts[end].0 } else { f64::INFINITY },
                points,
                coverage: (prefix[end] - prefix[start]) as f64 / points as f64,
                boundary,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthStats {
    pub median: f64,
    /// `+inf` as soon as one interval is unbounded.
    pub mean: f64,
    pub fraction_infinite: f64,
    pub points: usize,
}

pub fn width_stats(reports: &[TrialReport]) -> Result<WidthStats> {
    let widths: Vec<f64> = records(reports).map(|r| r.width).collect();
    if widths.is_empty() {
        return Err(LcpError::contract("width statistics need at least one test point"));
    }
    let n = widths.len() as f64;
    Ok(WidthStats {
        median: median(&widths),
        mean: widths.iter().sum::<f64>() / n,
        fraction_infinite: widths.iter().filter(|w| w.is_infinite()).count() as f64 / n,
        points: widths.len(),
    })
}

/// MAD over median of the widths of deterministic RLCP intervals when only
/// the prototype is redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationEstimate {
    pub d: f64,
    /// Standard error across datasets (0 with a single dataset).
    pub se: f64,
    pub used: usize,
    /// Points whose median width was zero or infinite.
    pub excluded: usize,
}

/// Per-point ratios for one fixed calibration set. Returns the sum of the
/// ratios, the number of points used and the number excluded.
pub fn deviation_ratios(
    cal: &Calibration,
    kernel: &Kernel,
    alpha: f64,
    test_x: &[Vec<f64>],
    n_redraws: usize,
    key: StreamKey,
) -> Result<(f64, usize, usize)> {
    if n_redraws < 30 {
        return Err(LcpError::contract(format!("need at least 30 redraws, got {n_redraws}")));
    }
    let ratios = test_x
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let mut rng = key.at_point(j as u64).stream(Purpose::Redraw);
            let widths = (0..n_redraws)
                .map(|_| rlcp(cal, x, kernel, alpha, false, &mut rng).map(|o| o.threshold().residual_width()))
                .collect::<Result<Vec<_>>>()?;
            let med = median(&widths);
            if !(med > 0.0 && med.is_finite()) {
                return Ok(None);
            }
            let dev: Vec<f64> = widths.iter().map(|w| (w - med).abs()).collect();
            let mad = median(&dev);
            Ok(mad.is_finite().then_some(mad / med))
        })
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<f64> = ratios.iter().flatten().copied().collect();
    Ok((used.iter().sum(), used.len(), ratios.len() - used.len()))
}

/// Estimates the expected MAD/median ratio of RLCP widths over `trials`
/// simulated datasets, using the first `n_points` test features of each.
pub fn deviation_d(
    cfg: &SimulationConfig,
    bandwidth: f64,
    alpha: f64,
    n_redraws: usize,
    n_points: usize,
    trials: u64,
    seed: u64,
) -> Result<DeviationEstimate> {
    let kernel = Kernel::gaussian(bandwidth, cfg.setting.dim())?;
    let mut per_dataset = Vec::new();
    let (mut used, mut excluded) = (0, 0);
    for t in 0..trials {
        let sim = simulate_trial(cfg, seed, t)?;
        let xs: Vec<Vec<f64>> = sim.test.rows().take(n_points).map(<[f64]>::to_vec).collect();
        let (sum, u, e) = deviation_ratios(
            &sim.calibration,
            &kernel,
            alpha,
            &xs,
            n_redraws,
            StreamKey::new(seed, t, 0),
        )?;
        used += u;
        excluded += e;
        if u > 0 {
            per_dataset.push(sum / u as f64);
        }
    }
    if per_dataset.is_empty() {
        return Err(LcpError::contract("every test point was excluded"));
    }
    let k = per_dataset.len() as f64;
    let d = per_dataset.iter().sum::<f64>() / k;
    let se = if per_dataset.len() > 1 {
        (per_dataset.iter().map(|v| (v - d).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        0.0
    };
    Ok(DeviationEstimate { d, se, used, excluded })
}

/// How prediction sets are formed in the training-conditional experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Procedure {
    Conformal(MethodConfig),
    /// The true conditional central interval; ignores the data.
    Oracle,
    /// The whole real line.
    FullSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConditional {
    /// Miscoverage over fresh test points, one entry per training set.
    pub miscoverage: Vec<f64>,
}

impl TrainingConditional {
    pub fn quantile(&self, p: f64) -> f64 {
        empirical_quantile(&self.miscoverage, p)
    }
}

pub fn training_conditional_estimate(
    cfg: &SimulationConfig,
    procedure: &Procedure,
    trials: u64,
    seed: u64,
) -> Result<TrainingConditional> {
    if cfg.n_test < 1000 {
        return Err(LcpError::contract(format!(
            "need at least 1000 test points per trial, got {}",
            cfg.n_test
        )));
    }
    if trials == 0 {
        return Err(LcpError::contract("need at least one trial"));
    }
    let miscoverage = (0..trials)
        .map(|t| {
            let sim = simulate_trial(cfg, seed, t)?;
            let n = sim.test.len() as f64;
            let missed = match procedure {
                Procedure::Conformal(m) => {
                    let rep = sim.run(m, seed)?;
                    rep.len() - rep.covered()
                }
                Procedure::Oracle => (0..sim.test.len())
                    .filter(|&i| !cfg.setting.oracle_interval(sim.test.row(i)).contains(sim.test.y(i)))
                    .count(),
                Procedure::FullSet => 0,
            };
            Ok(missed as f64 / n)
        })
        .collect::<Result<_>>()?;
    Ok(TrainingConditional { miscoverage })
}

/// Trains on the untilted law and tests on draws tilted by `g <= bound`.
pub fn covariate_shift_coverage(
    cfg: &SimulationConfig,
    g: impl Fn(&[f64]) -> f64 + Copy,
    bound: f64,
    method: &MethodConfig,
    trials: u64,
    seed: u64,
) -> Result<(CoverageEstimate, Vec<TrialReport>)> {
    let reports = (0..trials)
        .map(|t| {
            let mut rng = StreamKey::new(seed, t, 0).stream(Purpose::Tilt);
            let test = cfg.setting.sample_tilted(g, bound, cfg.n_test, &mut rng)?;
            simulate_trial_with_test(cfg, seed, t, test)?.run(method, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((marginal_coverage(&reports)?, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::Method;
    use crate::predset::Threshold;

    fn record(x: Vec<f64>, covered: bool, width: f64) -> TestRecord {
        TestRecord {
            x,
            y: 0.0,
            center: 0.0,
            threshold: if width.is_infinite() {
                Threshold::Full
            } else {
                Threshold::Closed(width / 2.0)
            },
            covered,
            width,
            pvalue: 0.5,
            prototype: None,
        }
    }

    fn report(trial: u64, records: Vec<TestRecord>) -> TrialReport {
        TrialReport {
            trial,
            method: MethodConfig::new(Method::Split, 0.1, None, true).unwrap(),
            records,
        }
    }

    fn line(n: usize, covered: impl Fn(usize) -> bool) -> TrialReport {
        let recs = (0..n)
            .map(|i| record(vec![-3.0 + 6.0 * i as f64 / n as f64], covered(i), 1.0))
            .collect();
        report(0, recs)
    }

    #[test]
    fn marginal_trivial() {
        assert_eq!(marginal_coverage(&[line(100, |_| true)]).unwrap().coverage, 1.0);
        assert_eq!(marginal_coverage(&[line(100, |_| false)]).unwrap().coverage, 0.0);
        assert!(marginal_coverage(&[]).is_err());
    }

    #[test]
    fn between_trial_se() {
        let a = report(0, (0..10).map(|i| record(vec![0.0], i < 8, 1.0)).collect());
        let b = report(1, (0..10).map(|i| record(vec![0.0], i < 6, 1.0)).collect());
        let est = marginal_coverage(&[a, b]).unwrap();
        assert!((est.coverage - 0.7).abs() < 1e-12);
        // rates 0.8 and 0.6: sd = 0.1414, se = 0.1
        assert!((est.se - 0.1).abs() < 1e-12);
    }

    #[test]
    fn whole_region_equals_marginal() {
        let reps = [line(300, |i| i % 3 != 0)];
        let t = conditional_coverage(&reps, &RegionSpec::Whole).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].coverage, Some(marginal_coverage(&reps).unwrap().coverage));
    }

    #[test]
    fn tau_one_dimension() {
        match RegionSpec::norm_split(1) {
            RegionSpec::NormSplit { tau } => assert!((tau - 0.6745).abs() < 1e-4),
            _ => unreachable!(),
        }
    }

    #[test]
    fn empty_region_is_missing() {
        let reps = [line(100, |_| true)];
        let ball = RegionSpec::Ball {
            center: vec![50.0],
            radius: 0.1,
        };
        let t = conditional_coverage(&reps, &ball).unwrap();
        assert_eq!(t[0].coverage, None);
        assert_eq!(t[1].coverage, Some(1.0));
    }

    #[test]
    fn axis_bins_partition() {
        let spec = RegionSpec::AxisBins;
        assert_eq!(spec.labels().len(), 217);
        assert_eq!(spec.locate(&[-3.0, -3.0, -3.0, 9.0]).unwrap(), 0);
        assert_eq!(spec.labels()[spec.locate(&[-1.0, 0.5, 2.99]).unwrap()], "-1|0|2");
        assert_eq!(spec.locate(&[3.0, 0.0, 0.0]).unwrap(), 216);
        assert_eq!(spec.locate(&[-3.01, 0.0, 0.0]).unwrap(), 216);
        assert!(spec.locate(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn categorical_regions() {
        let spec = RegionSpec::Categorical {
            column: 0,
            levels: vec!["M".into(), "F".into(), "I".into()],
        };
        assert_eq!(spec.locate(&[2.0, 5.0]).unwrap(), 2);
        assert!(spec.locate(&[3.0]).is_err());
        assert!(spec.locate(&[0.5]).is_err());
    }

    #[test]
    fn local_curve_homogeneous() {
        let reps = [line(6000, |i| i % 10 != 0)];
        let curve = local_coverage_curve(&reps, 0.4, &default_local_grid()).unwrap();
        assert_eq!(curve.len(), 61);
        for p in &curve {
            let c = p.coverage.unwrap();
            let se = (0.09 / p.points as f64).sqrt();
            assert!((c - 0.9).abs() <= 4.0 * se, "{p:?}");
        }
        let far = local_coverage_curve(&reps, 0.4, &[10.0]).unwrap();
        assert_eq!(far[0].points, 0);
        assert_eq!(far[0].coverage, None);
    }

    #[test]
    fn local_curve_rejects_multivariate() {
        let reps = [report(0, vec![record(vec![0.0, 1.0], true, 1.0)])];
        assert!(local_coverage_curve(&reps, 0.4, &[0.0]).is_err());
    }

    #[test]
    fn window_full_mass_is_marginal() {
        let reps = [line(200, |i| i % 4 != 0)];
        let marg = marginal_coverage(&reps).unwrap().coverage;
        for p in sliding_window_coverage(&reps, 0, 1.0, &[-3.0, -1.0, 0.0, 2.5, 5.0]).unwrap() {
            assert_eq!(p.points, 200);
            assert!((p.coverage - marg).abs() < 1e-15);
        }
    }

    #[test]
    fn window_on_uniform_grid() {
        // 10_000 evenly spaced values in [0, 1)
        let recs = (0..10_000)
            .map(|i| record(vec![(i as f64 + 0.5) / 10_000.0], true, 1.0))
            .collect();
        let reps = [report(0, recs)];
        let w = sliding_window_coverage(&reps, 0, 0.05, &[0.5, 0.0]).unwrap();
        assert!(
            (w[0].lo - 0.475).abs() < 1e-3 && (w[0].hi - 0.525).abs() < 1e-3,
            "{:?}",
            w[0]
        );
        assert!(!w[0].boundary);
        assert_eq!(w[0].points, 500);
        assert_eq!(w[0].coverage, 1.0);
        assert!(w[1].boundary);
        assert_eq!(w[1].points, 500);
    }

    #[test]
    fn width_statistics() {
        let reps = [report(0, (0..5).map(|_| record(vec![0.0], true, 2.4)).collect())];
        let w = width_stats(&reps).unwrap();
        assert_eq!(w.median, 2.4);
        assert_eq!(w.fraction_infinite, 0.0);
        let reps = [report(
            0,
            vec![record(vec![0.0], true, 1.0), record(vec![0.0], true, f64::INFINITY)],
        )];
        let w = width_stats(&reps).unwrap();
        assert!(w.fraction_infinite > 0.0);
        assert!(w.mean.is_infinite());
    }

    #[test]
    fn deviation_zero_for_flat_kernel() {
        let cfg = SimulationConfig {
            n_pretrain: 100,
            n_cal: 100,
            n_test: 20,
            ..SimulationConfig::new("setting1".parse().unwrap())
        };
        let sim = simulate_trial(&cfg, 1, 0).unwrap();
        let xs: Vec<Vec<f64>> = sim.test.rows().map(<[f64]>::to_vec).collect();
        let flat = Kernel::flat(-10.0, 10.0, 1).unwrap();
        let (sum, used, excluded) =
            deviation_ratios(&sim.calibration, &flat, 0.1, &xs, 30, StreamKey::new(1, 0, 0)).unwrap();
        assert_eq!(sum, 0.0);
        assert_eq!(used + excluded, 20);
        assert!(deviation_ratios(&sim.calibration, &flat, 0.1, &xs, 29, StreamKey::new(1, 0, 0)).is_err());
    }

    #[test]
    fn training_conditional_trivial_procedures() {
        let cfg = SimulationConfig {
            n_pretrain: 100,
            n_cal: 100,
            n_test: 4000,
            ..SimulationConfig::new("setting1".parse().unwrap())
        };
        let full = training_conditional_estimate(&cfg, &Procedure::FullSet, 3, 2).unwrap();
        assert!(full.miscoverage.iter().all(|&m| m == 0.0));
        let oracle = training_conditional_estimate(&cfg, &Procedure::Oracle, 5, 2).unwrap();
        for m in oracle.miscoverage {
            // binomial sd at n = 4000 is about 0.0047
            assert!((m - 0.1).abs() < 0.02, "{m}");
        }
        let small = SimulationConfig { n_test: 999, ..cfg };
        assert!(training_conditional_estimate(&small, &Procedure::Oracle, 1, 2).is_err());
    }
}
