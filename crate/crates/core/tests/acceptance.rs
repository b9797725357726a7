//! Acceptance suite.
//!
//! Exact oracle checks, Monte Carlo coverage experiments at desk scale and
//! an optional abalone run. Every check prints one verdict line, visible
//! with `cargo test --test acceptance -- --nocapture`.
//!
//! Set `LCP_ABALONE_CSV` to the abalone CSV to enable the real-data check.

use std::fmt::Display;
use std::sync::Arc;
use std::time::Instant;

use lcp_core::bandwidth::{solve_bandwidth, NeffOptions, NeffVariant};
use lcp_core::eval::{
    conditional_coverage, covariate_shift_coverage, deviation_d, marginal_coverage, recombine, RegionSpec,
};
use lcp_core::experiment::{simulate_trial, BasePredictor, SimulationConfig, TrialReport};
use lcp_core::methods::{base_lcp, cal_lcp, rlcp_with_prototype, split_cp, weighted_cp, Calibration, Conformal};
use lcp_core::real::{load_abalone, split_three, SEX_LEVELS};
use lcp_core::score::{Predictor, ScoreFunction};
use lcp_core::special::{ks_uniform, normal_cdf};
use lcp_core::wdist::WeightedScoreDistribution;
use lcp_core::{Dataset, Kernel, KernelSpec, Method, MethodConfig, Purpose, RngStream, StreamKey, Threshold};
use proptest::prelude::*;
use rand::Rng;

const ALPHA: f64 = 0.1;
/// Tie tolerance shared with the library's p-value conventions.
const TOL: f64 = 1e-12;

fn verdict(id: &str, name: &str, ok: bool, detail: impl Display) {
    println!("[{id}] {name}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "[{id}] {name} failed: {detail}");
}

fn rng(seed: u64, tag: u64) -> RngStream {
    RngStream::from_seed(seed, Purpose::Custom(tag))
}

fn method(m: Method, kernel: Option<KernelSpec>, smoothed: bool) -> MethodConfig {
    MethodConfig::new(m, ALPHA, kernel, smoothed).unwrap()
}

fn gaussian(h: f64) -> Option<KernelSpec> {
    Some(KernelSpec::Gaussian { h })
}

/// Small calibration set on `[-3, 3]^d` with responses rounded to a coarse
/// grid so that scores tie often; the predictor is the constant 0.
fn tied_calibration(r: &mut impl Rng, n: usize, d: usize) -> Calibration {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|_| (r.random_range(-4.0..4.0f64) * 2.0).round() / 2.0)
        .collect();
    let data = Dataset::from_rows(&rows, y).unwrap();
    Calibration::new(data, ScoreFunction::absolute_residual(Predictor::Constant(0.0))).unwrap()
}

/// Every candidate score: each calibration score, a point in each gap and
/// points outside the range.
fn probe_scores(cal: &Calibration) -> Vec<f64> {
    let g = cal.grid();
    (0..=g.candidates() - 1).map(|c| g.representative(c)).collect()
}

// ---------------------------------------------------------------------------
// exact oracles

/// Smallest score `t` with `sum_{s_i <= t} w_i >= level`, by rescanning all
/// points for every candidate.
fn brute_quantile(scores: &[f64], weights: &[f64], level: f64) -> f64 {
    let mut cands = scores.to_vec();
    cands.sort_by(f64::total_cmp);
    for &t in &cands {
        let cdf: f64 = scores
            .iter()
            .zip(weights)
            .filter(|(s, _)| **s <= t)
            .map(|(_, w)| w)
            .sum();
        if cdf >= level - TOL {
            return t;
        }
    }
    f64::INFINITY
}

#[test]
fn weighted_quantile_matches_cdf_scan() {
    let mut r = rng(11, 1);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = r.random_range(1..=50usize);
        let levels = r.random_range(1..=6u32);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 * 0.25).collect();
        let mut w: Vec<f64> = (0..=n)
            .map(|_| {
                if r.random::<f64>() < 0.15 {
                    0.0
                } else {
                    r.random::<f64>()
                }
            })
            .collect();
        w[n] += 1e-3;
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let dist = WeightedScoreDistribution::with_test_weight(scores.clone(), w.clone()).unwrap();
        // random levels plus levels sitting exactly on cumulative sums
        let mut qs: Vec<f64> = (0..3).map(|_| r.random_range(0.01..0.99)).collect();
        let k = r.random_range(0..n);
        qs.push(dist.cdf(scores[k]).clamp(0.01, 0.99));
        for q in qs {
            if dist.quantile(q).unwrap() != brute_quantile(&scores, &w[..n], q) {
                mismatches += 1;
            }
        }
        // set inversion against a direct p-value scan
        let alpha = r.random_range(0.02..0.6);
        let u = if r.random::<bool>() { 1.0 } else { r.random::<f64>() };
        let th = dist.threshold(alpha, u);
        let mut probes = scores.clone();
        probes.extend(scores.iter().map(|s| s + 0.125));
        probes.extend([-1.0, 100.0]);
        for s in probes {
            let above: f64 = scores.iter().zip(&w).filter(|(si, _)| **si > s).map(|(_, w)| w).sum();
            let tied: f64 = scores.iter().zip(&w).filter(|(si, _)| **si == s).map(|(_, w)| w).sum();
            let p = above + u * (tied + w[n]);
            if th.accepts(s) != (p > alpha + TOL) {
                mismatches += 1;
            }
        }
    }
    verdict(
        "1a",
        "weighted quantile vs brute-force CDF scan",
        mismatches == 0,
        format!("{mismatches} mismatches over 500 instances"),
    );
}

#[test]
fn flat_base_lcp_is_split_conformal() {
    let mut r = rng(12, 2);
    let mut mismatches = 0;
    for i in 0..200 {
        let n = r.random_range(1..=60usize);
        let d = r.random_range(1..=3usize);
        let cal = tied_calibration(&mut r, n, d);
        let flat = Kernel::flat(-10.0, 10.0, d).unwrap();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let alpha = r.random_range(0.02..0.5);
        for smoothed in [false, true] {
            let a = base_lcp(&cal, &x, &flat, alpha, smoothed, &mut rng(i, 20)).unwrap();
            let b = split_cp(&cal, &x, alpha, smoothed, &mut rng(i, 20)).unwrap();
            if a.threshold() != b.threshold() {
                mismatches += 1;
            }
        }
    }
    verdict(
        "1b",
        "baseLCP with a flat kernel equals split CP",
        mismatches == 0,
        format!("{mismatches} mismatches over 200 instances"),
    );
}

/// Full conformal prediction with the rank-based localized score map,
/// evaluated directly on the augmented data set. Returns whether test score
/// `s` is accepted.
fn full_cp_accepts(cal: &Calibration, x: &[f64], kernel: &Kernel, s: f64, alpha: f64, u: Option<f64>) -> bool {
    let n = cal.len();
    let xs: Vec<&[f64]> = cal.data().rows().chain(std::iter::once(x)).collect();
    let mut ss = cal.scores().to_vec();
    ss.push(s);
    let t: Vec<f64> = (0..=n)
        .map(|i| {
            let h: Vec<f64> = (0..=n).map(|j| kernel.eval(xs[j], xs[i]).unwrap()).collect();
            let num: f64 = (0..=n).filter(|&j| ss[j] < ss[i]).map(|j| h[j]).sum();
            num / h.iter().sum::<f64>()
        })
        .collect();
    let tn = t[n];
    match u {
        None => {
            // T_{n+1} <= Quantile_{1-alpha}(T_1, ..., T_{n+1})
            let mut sorted = t.clone();
            sorted.sort_by(f64::total_cmp);
            let k = ((1.0 - alpha) * (n + 1) as f64).ceil() as usize;
            tn <= sorted[k.clamp(1, n + 1) - 1] + TOL
        }
        Some(u) => {
            let gt = t.iter().filter(|&&ti| ti > tn + TOL).count() as f64;
            let eq = t.iter().filter(|&&ti| (ti - tn).abs() <= TOL).count() as f64;
            (gt + u * eq) / (n + 1) as f64 > alpha + TOL
        }
    }
}

#[test]
fn cal_lcp_is_full_conformal() {
    let mut r = rng(13, 3);
    let mut mismatches = 0;
    let mut checked = 0;
    for i in 0..200 {
        let n = r.random_range(1..=8usize);
        let d = r.random_range(1..=2usize);
        let cal = tied_calibration(&mut r, n, d);
        let kernel = Kernel::gaussian(r.random_range(0.3..3.0), d).unwrap();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let alpha = r.random_range(0.05..0.5);
        for smoothed in [false, true] {
            let mut stream = rng(i, 30);
            // calLCP draws nothing before its smoothing variable
            let u = smoothed.then(|| stream.clone().random::<f64>());
            let out = cal_lcp(&cal, &x, &kernel, alpha, smoothed, &mut stream).unwrap();
            for s in probe_scores(&cal) {
                checked += 1;
                if out.threshold().accepts(s) != full_cp_accepts(&cal, &x, &kernel, s, alpha, u) {
                    mismatches += 1;
                }
            }
        }
    }
    verdict(
        "1c",
        "calLCP equals full CP with the localized rank score",
        mismatches == 0,
        format!("{mismatches} mismatches over {checked} probes"),
    );
}

#[test]
fn one_fold_m_rlcp_is_rlcp() {
    let cfg = SimulationConfig {
        n_pretrain: 300,
        n_cal: 300,
        n_test: 200,
        ..SimulationConfig::new("mvsin:d=3".parse().unwrap())
    };
    let sim = simulate_trial(&cfg, 5, 0).unwrap();
    let mut identical = true;
    for smoothed in [false, true] {
        let a = sim.run(&method(Method::Rlcp, gaussian(0.8), smoothed), 5).unwrap();
        let b = sim
            .run(&method(Method::MRlcp { m: 1 }, gaussian(0.8), smoothed), 5)
            .unwrap();
        identical &= format!("{:?}", a.records) == format!("{:?}", b.records);
    }
    verdict(
        "1d",
        "m-RLCP with m = 1 reproduces RLCP",
        identical,
        "200 test points, smoothed and deterministic",
    );
}

#[test]
fn pinned_rlcp_is_weighted_cp() {
    let mut r = rng(14, 4);
    let mut mismatches = 0;
    for i in 0..200 {
        let n = r.random_range(1..=60usize);
        let d = r.random_range(1..=3usize);
        let cal = tied_calibration(&mut r, n, d);
        let h = r.random_range(0.3..3.0);
        let kernel = if r.random::<bool>() {
            Kernel::gaussian(h, d).unwrap()
        } else {
            Kernel::ball(h, d).unwrap()
        };
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let proto = kernel.sample(&x, &mut r).unwrap();
        let alpha = r.random_range(0.02..0.5);
        for smoothed in [false, true] {
            let mut stream = rng(i, 40);
            let u = if smoothed { stream.clone().random::<f64>() } else { 1.0 };
            let ratio = |z: &[f64]| kernel.eval(z, &proto).unwrap();
            let w = weighted_cp(&cal, &x, ratio, alpha, smoothed, &mut stream).unwrap();
            let p = rlcp_with_prototype(&cal, &x, &kernel, &proto, alpha, u).unwrap();
            if w.threshold() != p.threshold() {
                mismatches += 1;
            }
        }
    }
    verdict(
        "1e",
        "RLCP at a pinned prototype equals weighted CP",
        mismatches == 0,
        format!("{mismatches} mismatches over 200 instances"),
    );
}

// ---------------------------------------------------------------------------
// Monte Carlo checks

#[test]
fn smoothed_pvalues_are_uniform() {
    let start = Instant::now();
    let setting = "setting1".parse().unwrap();
    let cfg = SimulationConfig {
        n_pretrain: 2000,
        n_cal: 200,
        n_test: 1,
        ..SimulationConfig::new(setting)
    };
    let seed = 2024;
    let sf = BasePredictor::Linear
        .fit(&setting.generate(
            cfg.n_pretrain,
            &mut StreamKey::new(seed, 0, 0).stream(Purpose::Pretrain),
        ))
        .unwrap();
    let methods = [
        ("WCP(const)", method(Method::Wcp, None, true)),
        (
            "baseLCP-flat",
            method(Method::BaseLcp, Some(KernelSpec::Flat { lo: -10.0, hi: 10.0 }), true),
        ),
        ("RLCP", method(Method::Rlcp, gaussian(0.4), true)),
        ("calLCP", method(Method::CalLcp, gaussian(0.4), true)),
    ];
    let draws = 5000u64;
    let mut pvals = vec![Vec::with_capacity(draws as usize); methods.len()];
    for t in 0..draws {
        let key = StreamKey::new(seed, t, 0);
        let cal = setting.generate(cfg.n_cal, &mut key.stream(Purpose::Calibration));
        let test = setting.generate(1, &mut key.stream(Purpose::Test));
        let cal = Arc::new(Calibration::new(cal, sf.clone()).unwrap());
        let (x, y) = (test.row(0), test.y(0));
        let s = sf.score(x, y).unwrap();
        for (k, (_, m)) in methods.iter().enumerate() {
            let conformal = Conformal::new(m.clone(), cal.clone()).unwrap();
            let out = conformal.predict(x, &mut key.stream(Purpose::Method)).unwrap();
            pvals[k].push(out.pvalue_at(&cal, s));
        }
    }
    let results: Vec<(&str, f64)> = methods
        .iter()
        .zip(&pvals)
        .map(|((name, _), p)| (*name, ks_uniform(p).p_value))
        .collect();
    let ok = results.iter().all(|(_, p)| *p > 0.01);
    let detail = results
        .iter()
        .map(|(n, p)| format!("{n} KS p={p:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        "2",
        "smoothed p-values are uniform",
        ok,
        format!("{detail}; {:.0?}", start.elapsed()),
    );
}

fn univariate(setting: &str, n: usize) -> SimulationConfig {
    SimulationConfig {
        n_pretrain: n,
        n_cal: n,
        n_test: n,
        ..SimulationConfig::new(setting.parse().unwrap())
    }
}

/// Runs every method over `trials` simulated trials, one data draw per
/// trial shared by all methods.
fn run_all(cfg: &SimulationConfig, methods: &[MethodConfig], trials: u64, seed: u64) -> Vec<Vec<TrialReport>> {
    let mut out = vec![Vec::new(); methods.len()];
    for t in 0..trials {
        let sim = simulate_trial(cfg, seed, t).unwrap();
        for (k, m) in methods.iter().enumerate() {
            out[k].push(sim.run(m, seed).unwrap());
        }
    }
    out
}

#[test]
fn marginal_coverage_univariate() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut valid_ok = true;
    let mut base_max_dev: f64 = 0.0;
    for setting in ["setting1", "setting2"] {
        let cfg = univariate(setting, 2000);
        for h in [0.1, 0.4, 1.6] {
            let ms = [
                method(Method::Rlcp, gaussian(h), true),
                method(Method::CalLcp, gaussian(h), true),
                method(Method::BaseLcp, gaussian(h), true),
            ];
            let reps = run_all(&cfg, &ms, 20, 31);
            let cov: Vec<f64> = reps.iter().map(|r| marginal_coverage(r).unwrap().coverage).collect();
            valid_ok &= (cov[0] - 0.9).abs() <= 0.01 && (cov[1] - 0.9).abs() <= 0.01;
            base_max_dev = base_max_dev.max((cov[2] - 0.9).abs());
            lines.push(format!(
                "{setting} h={h}: RLCP {:.4} calLCP {:.4} baseLCP {:.4}",
                cov[0], cov[1], cov[2]
            ));
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    let ok = valid_ok && base_max_dev > 0.01;
    verdict(
        "3",
        "marginal coverage, univariate settings",
        ok,
        format!(
            "RLCP/calLCP within 0.010: {valid_ok}; baseLCP max |dev| {base_max_dev:.4}; {:.0?}",
            start.elapsed()
        ),
    );
}

/// Bandwidth with the given effective sample size on trial 0's pretraining
/// set.
fn solved_bandwidth(cfg: &SimulationConfig, seed: u64, variant: NeffVariant, target: f64) -> f64 {
    let pre = simulate_trial(cfg, seed, 0).unwrap().pretrain;
    let options = NeffOptions {
        sample_size: Some(cfg.n_cal),
        ..NeffOptions::default()
    };
    let family = Kernel::gaussian(1.0, cfg.setting.dim()).unwrap();
    let mut stream = StreamKey::new(seed, 0, 0).stream(Purpose::Bandwidth);
    solve_bandwidth(&pre, &family, target, variant, &options, None, &mut stream)
        .unwrap()
        .h
}

fn in_out(reps: &[TrialReport], d: usize) -> (f64, f64) {
    let t = conditional_coverage(reps, &RegionSpec::norm_split(d)).unwrap();
    (t[0].coverage.unwrap(), t[1].coverage.unwrap())
}

#[test]
fn ball_conditional_coverage_multivariate() {
    let start = Instant::now();
    let seed = 41;
    let mut rlcp_ok = true;
    let mut lines = Vec::new();
    let mut dev_at_20 = (0.0, 0.0);
    for d in [10usize, 20] {
        let cfg = univariate(&format!("mvsin:d={d}"), 2000);
        let h_rlcp = solved_bandwidth(&cfg, seed, NeffVariant::Prototype, 50.0);
        let h_cal = solved_bandwidth(&cfg, seed, NeffVariant::Plain, 50.0);
        let ms = [
            method(Method::Rlcp, gaussian(h_rlcp), true),
            method(Method::CalLcp, gaussian(h_cal), true),
        ];
        let reps = run_all(&cfg, &ms, 20, seed);
        let (ri, ro) = in_out(&reps[0], d);
        let (ci, co) = in_out(&reps[1], d);
        rlcp_ok &= (ri - 0.9).abs() <= 0.02 && (ro - 0.9).abs() <= 0.02;
        let rdev = (ri - 0.9).abs().max((ro - 0.9).abs());
        let cdev = (ci - 0.9).abs().max((co - 0.9).abs());
        if d == 20 {
            dev_at_20 = (rdev, cdev);
        }
        lines.push(format!(
            "d={d}: RLCP h={h_rlcp:.3} in {ri:.4} out {ro:.4}; calLCP h={h_cal:.3} in {ci:.4} out {co:.4}"
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    let ok = rlcp_ok && dev_at_20.1 > dev_at_20.0;
    verdict(
        "4",
        "ball-conditional coverage, multivariate setting",
        ok,
        format!(
            "RLCP within 0.02: {rlcp_ok}; d=20 max dev RLCP {:.4} calLCP {:.4}; {:.0?}",
            dev_at_20.0,
            dev_at_20.1,
            start.elapsed()
        ),
    );
}

#[test]
fn coverage_under_covariate_shift() {
    let start = Instant::now();
    let seed = 51;
    let cfg = univariate("setting1", 2000);
    let m = method(Method::Rlcp, gaussian(0.4), true);

    // indicator tilt vs coverage restricted to the same set
    let inside = |x: &[f64]| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 };
    let ball = RegionSpec::Ball {
        center: vec![0.0],
        radius: 1.0,
    };
    let plain = run_all(&cfg, std::slice::from_ref(&m), 20, seed).remove(0);
    let cond = &conditional_coverage(&plain, &ball).unwrap()[0];
    // match the expected number of in-set points per trial
    let matched = SimulationConfig {
        n_test: (cond.points as f64 / 20.0).round() as usize,
        ..cfg
    };
    let (tilted, _) = covariate_shift_coverage(&matched, inside, 1.0, &m, 20, seed).unwrap();
    let c1 = cond.coverage.unwrap();
    let se = (c1 * (1.0 - c1) / cond.points as f64 + tilted.coverage * (1.0 - tilted.coverage) / tilted.points as f64)
        .sqrt();
    let gap = (c1 - tilted.coverage).abs();
    let equiv_ok = gap <= 2.0 * se;

    // Lipschitz tilt at a small bandwidth
    let lip = method(Method::Rlcp, gaussian(0.1), true);
    let (phi, _) = covariate_shift_coverage(&cfg, |x| normal_cdf(x[0]), 1.0, &lip, 20, seed).unwrap();
    let lip_ok = phi.coverage >= 0.88;

    verdict(
        "5",
        "coverage under covariate shift",
        equiv_ok && lip_ok,
        format!(
            "indicator: conditional {c1:.4} vs tilted {:.4} (|gap| {gap:.4}, 2 SE {:.4}); Phi tilt h=0.1: {:.4}; {:.0?}",
            tilted.coverage,
            2.0 * se,
            phi.coverage,
            start.elapsed()
        ),
    );
}

#[test]
fn m_rlcp_overcovers() {
    // pinned reduced scale: 1000 calibration and test points, 10 trials
    let start = Instant::now();
    let seed = 61;
    let cfg = SimulationConfig {
        n_pretrain: 2000,
        n_cal: 1000,
        n_test: 1000,
        ..SimulationConfig::new("mvsin:d=10".parse().unwrap())
    };
    let h = solved_bandwidth(&cfg, seed, NeffVariant::Prototype, 50.0);
    let ms: Vec<MethodConfig> = [1, 10, 50]
        .into_iter()
        .map(|m| method(Method::MRlcp { m }, gaussian(h), true))
        .collect();
    let reps = run_all(&cfg, &ms, 10, seed);
    let cov: Vec<f64> = reps.iter().map(|r| marginal_coverage(r).unwrap().coverage).collect();
    let ok = cov[1..].iter().all(|&c| c >= 0.9 && c >= cov[0] + 0.01);
    verdict(
        "6",
        "m-RLCP is conservative",
        ok,
        format!(
            "h={h:.3}; coverage m=1 {:.4}, m=10 {:.4}, m=50 {:.4}; {:.0?}",
            cov[0],
            cov[1],
            cov[2],
            start.elapsed()
        ),
    );
}

#[test]
fn prototype_variability() {
    let start = Instant::now();
    let cfg = univariate("setting1", 2000);
    let small = deviation_d(&cfg, 0.1, ALPHA, 100, 200, 10, 71).unwrap();
    let large = deviation_d(&cfg, 1.6, ALPHA, 100, 200, 10, 71).unwrap();
    let ok = (0.05..=0.15).contains(&small.d) && large.d < small.d;
    verdict(
        "7",
        "RLCP width variability D(h)",
        ok,
        format!(
            "D(0.1) = {:.4} +/- {:.4} ({} excluded), D(1.6) = {:.4} +/- {:.4}; {:.0?}",
            small.d,
            small.se,
            small.excluded,
            large.d,
            large.se,
            start.elapsed()
        ),
    );
}

#[test]
fn abalone_coverage() {
    let Some(path) = std::env::var_os("LCP_ABALONE_CSV").filter(|p| std::path::Path::new(p).is_file()) else {
        println!("[8] abalone coverage: SKIP | set LCP_ABALONE_CSV to the abalone CSV to run");
        return;
    };
    let start = Instant::now();
    let data = load_abalone(&path).unwrap();
    let third = 1.0 / 3.0;
    let hs = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
    let splits = 20u64;
    let mut marg_ok = true;
    let mut sex_ok = true;
    let mut lines = Vec::new();
    let sexes = RegionSpec::Categorical {
        column: 0,
        levels: SEX_LEVELS.iter().map(|s| s.to_string()).collect(),
    };
    let mut reports = vec![vec![Vec::new(); 2]; hs.len()];
    for t in 0..splits {
        let key = StreamKey::new(8, t, 0);
        let split = split_three(&data, [third; 3], &mut key.stream(Purpose::Split)).unwrap();
        let sf = BasePredictor::Linear.fit(&split.pretrain).unwrap();
        let cal = Arc::new(Calibration::new(split.calibration.clone(), sf).unwrap());
        for (k, &h) in hs.iter().enumerate() {
            let kernel = KernelSpec::ProductBox { h }
                .bind(data.dim(), data.categorical())
                .unwrap();
            for (j, m) in [Method::Rlcp, Method::CalLcp].into_iter().enumerate() {
                let cfg = method(m, Some(KernelSpec::ProductBox { h }), true);
                let conformal = Conformal::with_kernel(cfg, cal.clone(), Some(kernel.clone())).unwrap();
                reports[k][j].push(lcp_core::experiment::evaluate(&conformal, &split.test, key).unwrap());
            }
        }
    }
    for (k, &h) in hs.iter().enumerate() {
        let r = marginal_coverage(&reports[k][0]).unwrap().coverage;
        let c = marginal_coverage(&reports[k][1]).unwrap().coverage;
        marg_ok &= (r - 0.9).abs() <= 0.01 && (c - 0.9).abs() <= 0.01;
        let by_sex = conditional_coverage(&reports[k][0], &sexes).unwrap();
        let sex_cov: Vec<f64> = by_sex.iter().map(|g| g.coverage.unwrap_or(f64::NAN)).collect();
        sex_ok &= sex_cov.iter().all(|c| (c - 0.9).abs() <= 0.03);
        lines.push(format!(
            "h={h}: RLCP {r:.4} calLCP {c:.4}; RLCP by sex M {:.4} F {:.4} I {:.4}",
            sex_cov[0], sex_cov[1], sex_cov[2]
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    verdict(
        "8",
        "abalone coverage",
        marg_ok && sex_ok,
        format!(
            "marginal within 0.01: {marg_ok}; sex-conditional within 0.03: {sex_ok}; {:.0?}",
            start.elapsed()
        ),
    );
}

// ---------------------------------------------------------------------------
// accounting identity

fn accounting_holds(reps: &[TrialReport], region: &RegionSpec) -> bool {
    let table = conditional_coverage(reps, region).unwrap();
    let marginal = marginal_coverage(reps).unwrap().coverage;
    let covered: usize = reps.iter().map(TrialReport::covered).sum();
    let weighted: f64 = table.iter().filter_map(|r| r.coverage.map(|c| c * r.mass)).sum();
    table.iter().map(|r| r.covered).sum::<usize>() == covered
        && recombine(&table) == marginal
        && (weighted - marginal).abs() <= 1e-12
}

#[test]
fn accounting_identity() {
    let mut checked = 0;
    let mut ok = true;
    for (k, m) in [Method::Split, Method::BaseLcp, Method::CalLcp, Method::Rlcp]
        .into_iter()
        .enumerate()
    {
        let cfg = univariate("mvsin:d=3", 500);
        let kernel = m.needs_kernel().then_some(KernelSpec::Gaussian { h: 0.8 });
        let reps = run_all(&cfg, &[method(m, kernel, true)], 3, 90 + k as u64).remove(0);
        for region in [
            RegionSpec::Whole,
            RegionSpec::norm_split(3),
            RegionSpec::AxisBins,
            RegionSpec::Ball {
                center: vec![0.0; 3],
                radius: 1.0,
            },
        ] {
            checked += 1;
            ok &= accounting_holds(&reps, &region);
        }
    }
    verdict(
        "9",
        "regional coverages recombine to marginal coverage",
        ok,
        format!("{checked} method/partition pairs"),
    );
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn regional_coverage_recombines(seed in 0u64..10_000, d in 3usize..6, which in 0usize..4, h in 0.3f64..2.0) {
        let cfg = SimulationConfig {
            n_pretrain: 200,
            n_cal: 150,
            n_test: 120,
            ..SimulationConfig::new(format!("mvsin:d={d}").parse().unwrap())
        };
        let m = match which {
            0 => method(Method::Split, None, true),
            1 => method(Method::BaseLcp, gaussian(h), true),
            2 => method(Method::CalLcp, gaussian(h), false),
            _ => method(Method::Rlcp, gaussian(h), true),
        };
        let reps = run_all(&cfg, &[m], 2, seed).remove(0);
        let regions = [
            RegionSpec::Whole,
            RegionSpec::norm_split(d),
            RegionSpec::AxisBins,
            RegionSpec::Ball { center: vec![0.5; d], radius: 1.5 },
        ];
        for region in &regions {
            prop_assert!(accounting_holds(&reps, region), "{region}");
        }
    }

    #[test]
    fn sets_are_nested_in_alpha(seed in 0u64..10_000, h in 0.2f64..2.0, a in 0.05f64..0.4, b in 0.05f64..0.4) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cfg = univariate("setting2", 120);
        let sim = simulate_trial(&cfg, seed, 0).unwrap();
        for m in [Method::Rlcp, Method::CalLcp, Method::BaseLcp, Method::Split] {
            let kernel = m.needs_kernel().then_some(KernelSpec::Gaussian { h });
            let wide = sim.run(&MethodConfig::new(m, lo, kernel, true).unwrap(), seed).unwrap();
            let narrow = sim.run(&MethodConfig::new(m, hi, kernel, true).unwrap(), seed).unwrap();
            for (w, n) in wide.records.iter().zip(&narrow.records) {
                // same draws, so a smaller alpha can only widen the set
                prop_assert!(w.width >= n.width, "{m:?}: {:?} vs {:?}", w.threshold, n.threshold);
                prop_assert!(!n.covered || w.covered);
            }
        }
    }
}

/// All methods agree on what a full threshold means: the set contains
/// every response.
#[test]
fn full_sets_cover() {
    let cfg = univariate("setting1", 60);
    let sim = simulate_trial(&cfg, 3, 0).unwrap();
    let rep = sim.run(&method(Method::Rlcp, gaussian(0.01), false), 3).unwrap();
    assert!(rep
        .records
        .iter()
        .all(|r| r.threshold != Threshold::Full || (r.covered && r.width.is_infinite())));
}
