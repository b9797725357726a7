//! Commands on synthetic data: `simulate`, `shift`, `deviation` and
//! `bandwidth`.

use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use lcp_core::bandwidth::{solve_bandwidth, BandwidthSolution, NeffOptions, NeffVariant};
use lcp_core::eval::{conditional_coverage, default_local_grid, deviation_d, local_coverage_curve, RegionSpec};
use lcp_core::experiment::{evaluate, run_simulation, simulate_trial_with_test, BasePredictor, SimulationConfig};
use lcp_core::methods::Conformal;
use lcp_core::simgen::{NoiseConvention, SettingSpec};
use lcp_core::special::normal_cdf;
use lcp_core::{Dataset, KernelSpec, Method, MethodConfig, Purpose, StreamKey};
use serde_json::{json, Value};

use crate::output::{num, opt, print_summary, write_curve, write_points, write_regions, Entry, RegionRows, RunDir};
use crate::{MethodArgs, NeffArgs, OutArgs, SeedArg, SimArgs};

impl SimArgs {
    fn config(&self, predictor: BasePredictor) -> Result<SimulationConfig> {
        if self.n < 2 {
            bail!("--n must be at least 2");
        }
        Ok(SimulationConfig {
            setting: self.spec(),
            n_pretrain: self.n_pretrain.unwrap_or(self.n),
            n_cal: self.n,
            n_test: self.n_test.unwrap_or(self.n),
            predictor,
        })
    }

    fn spec(&self) -> SettingSpec {
        self.setting.with_noise(self.noise)
    }

    fn json(&self, predictor: BasePredictor) -> Result<Value> {
        let cfg = self.config(predictor)?;
        Ok(json!({
            "setting": cfg.setting.to_string(),
            "noise": cfg.setting.noise.to_string(),
            "n_pretrain": cfg.n_pretrain,
            "n_cal": cfg.n_cal,
            "n_test": cfg.n_test,
            "predictor": predictor.to_string(),
        }))
    }
}

/// Pretraining sample of trial 0, the one bandwidths are solved on.
fn pretrain_sample(spec: &SettingSpec, n: usize, seed: u64) -> Dataset {
    spec.generate(n, &mut StreamKey::new(seed, 0, 0).stream(Purpose::Pretrain))
}

fn solve(
    pretrain: &Dataset,
    family: &KernelSpec,
    target: f64,
    variant: NeffVariant,
    options: &NeffOptions,
    seed: u64,
) -> Result<BandwidthSolution> {
    let kernel = family.bind_numeric(pretrain.dim())?;
    let mut rng = StreamKey::new(seed, 0, 0).stream(Purpose::Bandwidth);
    solve_bandwidth(pretrain, &kernel, target, variant, options, None, &mut rng)
        .with_context(|| format!("solving the {family} bandwidth for n_eff = {target} ({variant})"))
}

fn default_variant(method: Method) -> NeffVariant {
    match method {
        Method::Rlcp | Method::MRlcp { .. } => NeffVariant::Prototype,
        _ => NeffVariant::Plain,
    }
}

/// Builds one method configuration per `--method`, solving bandwidths on
/// the trial-0 pretraining sample when a target is given.
fn resolve_methods(
    m: &MethodArgs,
    neff: &NeffArgs,
    cfg: &SimulationConfig,
    seed: u64,
) -> Result<(Vec<MethodConfig>, Vec<Value>)> {
    let mut configs = Vec::new();
    let mut solved: Vec<(NeffVariant, f64)> = Vec::new();
    let mut notes = Vec::new();
    let options = NeffOptions {
        sample_size: Some(cfg.n_cal),
        ..NeffOptions::default()
    };
    let mut pretrain = None;
    for &method in &m.methods {
        let kernel = if method.needs_kernel() {
            let spec = m.kernel.with_context(|| format!("method `{method}` needs --kernel"))?;
            match neff.target_neff {
                None => Some(spec),
                Some(target) => {
                    let variant = neff.neff_variant.unwrap_or_else(|| default_variant(method));
                    let h = match solved.iter().find(|(v, _)| *v == variant) {
                        Some(&(_, h)) => h,
                        None => {
                            let pre =
                                pretrain.get_or_insert_with(|| pretrain_sample(&cfg.setting, cfg.n_pretrain, seed));
                            let sol = solve(pre, &spec, target, variant, &options, seed)?;
                            notes.push(json!({
                                "variant": variant.to_string(),
                                "target": target,
                                "h": sol.h,
                                "n_eff": sol.estimate.n_eff,
                                "saturated": sol.saturated,
                            }));
                            solved.push((variant, sol.h));
                            sol.h
                        }
                    };
                    Some(spec.with_bandwidth(h))
                }
            }
        } else {
            None
        };
        configs.push(MethodConfig::new(method, m.alpha, kernel, m.smoothed)?);
    }
    Ok((configs, notes))
}

fn methods_json(m: &MethodArgs, neff: &NeffArgs) -> Value {
    json!({
        "methods": m.methods.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        "kernel": m.kernel.map(|k| k.to_string()),
        "alpha": m.alpha,
        "smoothed": m.smoothed,
        "target_neff": neff.target_neff,
        "neff_variant": neff.neff_variant.map(|v| v.to_string()),
    })
}

fn feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}

fn partitions(d: usize) -> Vec<RegionSpec> {
    let mut out = vec![RegionSpec::Whole, RegionSpec::norm_split(d)];
    if d >= 3 {
        out.push(RegionSpec::AxisBins);
    }
    out
}

/// Points, regions and summary shared by `simulate` and `shift`.
fn write_coverage(dir: &RunDir, d: usize, entries: &[Entry], bandwidths: Vec<Value>) -> Result<()> {
    write_points(dir, &feature_names(d), entries)?;
    let mut rows = Vec::new();
    for e in entries {
        for p in partitions(d) {
            rows.push(RegionRows {
                entry: e,
                partition: p.to_string(),
                table: conditional_coverage(&e.reports, &p)?,
            });
        }
    }
    write_regions(dir, &rows)?;
    let mut summaries = Vec::new();
    for e in entries {
        let s = e.summary()?;
        print_summary(&s, &e.tag());
        summaries.push(s);
    }
    dir.summary(json!({ "methods": summaries, "bandwidths": bandwidths }))
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    data: SimArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    neff: NeffArgs,
    #[arg(long, default_value_t = 20)]
    trials: u64,
    /// Ball radius for the local coverage curve of univariate settings.
    #[arg(long, default_value_t = 0.4)]
    local_radius: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArgs,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let cfg = a.data.config(a.method.predictor)?;
    let (configs, bandwidths) = resolve_methods(&a.method, &a.neff, &cfg, seed)?;
    let config = json!({
        "data": a.data.json(a.method.predictor)?,
        "methods": methods_json(&a.method, &a.neff),
        "trials": a.trials,
        "local_radius": a.local_radius,
        "seed": seed,
    });
    let dir = RunDir::create(&a.out.out, "simulate", config, a.out.force)?;
    let grouped = run_simulation(&cfg, &configs, seed, a.trials)?;
    let entries: Vec<Entry> = configs
        .into_iter()
        .zip(grouped)
        .map(|(config, reports)| Entry { config, reports })
        .collect();

    let d = cfg.setting.dim();
    if d == 1 {
        let grid = default_local_grid();
        let curves = entries
            .iter()
            .map(|e| Ok((e, local_coverage_curve(&e.reports, a.local_radius, &grid)?)))
            .collect::<Result<Vec<_>>>()?;
        write_curve(&dir, "local.csv", &["center", "points", "coverage"], &curves, |p| {
            vec![num(p.at), p.points.to_string(), opt(p.coverage)]
        })?;
    }
    write_coverage(&dir, d, &entries, bandwidths)?;
    println!("results: {}", dir.path().display());
    Ok(())
}

/// Test-feature tilt `g` with `0 <= g <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tilt {
    Const,
    /// `g(x) = Phi(x_1)`.
    NormalCdf,
    /// Indicator of the centered ball of radius `r`.
    Ball {
        r: f64,
    },
}

impl Tilt {
    fn weight(&self, x: &[f64]) -> f64 {
        match *self {
            Tilt::Const => 1.0,
            Tilt::NormalCdf => normal_cdf(x[0]),
            Tilt::Ball { r } => f64::from(x.iter().map(|v| v * v).sum::<f64>().sqrt() <= r),
        }
    }
}

impl FromStr for Tilt {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "const" => return Ok(Tilt::Const),
            "normal-cdf" => return Ok(Tilt::NormalCdf),
            _ => {}
        }
        let r = s
            .strip_prefix("ball:r=")
            .and_then(|r| r.parse::<f64>().ok())
            .ok_or_else(|| format!("unknown tilt `{s}`, expected const, normal-cdf or ball:r=<radius>"))?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(format!("ball radius must be positive, got {r}"));
        }
        Ok(Tilt::Ball { r })
    }
}

impl std::fmt::Display for Tilt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tilt::Const => write!(f, "const"),
            Tilt::NormalCdf => write!(f, "normal-cdf"),
            Tilt::Ball { r } => write!(f, "ball:r={r}"),
        }
    }
}

#[derive(Args, Debug)]
pub struct ShiftArgs {
    #[command(flatten)]
    data: SimArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    neff: NeffArgs,
    /// `const`, `normal-cdf` or `ball:r=1`. Weighted CP uses it as the
    /// likelihood ratio.
    #[arg(long, default_value = "normal-cdf")]
    tilt: Tilt,
    #[arg(long, default_value_t = 20)]
    trials: u64,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArgs,
}

pub fn shift(a: &ShiftArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let cfg = a.data.config(a.method.predictor)?;
    let (configs, bandwidths) = resolve_methods(&a.method, &a.neff, &cfg, seed)?;
    let config = json!({
        "data": a.data.json(a.method.predictor)?,
        "methods": methods_json(&a.method, &a.neff),
        "tilt": a.tilt.to_string(),
        "trials": a.trials,
        "seed": seed,
    });
    let dir = RunDir::create(&a.out.out, "shift", config, a.out.force)?;

    let tilt = a.tilt;
    let mut grouped = vec![Vec::new(); configs.len()];
    for t in 0..a.trials {
        let key = StreamKey::new(seed, t, 0);
        let test = cfg
            .setting
            .sample_tilted(|x| tilt.weight(x), 1.0, cfg.n_test, &mut key.stream(Purpose::Tilt))
            .with_context(|| format!("drawing tilted test points for trial {t}"))?;
        let sim = simulate_trial_with_test(&cfg, seed, t, test)?;
        for (i, mc) in configs.iter().enumerate() {
            let mut c = Conformal::new(mc.clone(), sim.calibration.clone())?;
            if mc.method == Method::Wcp {
                c = c.with_likelihood_ratio(Arc::new(move |x: &[f64]| tilt.weight(x)));
            }
            grouped[i].push(evaluate(&c, &sim.test, key)?);
        }
    }
    let entries: Vec<Entry> = configs
        .into_iter()
        .zip(grouped)
        .map(|(config, reports)| Entry { config, reports })
        .collect();
    write_coverage(&dir, cfg.setting.dim(), &entries, bandwidths)?;
    println!("results: {}", dir.path().display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct DeviationArgs {
    #[command(flatten)]
    data: SimArgs,
    /// Gaussian bandwidths to evaluate, comma separated.
    #[arg(long = "h", value_delimiter = ',', default_values_t = [0.1, 0.2, 0.4, 0.8, 1.6])]
    bandwidths: Vec<f64>,
    /// Prototype redraws per test point.
    #[arg(long, default_value_t = 100)]
    redraws: usize,
    /// Test points per dataset.
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value = "linear")]
    predictor: BasePredictor,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArgs,
}

pub fn deviation(a: &DeviationArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let cfg = a.data.config(a.predictor)?;
    let config = json!({
        "data": a.data.json(a.predictor)?,
        "h": a.bandwidths,
        "redraws": a.redraws,
        "points": a.points,
        "trials": a.trials,
        "alpha": a.alpha,
        "seed": seed,
    });
    let dir = RunDir::create(&a.out.out, "deviation", config, a.out.force)?;
    let mut rows = Vec::new();
    for &h in &a.bandwidths {
        let est = deviation_d(&cfg, h, a.alpha, a.redraws, a.points, a.trials, seed)
            .with_context(|| format!("estimating width variability at h = {h}"))?;
        println!("h {h:<8} D {:.4} (se {:.4})  excluded {}", est.d, est.se, est.excluded);
        rows.push((h, est));
    }
    let mut w = dir.csv("deviation.csv")?;
    w.write_record(["h", "d", "se", "used", "excluded"])?;
    for (h, e) in &rows {
        w.write_record([num(*h), num(e.d), num(e.se), e.used.to_string(), e.excluded.to_string()])?;
    }
    w.flush()?;
    let results: Vec<Value> = rows.iter().map(|(h, e)| json!({ "h": h, "estimate": e })).collect();
    dir.summary(results)?;
    println!("results: {}", dir.path().display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct BandwidthArgs {
    /// `setting1`, `setting2`, `mvsin:d=20` or `cube:d=10`.
    #[arg(long)]
    setting: SettingSpec,
    #[arg(long, default_value = "stddev")]
    noise: NoiseConvention,
    /// Kernel family; its bandwidth is ignored.
    #[arg(long, default_value = "gaussian:h=1")]
    kernel: KernelSpec,
    #[arg(long)]
    target_neff: f64,
    /// `plain` or `prototype`.
    #[arg(long, default_value = "plain")]
    variant: NeffVariant,
    #[arg(long, default_value_t = 2000)]
    n_pretrain: usize,
    /// The sample size in front of the ratio; defaults to `--n-pretrain`.
    #[arg(long)]
    sample_size: Option<usize>,
    /// Prototype redraws averaged by the prototype variant.
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArgs,
}

pub fn bandwidth(a: &BandwidthArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    let spec = a.setting.with_noise(a.noise);
    let options = NeffOptions {
        sample_size: a.sample_size,
        repetitions: a.repetitions,
        ..NeffOptions::default()
    };
    let config = json!({
        "setting": spec.to_string(),
        "noise": spec.noise.to_string(),
        "kernel": a.kernel.to_string(),
        "target_neff": a.target_neff,
        "variant": a.variant.to_string(),
        "n_pretrain": a.n_pretrain,
        "sample_size": a.sample_size.unwrap_or(a.n_pretrain),
        "repetitions": a.repetitions,
        "seed": seed,
    });
    let pretrain = pretrain_sample(&spec, a.n_pretrain, seed);
    let sol = solve(&pretrain, &a.kernel, a.target_neff, a.variant, &options, seed)?;
    let dir = RunDir::create(&a.out.out, "bandwidth", config, a.out.force)?;
    dir.summary(sol)?;
    println!(
        "h = {}  (n_eff {:.2}, target {}, bracket [{}, {}]{})",
        sol.h,
        sol.estimate.n_eff,
        sol.target,
        sol.bracket.lo,
        sol.bracket.hi,
        if sol.saturated {
            ", saturated at the bracket top"
        } else {
            ""
        }
    );
    println!("results: {}", dir.path().display());
    Ok(())
}
