//! The `real` command: abalone age prediction over random splits.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use lcp_core::eval::{conditional_coverage, sliding_window_coverage, RegionSpec};
use lcp_core::experiment::{evaluate, BasePredictor};
use lcp_core::methods::{Calibration, Conformal};
use lcp_core::real::{load_abalone, split_three, LENGTH_FEATURE, NUMERIC_COLUMNS, SEX_LEVELS};
use lcp_core::special::empirical_quantile;
use lcp_core::{KernelSpec, Method, MethodConfig, Purpose, StreamKey};
use serde_json::json;

use crate::output::{num, print_summary, write_curve, write_points, write_regions, Entry, RegionRows, RunDir};
use crate::{OutArgs, SeedArg};

/// Mass of the sliding window over `length`.
const WINDOW_MASS: f64 = 0.05;
/// Window centers sit at these quantiles of the pooled test lengths.
const WINDOW_GRID: usize = 99;

#[derive(Args, Debug)]
pub struct RealArgs {
    /// CSV with columns sex, length, diameter, height, whole_weight and rings.
    #[arg(long)]
    data: PathBuf,
    /// Repeatable; kernel methods use a product-box kernel at every `--h`.
    #[arg(long = "method", default_values = ["rlcp", "callcp"])]
    methods: Vec<Method>,
    /// Common box half-width for the numeric features, comma separated.
    #[arg(long = "h", value_delimiter = ',', default_values_t = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3])]
    bandwidths: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    splits: u64,
    /// Pretraining, calibration and test fractions; equal thirds by default.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<f64>>,
    /// Rescale the numeric features to the calibration set's scale.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    smoothed: bool,
    #[arg(long, default_value = "linear")]
    predictor: BasePredictor,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    out: OutArgs,
}

pub fn real(a: &RealArgs) -> Result<()> {
    let seed = a.seed.resolve()?;
    if a.splits == 0 {
        bail!("--splits must be at least 1");
    }
    let fractions: [f64; 3] = match &a.split {
        Some(f) if f.len() == 3 => [f[0], f[1], f[2]],
        Some(f) => bail!("--split takes three fractions, got {}", f.len()),
        None => [1.0 / 3.0; 3],
    };
    let mut configs = Vec::new();
    for &method in &a.methods {
        if method.needs_kernel() {
            for &h in &a.bandwidths {
                configs.push(MethodConfig::new(
                    method,
                    a.alpha,
                    Some(KernelSpec::ProductBox { h }),
                    a.smoothed,
                )?);
            }
        } else {
            configs.push(MethodConfig::new(method, a.alpha, None, a.smoothed)?);
        }
    }
    let data = load_abalone(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let config = json!({
        "data": a.data.display().to_string(),
        "rows": data.len(),
        "methods": a.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "h": a.bandwidths,
        "splits": a.splits,
        "split_fractions": fractions,
        "features": if a.standardize { "standardized to the calibration scale" } else { "raw" },
        "alpha": a.alpha,
        "smoothed": a.smoothed,
        "predictor": a.predictor.to_string(),
        "seed": seed,
    });
    let dir = RunDir::create(&a.out.out, "real", config, a.out.force)?;

    let mut grouped = vec![Vec::new(); configs.len()];
    for t in 0..a.splits {
        let key = StreamKey::new(seed, t, 0);
        let mut split = split_three(&data, fractions, &mut key.stream(Purpose::Split))?;
        if a.standardize {
            split = split.standardized()?;
        }
        let sf = a
            .predictor
            .fit(&split.pretrain)
            .with_context(|| format!("fitting the base predictor on split {t}"))?;
        let cal = Arc::new(Calibration::new(split.calibration, sf)?);
        for (i, mc) in configs.iter().enumerate() {
            let c = Conformal::new(mc.clone(), cal.clone())?;
            grouped[i].push(evaluate(&c, &split.test, key)?);
        }
    }
    let entries: Vec<Entry> = configs
        .into_iter()
        .zip(grouped)
        .map(|(config, reports)| Entry { config, reports })
        .collect();

    let mut features = vec!["sex".to_string()];
    features.extend(NUMERIC_COLUMNS.iter().map(|c| c.to_string()));
    write_points(&dir, &features, &entries)?;

    let sexes = RegionSpec::Categorical {
        column: 0,
        levels: SEX_LEVELS.iter().map(|s| s.to_string()).collect(),
    };
    let mut rows = Vec::new();
    for e in &entries {
        for p in [RegionSpec::Whole, sexes.clone()] {
            rows.push(RegionRows {
                entry: e,
                partition: p.to_string(),
                table: conditional_coverage(&e.reports, &p)?,
            });
        }
    }
    write_regions(&dir, &rows)?;

    // every entry sees the same test sets, so one grid serves all
    let lengths: Vec<f64> = entries[0]
        .reports
        .iter()
        .flat_map(|r| r.records.iter().map(|p| p.x[LENGTH_FEATURE]))
        .collect();
    let grid: Vec<f64> = (1..=WINDOW_GRID)
        .map(|k| empirical_quantile(&lengths, k as f64 / (WINDOW_GRID + 1) as f64))
        .collect();
    let windows = entries
        .iter()
        .map(|e| {
            Ok((
                e,
                sliding_window_coverage(&e.reports, LENGTH_FEATURE, WINDOW_MASS, &grid)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    write_curve(
        &dir,
        "window.csv",
        &["length", "lo", "hi", "points", "coverage", "boundary"],
        &windows,
        |w| {
            vec![
                num(w.at),
                num(w.lo),
                num(w.hi),
                w.points.to_string(),
                num(w.coverage),
                u8::from(w.boundary).to_string(),
            ]
        },
    )?;

    let mut summaries = Vec::new();
    for e in &entries {
        let s = e.summary()?;
        print_summary(&s, &e.tag());
        summaries.push(s);
    }
    dir.summary(json!({ "methods": summaries }))?;
    println!("results: {}", dir.path().display());
    Ok(())
}
