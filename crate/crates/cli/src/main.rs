//! `lcp`: runs localized conformal prediction experiments and writes
//! plot-ready CSV plus a JSON summary into a per-run results directory.

mod abalone;
mod output;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lcp_core::bandwidth::NeffVariant;
use lcp_core::experiment::BasePredictor;
use lcp_core::simgen::{NoiseConvention, SettingSpec};
use lcp_core::{KernelSpec, Method};

#[derive(Parser, Debug)]
#[command(name = "lcp", version, about = "Localized conformal prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coverage of one or more methods on a synthetic setting.
    Simulate(sim::SimulateArgs),
    /// Coverage on the abalone data over random three-way splits.
    Real(abalone::RealArgs),
    /// Solve for the bandwidth reaching a target effective sample size.
    Bandwidth(sim::BandwidthArgs),
    /// Variability of RLCP widths under prototype redraws.
    Deviation(sim::DeviationArgs),
    /// Coverage when test features are drawn from a tilted law.
    Shift(sim::ShiftArgs),
}

/// Seed handling shared by every command. `LCP_SEED` wins over `--seed`.
#[derive(Args, Debug)]
pub struct SeedArg {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SeedArg {
    pub fn resolve(&self) -> Result<u64> {
        match std::env::var("LCP_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .with_context(|| format!("LCP_SEED=`{v}` is not an unsigned integer")),
            Err(_) => Ok(self.seed),
        }
    }
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Parent of the per-run results directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Overwrite an existing results directory.
    #[arg(long)]
    force: bool,
}

/// Method options shared by the commands that run conformal methods.
#[derive(Args, Debug)]
pub struct MethodArgs {
    /// `split`, `wcp`, `baselcp`, `callcp`, `rlcp` or `mrlcp:m=10`; repeatable.
    #[arg(long = "method", required = true)]
    methods: Vec<Method>,
    /// `gaussian:h=0.4`, `box:h=1.5`, `productbox:h=0.05` or `flat:lo=-3,hi=3`.
    #[arg(long)]
    kernel: Option<KernelSpec>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Randomize ties with a uniform draw.
    #[arg(long)]
    smoothed: bool,
    /// `linear` or `knn:k=25`.
    #[arg(long, default_value = "linear")]
    predictor: BasePredictor,
}

/// Synthetic data sizes.
#[derive(Args, Debug)]
pub struct SimArgs {
    /// `setting1`, `setting2`, `mvsin:d=20` or `cube:d=10`.
    #[arg(long)]
    setting: SettingSpec,
    /// Whether the noise scale is a standard deviation or a variance.
    #[arg(long, default_value = "stddev")]
    noise: NoiseConvention,
    /// Calibration size; also the default pretraining and test size.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long)]
    n_pretrain: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
}

/// Optional bandwidth calibration by effective sample size.
#[derive(Args, Debug)]
pub struct NeffArgs {
    /// Solve each method's bandwidth for this effective sample size.
    #[arg(long)]
    target_neff: Option<f64>,
    /// Defaults to `prototype` for RLCP and m-RLCP, `plain` otherwise.
    #[arg(long)]
    neff_variant: Option<NeffVariant>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => sim::simulate(a),
        Command::Real(a) => abalone::real(a),
        Command::Bandwidth(a) => sim::bandwidth(a),
        Command::Deviation(a) => sim::deviation(a),
        Command::Shift(a) => sim::shift(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
