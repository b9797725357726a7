//! Results directories and the files written into them.
//!
//! Every run gets its own directory named after a hash of its resolved
//! configuration. Each CSV starts with a `#` comment line carrying the
//! version and the full configuration, and `summary.json` repeats both.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lcp_core::eval::{CoverageEstimate, RegionCoverage, WidthStats};
use lcp_core::experiment::{TestRecord, TrialReport};
use lcp_core::MethodConfig;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct RunDir {
    path: PathBuf,
    command: String,
    config: Value,
}

impl RunDir {
    /// Creates `<out>/<command>-<hash>`. An existing directory is only
    /// reused with `force`.
    pub fn create(out: &Path, command: &str, config: Value, force: bool) -> Result<Self> {
        let canonical = serde_json::to_string(&json!({ "command": command, "config": config }))?;
        let digest = Sha256::digest(canonical.as_bytes());
        let hash: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        let path = out.join(format!("{command}-{hash}"));
        if path.exists() && !force {
            bail!(
                "results directory {} already exists; pass --force to overwrite it",
                path.display()
            );
        }
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path,
            command: command.to_string(),
            config,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// A CSV writer whose file already holds the provenance line.
    pub fn csv(&self, name: &str) -> Result<csv::Writer<File>> {
        let path = self.path.join(name);
        let mut file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "# lcp {VERSION} {}", serde_json::to_string(&self.config)?)?;
        Ok(csv::Writer::from_writer(file))
    }

    /// Writes `summary.json` with the command, version and configuration
    /// alongside `results`.
    pub fn summary(&self, results: impl Serialize) -> Result<()> {
        let doc = json!({
            "command": self.command,
            "version": VERSION,
            "config": self.config,
            "results": results,
        });
        let path = self.path.join("summary.json");
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn kernel_label(m: &MethodConfig) -> String {
    match (&m.kernel, m.method.needs_kernel()) {
        (Some(k), true) => k.to_string(),
        _ => String::new(),
    }
}

/// All reports of one method configuration, one per trial or split.
pub struct Entry {
    pub config: MethodConfig,
    pub reports: Vec<TrialReport>,
}

#[derive(Serialize)]
pub struct EntrySummary {
    pub method: String,
    pub kernel: Option<String>,
    pub alpha: f64,
    pub smoothed: bool,
    pub coverage: CoverageEstimate,
    pub width: WidthStats,
}

impl Entry {
    pub fn summary(&self) -> Result<EntrySummary> {
        let kernel = kernel_label(&self.config);
        Ok(EntrySummary {
            method: self.config.method.label(),
            kernel: (!kernel.is_empty()).then_some(kernel),
            alpha: self.config.alpha,
            smoothed: self.config.smoothed,
            coverage: lcp_core::eval::marginal_coverage(&self.reports)?,
            width: lcp_core::eval::width_stats(&self.reports)?,
        })
    }

    pub fn tag(&self) -> String {
        let kernel = kernel_label(&self.config);
        if kernel.is_empty() {
            self.config.method.label()
        } else {
            format!("{} {kernel}", self.config.method)
        }
    }
}

pub fn print_summary(s: &EntrySummary, tag: &str) {
    println!(
        "{tag:<32} coverage {:.4} (se {:.4})  median width {:.4}  infinite {:.3}",
        s.coverage.coverage, s.coverage.se, s.width.median, s.width.fraction_infinite
    );
}

pub fn write_points(dir: &RunDir, features: &[String], entries: &[Entry]) -> Result<()> {
    let mut w = dir.csv("points.csv")?;
    let mut header: Vec<String> = ["method", "kernel", "trial", "point"].map(String::from).to_vec();
    header.extend(features.iter().cloned());
    header.extend(
        [
            "y",
            "center",
            "set",
            "threshold",
            "lower",
            "upper",
            "width",
            "covered",
            "pvalue",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for e in entries {
        let method = e.config.method.label();
        let kernel = kernel_label(&e.config);
        for rep in &e.reports {
            for (j, r) in rep.records.iter().enumerate() {
                let mut row = vec![method.clone(), kernel.clone(), rep.trial.to_string(), j.to_string()];
                row.extend(r.x.iter().map(|v| num(*v)));
                row.extend(record_fields(r));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn record_fields(r: &TestRecord) -> Vec<String> {
    let t = r.threshold;
    let (lo, hi) = match t {
        lcp_core::Threshold::Empty => (String::new(), String::new()),
        _ => (num(r.center - t.value()), num(r.center + t.value())),
    };
    vec![
        num(r.y),
        num(r.center),
        t.kind().to_string(),
        num(t.value()),
        lo,
        hi,
        num(r.width),
        u8::from(r.covered).to_string(),
        num(r.pvalue),
    ]
}

pub struct RegionRows<'a> {
    pub entry: &'a Entry,
    pub partition: String,
    pub table: Vec<RegionCoverage>,
}

pub fn write_regions(dir: &RunDir, rows: &[RegionRows<'_>]) -> Result<()> {
    let mut w = dir.csv("regions.csv")?;
    w.write_record([
        "method",
        "kernel",
        "partition",
        "region",
        "points",
        "covered",
        "coverage",
        "mass",
        "se",
        "sparse",
    ])?;
    for r in rows {
        for c in &r.table {
            w.write_record([
                r.entry.config.method.label(),
                kernel_label(&r.entry.config),
                r.partition.clone(),
                c.label.clone(),
                c.points.to_string(),
                c.covered.to_string(),
                opt(c.coverage),
                num(c.mass),
                opt(c.se),
                u8::from(c.sparse).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One labelled row per entry and evaluation point, for curve files.
pub fn write_curve<T>(
    dir: &RunDir,
    name: &str,
    columns: &[&str],
    curves: &[(&Entry, Vec<T>)],
    fields: impl Fn(&T) -> Vec<String>,
) -> Result<()> {
    let mut w = dir.csv(name)?;
    let mut header = vec!["method", "kernel"];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for (e, points) in curves {
        for p in points {
            let mut row = vec![e.config.method.label(), kernel_label(&e.config)];
            row.extend(fields(p));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
