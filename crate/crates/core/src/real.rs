//! The abalone data: CSV ingestion, random three-way splits and optional
//! standardization of the numeric features.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LcpError, Result};

/// Sex levels in code order: `M = 0`, `F = 1`, `I = 2`.
pub const SEX_LEVELS: [&str; 3] = ["M", "F", "I"];
/// Numeric feature columns, in feature order after `sex`.
pub const NUMERIC_COLUMNS: [&str; 4] = ["length", "diameter", "height", "whole_weight"];
pub const RESPONSE_COLUMN: &str = "rings";
/// Index of the sliding-window covariate (`length`) in the feature vector.
pub const LENGTH_FEATURE: usize = 1;

/// Reads the abalone table from a CSV file with a header row.
pub fn load_abalone(path: impl AsRef<Path>) -> Result<Dataset> {
    read_abalone(std::fs::File::open(path)?)
}

/// Parses the abalone table. Columns are found by header name, so order
/// and extra columns do not matter. Features are `sex` (coded, see
/// [`SEX_LEVELS`]) followed by [`NUMERIC_COLUMNS`]; the response is
/// `rings`. Errors name the offending line (the header is line 1).
pub fn read_abalone<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_ascii_lowercase).collect();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| LcpError::Ingest {
            row: 1,
            column: name.to_string(),
            reason: "missing column".into(),
        })
    };
    let sex_col = find("sex")?;
    let num_cols = NUMERIC_COLUMNS.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let y_col = find(RESPONSE_COLUMN)?;

    let mut features = Vec::new();
    let mut response = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize, name: &str| {
            rec.get(col).ok_or_else(|| LcpError::Ingest {
                row,
                column: name.to_string(),
                reason: "missing field".into(),
            })
        };
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = field(col, name)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(LcpError::Ingest {
                    row,
                    column: name.to_string(),
                    reason: format!("`{raw}` is not a finite number"),
                }),
            }
        };
        let sex = field(sex_col, "sex")?;
        let code = SEX_LEVELS
            .iter()
            .position(|l| l.eq_ignore_ascii_case(sex))
            .ok_or_else(|| LcpError::Ingest {
                row,
                column: "sex".into(),
                reason: format!("unknown sex code `{sex}`, expected M, F or I"),
            })?;
        features.push(code as f64);
        for (&col, name) in num_cols.iter().zip(NUMERIC_COLUMNS) {
            features.push(number(col, name)?);
        }
        response.push(number(y_col, RESPONSE_COLUMN)?);
    }
    if response.is_empty() {
        return Err(LcpError::contract("abalone file has no data rows"));
    }
    let categorical = vec![true, false, false, false, false];
    Dataset::with_categorical(features, 1 + NUMERIC_COLUMNS.len(), categorical, response)
}

/// Part sizes for splitting `n` items by `fractions`: floors first, then
/// leftover items go to the largest remainders (earlier parts win ties).
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(LcpError::contract(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Pretraining, calibration and test parts of one random split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub pretrain: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
}

pub fn split_three<R: Rng + ?Sized>(data: &Dataset, fractions: [f64; 3], rng: &mut R) -> Result<Split> {
    let sizes = largest_remainder(data.len(), &fractions)?;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(rng);
    let (a, rest) = idx.split_at(sizes[0]);
    let (b, c) = rest.split_at(sizes[1]);
    Ok(Split {
        pretrain: data.subset(a),
        calibration: data.subset(b),
        test: data.subset(c),
    })
}

/// Per-column centering and scaling of the numeric features; categorical
/// columns pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let cat = data.categorical();
        let (mut mean, mut scale) = (Vec::new(), Vec::new());
        for j in 0..data.dim() {
            if cat[j] {
                mean.push(0.0);
                scale.push(1.0);
                continue;
            }
            let m = data.rows().map(|r| r[j]).sum::<f64>() / n;
            let v = data.rows().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if v > 0.0 { v.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(LcpError::DimensionMismatch {
                expected: self.mean.len(),
                got: data.dim(),
            });
        }
        let features = data
            .rows()
            .flat_map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| (v - self.mean[j]) / self.scale[j])
                    .collect::<Vec<_>>()
            })
            .collect();
        Dataset::with_categorical(
            features,
            data.dim(),
            data.categorical().to_vec(),
            data.response().to_vec(),
        )
    }
}

impl Split {
    /// Rescales every part to the calibration set's feature scale.
    pub fn standardized(&self) -> Result<Split> {
        let s = Standardizer::fit(&self.calibration);
        Ok(Split {
            pretrain: s.apply(&self.pretrain)?,
            calibration: s.apply(&self.calibration)?,
            test: s.apply(&self.test)?,
        })
    }
}
