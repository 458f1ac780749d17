//! Observations, propensities and contrast weights.
//!
//! A [`Dataset`] holds outcomes `y`, binary treatments `a` and the covariate
//! matrix `x`. Contrast weights are the per-subject unbiased estimates of the
//! treatment contrast,
//!
//! ```text
//! w_i = (y_i - v_i)(a_i - pi_i) / (pi_i (1 - pi_i))
//! ```
//!
//! where `v` is a baseline that must not depend on `a_i`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<u8>,
    x: Array2<f64>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, a: Vec<u8>, x: Array2<f64>) -> Result<Self> {
        let n = y.len();
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.len() });
        }
        if x.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.nrows() });
        }
        if x.ncols() == 0 {
            return Err(Error::Validation("covariate dimension must be at least 1".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite outcome at row {}", i + 1)));
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!("treatment at row {} is {}, expected 0 or 1", i + 1, a[i])));
        }
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite covariate x{} at row {}", k + 1, i + 1)));
            }
        }
        Ok(Self { y, a, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    /// Rows `idx` in the given order; indices may repeat (bootstrap).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            x: self.x.select(Axis(0), idx),
        }
    }
}

/// Reads a dataset with header `y,a,x1,...,xd`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_dataset(file)
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "y" || &headers[1] != "a" {
        return Err(Error::Validation(format!(
            "expected header `y,a,x1,...,xd`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    for (k, name) in headers.iter().skip(2).enumerate() {
        if name != format!("x{}", k + 1) {
            return Err(Error::Validation(format!("header column {} is `{}`, expected `x{}`", k + 3, name, k + 1)));
        }
    }
    let d = headers.len() - 2;
    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut xs = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != d + 2 {
            return Err(Error::Parse {
                row,
                col: record.len().min(d + 2) + 1,
                msg: format!("expected {} fields, found {}", d + 2, record.len()),
            });
        }
        let yi = parse_cell(&record[0], row, 1)?;
        let ai = parse_cell(&record[1], row, 2)?;
        let ai = if ai == 0.0 {
            0
        } else if ai == 1.0 {
            1
        } else {
            return Err(Error::Validation(format!("treatment at row {row} is {ai}, expected 0 or 1")));
        };
        y.push(yi);
        a.push(ai);
        for k in 0..d {
            xs.push(parse_cell(&record[k + 2], row, k + 3)?);
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, d), xs).expect("row-major buffer has n*d entries");
    Dataset::new(y, a, x)
}

fn parse_cell(s: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse { row, col, msg: format!("`{s}` is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Validation(format!("non-finite value at row {row}, column {col}")));
    }
    Ok(v)
}

/// Reads covariates `x1..xd` from a CSV, ignoring any other columns.
pub fn read_covariates<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = Vec::new();
    for k in 1.. {
        let name = format!("x{k}");
        match headers.iter().position(|h| h == name) {
            Some(c) => cols.push(c),
            None => break,
        }
    }
    if cols.is_empty() {
        return Err(Error::Validation("no covariate columns `x1,...` found".into()));
    }
    let d = cols.len();
    let mut xs = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        for &c in &cols {
            let cell =
                record.get(c).ok_or_else(|| Error::Parse { row: r + 1, col: c + 1, msg: "missing field".into() })?;
            xs.push(parse_cell(cell, r + 1, c + 1)?);
        }
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, d), xs).expect("row-major buffer has n*d entries"))
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "a".to_string()];
    header.extend((1..=data.d()).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![data.y[i].to_string(), data.a[i].to_string()];
        rec.extend(data.x.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, File::create(path)?)
}

/// How `P(A = 1 | X)` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PropensityModel {
    Constant(f64),
    PerSubject(Vec<f64>),
    /// Sample fraction of treated subjects.
    Empirical,
}

impl PropensityModel {
    /// Per-subject propensities, checked for strict overlap.
    pub fn values(&self, data: &Dataset) -> Result<Vec<f64>> {
        let n = data.n();
        let values = match self {
            PropensityModel::Constant(p) => vec![*p; n],
            PropensityModel::PerSubject(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: v.len() });
                }
                v.clone()
            }
            PropensityModel::Empirical => {
                if n == 0 {
                    return Err(Error::Validation("empirical propensity of an empty dataset".into()));
                }
                let p = data.a.iter().map(|&a| a as f64).sum::<f64>() / n as f64;
                vec![p; n]
            }
        };
        for (i, &p) in values.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Overlap { index: i, value: p });
            }
        }
        Ok(values)
    }

    /// The same model restricted to rows `idx` (per-subject values follow their rows).
    pub fn subset(&self, idx: &[usize]) -> PropensityModel {
        match self {
            PropensityModel::PerSubject(v) => PropensityModel::PerSubject(idx.iter().map(|&i| v[i]).collect()),
            other => other.clone(),
        }
    }
}

/// Choice of `v(X_i)` in the contrast weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Baseline {
    Zero,
    /// Mean outcome of the untreated subjects.
    #[default]
    ControlMean,
    Supplied(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastWeights {
    pub w: Vec<f64>,
    pub baseline_v: Vec<f64>,
}

impl ContrastWeights {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> ContrastWeights {
        ContrastWeights {
            w: idx.iter().map(|&i| self.w[i]).collect(),
            baseline_v: idx.iter().map(|&i| self.baseline_v[i]).collect(),
        }
    }
}

pub fn contrast_weights(data: &Dataset, prop: &PropensityModel, baseline: &Baseline) -> Result<ContrastWeights> {
    let pi = prop.values(data)?;
    let n = data.n();
    let v = match baseline {
        Baseline::Zero => vec![0.0; n],
        Baseline::ControlMean => {
            let (sum, count) = data
                .y
                .iter()
                .zip(&data.a)
                .filter(|(_, &a)| a == 0)
                .fold((0.0, 0usize), |(s, c), (&y, _)| (s + y, c + 1));
            if count == 0 {
                return Err(Error::DegenerateBaseline(
                    "control-mean baseline needs at least one untreated subject".into(),
                ));
            }
            vec![sum / count as f64; n]
        }
        Baseline::Supplied(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation("supplied baseline has non-finite entries".into()));
            }
            v.clone()
        }
    };
    let w = (0..n)
        .map(|i| {
            let a = data.a[i] as f64;
            (data.y[i] - v[i]) * (a - pi[i]) / (pi[i] * (1.0 - pi[i]))
        })
        .collect();
    Ok(ContrastWeights { w, baseline_v: v })
}

/// A fitted decision rule `1(beta' x > c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub beta: Vec<f64>,
    pub c: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
}

impl Regime {
    pub fn new(beta: Vec<f64>, c: f64) -> Self {
        Self { beta, c, alpha: 0.0, lambda: 0.0, final_loss: None, sweeps: None }
    }

    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Regime = serde_json::from_str(s)?;
        if r.beta.is_empty() || r.beta.iter().any(|b| !b.is_finite()) || !r.c.is_finite() {
            return Err(Error::Validation("regime needs a non-empty finite beta and finite c".into()));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = String::new();
        File::open(path)?.read_to_string(&mut s)?;
        Self::from_json(&s)
    }
}
