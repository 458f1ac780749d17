//! K-fold cross-validation over `(lambda, alpha)` and the end-to-end fit of a
//! regime (coefficients, then threshold).
//!
//! Defaults: 5 folds; 10 lambdas log-spaced from `lambda_max` down to
//! `1e-4 lambda_max`, where `lambda_max` is computed per alpha on the full
//! data; alphas `{0.5, 1, 2, 5, 10, 20}` divided by the median absolute
//! anchor-only margin `|x_i,anchor - x_j,anchor|`. A held-out fold is scored
//! with pairs formed inside that fold only.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concordance::{indicator_concordance_from_scores, scores, PairwiseProblem};
use crate::data::{ContrastWeights, Dataset, PropensityModel, Regime};
use crate::error::{Error, Result};
use crate::optimizer::{fit_beta, fit_hinge, lambda_max, Branch, FitConfig, FitResult, Init};
use crate::regime::{decide_batch, fit_threshold, threshold_from_scores};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Smoothed sigmoid loss with proximal coordinate descent.
    Smcal,
    /// Hinge-loss baseline.
    Scal,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Smcal => "smcal",
            Method::Scal => "scal",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smcal" => Ok(Method::Smcal),
            "scal" => Ok(Method::Scal),
            _ => Err(Error::InvalidConfig(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    /// `count` values log-spaced in `[min_ratio * lambda_max, lambda_max]`.
    Relative {
        count: usize,
        min_ratio: f64,
    },
    Absolute(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaGrid {
    /// Multiples of `1 / median |x_i,anchor - x_j,anchor|`.
    Scaled(Vec<f64>),
    Absolute(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    /// Held-out indicator concordance.
    Concordance,
    /// Held-out IPW value, with the threshold fitted on the training folds.
    IpwValue(PropensityModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningSpec {
    pub lambda_grid: LambdaGrid,
    pub alpha_grid: AlphaGrid,
    pub folds: usize,
    pub criterion: Criterion,
    pub fit: FitConfig,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            lambda_grid: LambdaGrid::Relative { count: 10, min_ratio: 1e-4 },
            alpha_grid: AlphaGrid::Scaled(vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0]),
            folds: 5,
            criterion: Criterion::Concordance,
            fit: FitConfig::default(),
        }
    }
}

/// Either fixed tuning values or a cross-validation protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    Fixed { lambda: f64, alpha: f64, fit: FitConfig },
    CrossValidate(TuningSpec),
}

/// `(n / (log(d) s^2))^(1/4)`, the smoothing scale that balances the
/// approximation and estimation error rates for sparsity `s`.
pub fn theory_alpha(n: usize, d: usize, s: usize) -> f64 {
    let logd = (d.max(2) as f64).ln();
    (n as f64 / (logd * (s.max(1) as f64).powi(2))).powf(0.25)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub lambda: f64,
    pub alpha: f64,
    pub fold_scores: Vec<f64>,
    /// Mean fold score; NaN when some fold failed to fit.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub alpha: f64,
    pub table: Vec<CvCell>,
}

impl CvResult {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let k = self.table.first().map_or(0, |c| c.fold_scores.len());
        let mut header = vec!["lambda".to_string(), "alpha".to_string()];
        header.extend((1..=k).map(|f| format!("fold{f}")));
        header.push("mean".into());
        wtr.write_record(&header)?;
        for c in &self.table {
            let mut rec = vec![c.lambda.to_string(), c.alpha.to_string()];
            rec.extend(c.fold_scores.iter().map(|s| s.to_string()));
            rec.push(c.mean.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Median over unordered pairs of `|x_i,k - x_j,k|`, or 1 when that is zero.
pub fn median_abs_difference(data: &Dataset, k: usize) -> f64 {
    let col = data.x().column(k).to_vec();
    let mut diffs = Vec::with_capacity(col.len() * col.len().saturating_sub(1) / 2);
    for i in 0..col.len() {
        for j in i + 1..col.len() {
            diffs.push((col[i] - col[j]).abs());
        }
    }
    if diffs.is_empty() {
        return 1.0;
    }
    diffs.sort_by(f64::total_cmp);
    let m = crate::regime::percentile(&diffs, 0.5);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Assigns each subject to one of `k` folds by a seeded shuffle; fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_from_seed(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn fit_method(prob: &PairwiseProblem, method: Method, cfg: &FitConfig) -> Result<FitResult> {
    match method {
        Method::Smcal => fit_beta(prob, cfg),
        Method::Scal => fit_hinge(prob, cfg),
    }
}

/// Largest useful penalty for the hinge baseline: the largest absolute
/// one-sided directional derivative at the starting points.
fn hinge_lambda_max(prob: &PairwiseProblem, init: Init) -> f64 {
    let n = prob.n() as f64;
    let w = prob.w();
    let x = prob.x();
    let branches: &[Branch] = match init {
        Init::Plus => &[Branch::Plus],
        Init::Minus => &[Branch::Minus],
        Init::Both => &[Branch::Plus, Branch::Minus],
    };
    let mut best = 0.0f64;
    for &b in branches {
        let s: Vec<f64> = x.column(prob.anchor()).iter().map(|v| b.sign() * v).collect();
        for k in (0..prob.d()).filter(|&k| k != prob.anchor()) {
            let xk = x.column(k);
            let (mut up, mut down) = (0.0, 0.0);
            for i in 0..w.len() {
                for j in 0..w.len() {
                    if w[i] > w[j] {
                        let m = s[i] - s[j];
                        let a = xk[i] - xk[j];
                        let c = 2.0 * (w[i] - w[j]) / (n * (n - 1.0));
                        // right and left derivatives of c (1 - m - b a)_+ at b = 0
                        if m < 1.0 || (m == 1.0 && a < 0.0) {
                            up -= c * a;
                        }
                        if m < 1.0 || (m == 1.0 && a > 0.0) {
                            down -= c * a;
                        }
                    }
                }
            }
            best = best.max((-up).max(down).max(0.0));
        }
    }
    best
}

struct Cell {
    lambda: f64,
    alpha: f64,
}

fn grid_cells(data: &Dataset, w: &ContrastWeights, spec: &TuningSpec, method: Method) -> Result<Vec<Cell>> {
    let alphas: Vec<f64> = match (method, &spec.alpha_grid) {
        (Method::Scal, _) => vec![1.0],
        (_, AlphaGrid::Absolute(v)) => v.clone(),
        (_, AlphaGrid::Scaled(v)) => {
            let scale = median_abs_difference(data, 0);
            v.iter().map(|a| a / scale).collect()
        }
    };
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidConfig("alpha grid must be non-empty and positive".into()));
    }
    let mut cells = Vec::new();
    for &alpha in &alphas {
        let lambdas = match &spec.lambda_grid {
            LambdaGrid::Absolute(v) => v.clone(),
            LambdaGrid::Relative { count, min_ratio } => {
                if *count == 0 || !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::InvalidConfig(
                        "relative lambda grid needs count >= 1 and ratio in (0, 1]".into(),
                    ));
                }
                let prob = PairwiseProblem::new(data.x().to_owned(), w.w.clone(), alpha, 0.0)?;
                let lmax = match method {
                    Method::Smcal => lambda_max(&prob, spec.fit.init)?,
                    Method::Scal => hinge_lambda_max(&prob, spec.fit.init),
                };
                if *count == 1 {
                    vec![lmax]
                } else {
                    (0..*count).map(|i| lmax * min_ratio.powf(i as f64 / (*count - 1) as f64)).collect()
                }
            }
        };
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig("lambda grid must be non-empty and non-negative".into()));
        }
        cells.extend(lambdas.into_iter().map(|lambda| Cell { lambda, alpha }));
    }
    Ok(cells)
}

/// Selects `(lambda, alpha)` by K-fold cross-validation. The best mean score
/// wins; ties go to the larger lambda, then the smaller alpha.
pub fn cross_validate(data: &Dataset, w: &ContrastWeights, spec: &TuningSpec, seed: u64) -> Result<CvResult> {
    cross_validate_method(data, w, spec, Method::Smcal, seed)
}

pub fn cross_validate_method(
    data: &Dataset,
    w: &ContrastWeights,
    spec: &TuningSpec,
    method: Method,
    seed: u64,
) -> Result<CvResult> {
    spec.fit.validate()?;
    let n = data.n();
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    if spec.folds < 2 || spec.folds > n {
        return Err(Error::InvalidConfig(format!("folds must be in [2, n = {n}], got {}", spec.folds)));
    }
    let folds = fold_assignment(n, spec.folds, seed);
    if let Some((f, fold)) = folds.iter().enumerate().find(|(_, f)| f.len() < 2) {
        return Err(Error::FoldSize { fold: f, size: fold.len() });
    }
    let cells = grid_cells(data, w, spec, method)?;

    struct FoldData {
        train: Dataset,
        train_w: ContrastWeights,
        valid: Dataset,
        valid_w: ContrastWeights,
        valid_prop: Option<PropensityModel>,
    }
    let fold_data: Vec<FoldData> = folds
        .iter()
        .map(|valid_idx| {
            let train_idx: Vec<usize> = (0..n).filter(|i| valid_idx.binary_search(i).is_err()).collect();
            FoldData {
                train: data.subset(&train_idx),
                train_w: w.subset(&train_idx),
                valid: data.subset(valid_idx),
                valid_w: w.subset(valid_idx),
                valid_prop: match &spec.criterion {
                    Criterion::IpwValue(p) => Some(p.subset(valid_idx)),
                    Criterion::Concordance => None,
                },
            }
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let scores_flat: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let fd = &fold_data[f];
            let cell = &cells[c];
            let score = || -> Result<f64> {
                let prob =
                    PairwiseProblem::new(fd.train.x().to_owned(), fd.train_w.w.clone(), cell.alpha, cell.lambda)?;
                let fit = fit_method(&prob, method, &spec.fit)?;
                let s_valid = scores(fd.valid.x(), &fit.beta);
                match &fd.valid_prop {
                    None => Ok(indicator_concordance_from_scores(&fd.valid_w.w, &s_valid)),
                    Some(prop) => {
                        let c = fit_threshold(&fd.train, &fd.train_w, &fit.beta)?;
                        crate::regime::ipw_value(&fd.valid, prop, &Regime::new(fit.beta, c))
                    }
                }
            };
            score().unwrap_or(f64::NAN)
        })
        .collect();

    let table: Vec<CvCell> = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let fold_scores = scores_flat[c * folds.len()..(c + 1) * folds.len()].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            CvCell { lambda: cell.lambda, alpha: cell.alpha, fold_scores, mean }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, cell) in table.iter().enumerate() {
        if !cell.mean.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &table[b];
                let better = cell.mean > cur.mean
                    || (cell.mean == cur.mean
                        && (cell.lambda > cur.lambda || (cell.lambda == cur.lambda && cell.alpha < cur.alpha)));
                Some(if better { i } else { b })
            }
        };
    }
    let best = best.ok_or_else(|| Error::DegenerateProblem("no grid cell could be fitted on every fold".into()))?;
    Ok(CvResult { lambda: table[best].lambda, alpha: table[best].alpha, table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedRegime {
    pub regime: Regime,
    pub fit: FitResult,
    pub cv: Option<CvResult>,
}

/// Selects tuning values (if asked), fits the coefficients on all of `data`,
/// then the threshold.
pub fn fit_regime(
    data: &Dataset,
    w: &ContrastWeights,
    method: Method,
    tuning: &Tuning,
    seed: u64,
) -> Result<FittedRegime> {
    let (lambda, alpha, cfg, cv) = match tuning {
        Tuning::Fixed { lambda, alpha, fit } => (*lambda, *alpha, *fit, None),
        Tuning::CrossValidate(spec) => {
            let cv = cross_validate_method(data, w, spec, method, seed)?;
            (cv.lambda, cv.alpha, spec.fit, Some(cv))
        }
    };
    let prob = PairwiseProblem::new(data.x().to_owned(), w.w.clone(), alpha, lambda)?;
    let fit = fit_method(&prob, method, &cfg)?;
    let s = scores(data.x(), &fit.beta);
    let c = threshold_from_scores(&s, &w.w);
    let regime = Regime {
        beta: fit.beta.clone(),
        c,
        alpha: match method {
            Method::Smcal => alpha,
            Method::Scal => 0.0,
        },
        lambda,
        final_loss: Some(fit.final_loss),
        sweeps: Some(fit.sweeps),
    };
    debug_assert_eq!(decide_batch(&regime, data.x()).map(|d| d.len()).ok(), Some(data.n()));
    Ok(FittedRegime { regime, fit, cv })
}
