//! Simulation designs, evaluation metrics, and the replication runner.
//!
//! Every design draws `A ~ Bernoulli(0.5)` independently of `X` and sets
//! `Y = baseline(X) + A * D(X) + noise`, with the contrast `D` a monotone
//! function of `beta*' X`:
//!
//! | id | X | D(X) | baseline(X) | noise sd |
//! |----|---|------|-------------|----------|
//! | `linear-uniform` | U(-1,1)^d | 0.884(1 - x1 - x2) | 1 + 2x1 + x2 + 0.5x3 - 0.442(1 - x1 - x2) | 1 |
//! | `linear-discrete` | uniform on {-0.9,-0.7,...,0.9}^d | as above | as above | 1 |
//! | `nonlinear-exp` | N(0, I) | exp(1 + x1 + x2 - x3 + x4) - e | 1 + x1 - x2 + x3 + x4 | sqrt(0.5) |
//! | `model1` | N(0, I) | X b | 3 - x1 + x2 | 1 |
//! | `model2` | N(0, I) | X b | 3 - 0.5(x1 + 0.5x2)^2 + 0.625 x2^2 | 1 |
//! | `model3` | N(0, I) | X b | 1 - sin(x1) + sin(x2) | 1 |
//! | `model4`..`model6` | N(0, I) | (X b')^3 | as model1..model3 | 1 |
//!
//! with `b = (2, 1.8, 0, 0, 0, -1.6, 0, ...)` and `b' = b / 2`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{contrast_weights, Baseline, Dataset, PropensityModel, Regime};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tuning::{fit_regime, Method, Tuning};

const DISCRETE_LEVELS: [f64; 10] = [-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9];

/// Evaluation draws used for PCD and estimated value.
pub const DEFAULT_N_EVAL: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    LinearUniform,
    LinearDiscrete,
    NonlinearExp,
    /// High-dimensional models 1 to 6.
    Model(u8),
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::LinearUniform,
        Scenario::LinearDiscrete,
        Scenario::NonlinearExp,
        Scenario::Model(1),
        Scenario::Model(2),
        Scenario::Model(3),
        Scenario::Model(4),
        Scenario::Model(5),
        Scenario::Model(6),
    ];

    pub fn default_d(self) -> usize {
        match self {
            Scenario::Model(_) => 500,
            _ => 50,
        }
    }

    /// Smallest dimension the design is defined for.
    pub fn min_d(self) -> usize {
        match self {
            Scenario::LinearUniform | Scenario::LinearDiscrete => 3,
            Scenario::NonlinearExp => 4,
            Scenario::Model(_) => 6,
        }
    }

    fn noise_sd(self) -> f64 {
        match self {
            Scenario::NonlinearExp => 0.5f64.sqrt(),
            _ => 1.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::LinearUniform => f.write_str("linear-uniform"),
            Scenario::LinearDiscrete => f.write_str("linear-discrete"),
            Scenario::NonlinearExp => f.write_str("nonlinear-exp"),
            Scenario::Model(k) => write!(f, "model{k}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-uniform" => Ok(Scenario::LinearUniform),
            "linear-discrete" => Ok(Scenario::LinearDiscrete),
            "nonlinear-exp" => Ok(Scenario::NonlinearExp),
            _ => match s.strip_prefix("model").and_then(|k| k.parse::<u8>().ok()) {
                Some(k @ 1..=6) => Ok(Scenario::Model(k)),
                _ => Err(Error::UnknownScenario(s.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self { scenario, n, d: scenario.default_d(), seed }
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < self.scenario.min_d() {
            return Err(Error::InvalidConfig(format!(
                "scenario {} needs d >= {}, got {}",
                self.scenario,
                self.scenario.min_d(),
                self.d
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth of a design: the index direction `beta*`, the contrast and
/// the untreated mean outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthOracle {
    scenario: Scenario,
    beta_star: Vec<f64>,
}

impl TruthOracle {
    pub fn new(scenario: Scenario, d: usize) -> Result<Self> {
        ScenarioSpec { scenario, n: 1, d, seed: 0 }.validate()?;
        let mut beta_star = vec![0.0; d];
        match scenario {
            Scenario::LinearUniform | Scenario::LinearDiscrete => {
                beta_star[0] = -1.0;
                beta_star[1] = -1.0;
            }
            Scenario::NonlinearExp => beta_star[..4].copy_from_slice(&[1.0, 1.0, -1.0, 1.0]),
            Scenario::Model(k) => {
                let scale = if k <= 3 { 1.0 } else { 0.5 };
                beta_star[0] = 2.0 * scale;
                beta_star[1] = 1.8 * scale;
                beta_star[5] = -1.6 * scale;
            }
        }
        Ok(Self { scenario, beta_star })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn d(&self) -> usize {
        self.beta_star.len()
    }

    pub fn beta_star(&self) -> &[f64] {
        &self.beta_star
    }

    pub fn index(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta_star).map(|(a, b)| a * b).sum()
    }

    /// `D(x) = E[Y | A=1, x] - E[Y | A=0, x]`.
    pub fn contrast(&self, x: &[f64]) -> f64 {
        let u = self.index(x);
        match self.scenario {
            Scenario::LinearUniform | Scenario::LinearDiscrete => 0.884 * (1.0 + u),
            Scenario::NonlinearExp => (1.0 + u).exp() - 1f64.exp(),
            Scenario::Model(k) if k <= 3 => u,
            Scenario::Model(_) => u * u * u,
        }
    }

    /// `E[Y | A=0, x]`.
    pub fn baseline(&self, x: &[f64]) -> f64 {
        match self.scenario {
            Scenario::LinearUniform | Scenario::LinearDiscrete => {
                1.0 + 2.0 * x[0] + x[1] + 0.5 * x[2] - 0.442 * (1.0 - x[0] - x[1])
            }
            Scenario::NonlinearExp => 1.0 + x[0] - x[1] + x[2] + x[3],
            Scenario::Model(k) => match (k - 1) % 3 {
                0 => 3.0 - x[0] + x[1],
                1 => {
                    let g1 = x[0] + 0.5 * x[1];
                    3.0 - 0.5 * g1 * g1 + 0.625 * x[1] * x[1]
                }
                _ => 1.0 - x[0].sin() + x[1].sin(),
            },
        }
    }

    pub fn optimal_decision(&self, x: &[f64]) -> u8 {
        u8::from(self.contrast(x) > 0.0)
    }

    /// The linear rule that reproduces `optimal_decision`.
    pub fn optimal_regime(&self) -> Regime {
        let c = match self.scenario {
            Scenario::LinearUniform | Scenario::LinearDiscrete => -1.0,
            _ => 0.0,
        };
        Regime::new(self.beta_star.clone(), c)
    }

    /// Draws `n` covariate rows from the design's X-law.
    pub fn sample_x(&self, rng: &mut Rng, n: usize) -> Array2<f64> {
        let d = self.d();
        let mut xs = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            xs.push(self.draw_covariate(rng));
        }
        Array2::from_shape_vec((n, d), xs).expect("n*d draws")
    }

    fn draw_covariate(&self, rng: &mut Rng) -> f64 {
        match self.scenario {
            Scenario::LinearUniform => rng.random_range(-1.0..1.0),
            Scenario::LinearDiscrete => DISCRETE_LEVELS[rng.random_range(0..DISCRETE_LEVELS.len())],
            _ => StandardNormal.sample(rng),
        }
    }
}

/// Samples a dataset from the design in `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, TruthOracle)> {
    spec.validate()?;
    let oracle = TruthOracle::new(spec.scenario, spec.d)?;
    let mut rng = rng::rng_from_seed(spec.seed);
    let x = oracle.sample_x(&mut rng, spec.n);
    let sd = spec.scenario.noise_sd();
    let mut y = Vec::with_capacity(spec.n);
    let mut a = Vec::with_capacity(spec.n);
    for row in x.rows() {
        let xi = row.as_slice().expect("standard layout");
        let ai: u8 = u8::from(rng.random_bool(0.5));
        let eps: f64 = StandardNormal.sample(&mut rng);
        y.push(oracle.baseline(xi) + ai as f64 * oracle.contrast(xi) + sd * eps);
        a.push(ai);
    }
    Ok((Dataset::new(y, a, x)?, oracle))
}

/// Squared distance between unit-normalized vectors after flipping `beta_hat`
/// onto the same half-space as `beta_star`.
pub fn mse_normalized(beta_hat: &[f64], beta_star: &[f64]) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::DimensionMismatch { expected: beta_star.len(), got: beta_hat.len() });
    }
    let nh = beta_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ns = beta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nh == 0.0 || ns == 0.0 {
        return Err(Error::Validation("normalized MSE of a zero vector".into()));
    }
    let dot: f64 = beta_hat.iter().zip(beta_star).map(|(a, b)| a * b).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    Ok(beta_hat
        .iter()
        .zip(beta_star)
        .map(|(h, s)| {
            let diff = sign * h / nh - s / ns;
            diff * diff
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    /// True coefficient zero, estimate nonzero.
    pub incorrect_zeros: usize,
    /// True coefficient zero, estimate zero.
    pub correct_zeros: usize,
}

pub fn selection_counts(beta_hat: &[f64], beta_star: &[f64]) -> Result<SelectionCounts> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::DimensionMismatch { expected: beta_star.len(), got: beta_hat.len() });
    }
    let mut out = SelectionCounts { incorrect_zeros: 0, correct_zeros: 0 };
    for (h, s) in beta_hat.iter().zip(beta_star) {
        if *s == 0.0 {
            if *h == 0.0 {
                out.correct_zeros += 1;
            } else {
                out.incorrect_zeros += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeQuality {
    pub pcd: f64,
    pub estimated_value: f64,
}

/// PCD and noise-free value of `regime` on `n_eval` fresh draws from stream `seed`.
pub fn evaluate_regime(regime: &Regime, oracle: &TruthOracle, n_eval: usize, seed: u64) -> Result<RegimeQuality> {
    if n_eval == 0 {
        return Err(Error::InvalidConfig("n_eval must be at least 1".into()));
    }
    if regime.d() != oracle.d() {
        return Err(Error::DimensionMismatch { expected: oracle.d(), got: regime.d() });
    }
    let mut rng = rng::rng_from_seed(seed);
    let x = oracle.sample_x(&mut rng, n_eval);
    let mut agree = 0usize;
    let mut value = 0.0;
    for row in x.rows() {
        let xi = row.as_slice().expect("standard layout");
        let s: f64 = xi.iter().zip(&regime.beta).map(|(a, b)| a * b).sum();
        let treat = u8::from(s > regime.c);
        if treat == oracle.optimal_decision(xi) {
            agree += 1;
        }
        value += oracle.baseline(xi) + treat as f64 * oracle.contrast(xi);
    }
    Ok(RegimeQuality { pcd: agree as f64 / n_eval as f64, estimated_value: value / n_eval as f64 })
}

/// Percentage of correct decisions on fresh draws.
pub fn pcd(regime: &Regime, oracle: &TruthOracle, n_eval: usize, seed: u64) -> Result<f64> {
    Ok(evaluate_regime(regime, oracle, n_eval, seed)?.pcd)
}

/// Mean of `baseline(x) + D(x) d(x)` over fresh draws.
pub fn estimated_value(regime: &Regime, oracle: &TruthOracle, n_eval: usize, seed: u64) -> Result<f64> {
    Ok(evaluate_regime(regime, oracle, n_eval, seed)?.estimated_value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub mse: f64,
    pub incorrect_zeros: usize,
    pub correct_zeros: usize,
    pub pcd: f64,
    pub estimated_value: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub beta: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub se: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub rows: Vec<ReplicateRow>,
    pub failures: Vec<ReplicateFailure>,
}

pub const METRICS: [&str; 5] = ["mse", "incorrect_zeros", "correct_zeros", "pcd", "estimated_value"];

impl SimulationReport {
    fn metric_values(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match name {
                "mse" => r.mse,
                "incorrect_zeros" => r.incorrect_zeros as f64,
                "correct_zeros" => r.correct_zeros as f64,
                "pcd" => r.pcd,
                "estimated_value" => r.estimated_value,
                _ => unreachable!("unknown metric {name}"),
            })
            .collect()
    }

    /// Mean and standard error (`sd / sqrt(n_ok)`) of a metric over successful replicates.
    pub fn summary(&self, name: &str) -> MetricSummary {
        let v = self.metric_values(name);
        let n = v.len();
        let mean = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
        let se = if n < 2 {
            f64::NAN
        } else {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        MetricSummary { mean, se, n_ok: n, n_fail: self.failures.len() }
    }

    pub fn aggregate_json(&self) -> serde_json::Value {
        let mut metrics = serde_json::Map::new();
        for m in METRICS {
            let s = self.summary(m);
            metrics.insert(
                m.to_string(),
                serde_json::json!({ "mean": finite_or_null(s.mean), "se": finite_or_null(s.se), "n_ok": s.n_ok, "n_fail": s.n_fail }),
            );
        }
        serde_json::json!({
            "scenario": self.scenario.to_string(),
            "method": self.method,
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "metrics": metrics,
            "failures": self.failures,
        })
    }

    /// One row per replicate, failures included with empty metric cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "replicate",
            "seed",
            "status",
            "mse",
            "incorrect_zeros",
            "correct_zeros",
            "pcd",
            "estimated_value",
            "lambda",
            "alpha",
            "sweeps",
            "c",
        ])?;
        let mut all: Vec<(usize, Vec<String>)> = self
            .rows
            .iter()
            .map(|r| {
                (
                    r.replicate,
                    vec![
                        r.replicate.to_string(),
                        r.seed.to_string(),
                        "ok".to_string(),
                        r.mse.to_string(),
                        r.incorrect_zeros.to_string(),
                        r.correct_zeros.to_string(),
                        r.pcd.to_string(),
                        r.estimated_value.to_string(),
                        r.lambda.to_string(),
                        r.alpha.to_string(),
                        r.sweeps.to_string(),
                        r.c.to_string(),
                    ],
                )
            })
            .collect();
        all.extend(self.failures.iter().map(|f| {
            let mut rec = vec![f.replicate.to_string(), f.seed.to_string(), format!("error: {}", f.error)];
            rec.extend(std::iter::repeat_n(String::new(), 9));
            (f.replicate, rec)
        }));
        all.sort_by_key(|(r, _)| *r);
        for (_, rec) in all {
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Aligned plain-text summary table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "scenario {}  method {}  n {}  d {}  replicates ok {} failed {}\n",
            self.scenario,
            self.method,
            self.n,
            self.d,
            self.rows.len(),
            self.failures.len()
        );
        out.push_str(&format!("{:<16} {:>12} {:>12}\n", "metric", "mean", "se"));
        for m in METRICS {
            let s = self.summary(m);
            out.push_str(&format!("{:<16} {:>12.4} {:>12.4}\n", m, s.mean, s.se));
        }
        out
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Outcome of one replicate; the fitted regime is kept for callers that
/// compute additional metrics.
pub fn run_replicate(
    scenario: Scenario,
    n: usize,
    d: usize,
    method: Method,
    tuning: &Tuning,
    replicate: usize,
    seed: u64,
) -> std::result::Result<ReplicateRow, ReplicateFailure> {
    let rep_seed = rng::derive_seed(seed, replicate as u64);
    let run = || -> Result<ReplicateRow> {
        let spec = ScenarioSpec { scenario, n, d, seed: rng::derive_seed(rep_seed, 0) };
        let (data, oracle) = generate(&spec)?;
        let w = contrast_weights(&data, &PropensityModel::Constant(0.5), &Baseline::ControlMean)?;
        let fitted = fit_regime(&data, &w, method, tuning, rng::derive_seed(rep_seed, 1))?;
        let regime = fitted.regime;
        let counts = selection_counts(&regime.beta, oracle.beta_star())?;
        let quality = evaluate_regime(&regime, &oracle, DEFAULT_N_EVAL, rng::derive_seed(rep_seed, 2))?;
        Ok(ReplicateRow {
            replicate,
            seed: rep_seed,
            mse: mse_normalized(&regime.beta, oracle.beta_star())?,
            incorrect_zeros: counts.incorrect_zeros,
            correct_zeros: counts.correct_zeros,
            pcd: quality.pcd,
            estimated_value: quality.estimated_value,
            lambda: regime.lambda,
            alpha: regime.alpha,
            sweeps: regime.sweeps.unwrap_or(0),
            c: regime.c,
            beta: regime.beta,
        })
    };
    run().map_err(|e| ReplicateFailure { replicate, seed: rep_seed, error: e.to_string() })
}

/// Runs `reps` independent replicates in parallel. Replicate `r` draws its
/// data, folds and evaluation sample from streams derived from
/// `seed ^ mix64(r)`; failures are recorded and left out of the aggregates.
pub fn run_replications(
    spec: &ScenarioSpec,
    method: Method,
    reps: usize,
    tuning: &Tuning,
    seed: u64,
) -> Result<SimulationReport> {
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let outcomes: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|r| run_replicate(spec.scenario, spec.n, spec.d, method, tuning, r, seed))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(SimulationReport { scenario: spec.scenario, method, n: spec.n, d: spec.d, seed, rows, failures })
}
