//! Threshold estimation, decisions, and inverse-probability-weighted values.

use ndarray::ArrayView2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concordance::scores;
use crate::data::{ContrastWeights, Dataset, PropensityModel, Regime};
use crate::error::{Error, Result};
use crate::rng;

/// Retries allowed per bootstrap draw when a resample breaks overlap.
pub const MAX_BOOTSTRAP_RETRIES: usize = 10;

/// Candidate thresholds for scores `s`: `min - 1`, midpoints of consecutive
/// distinct sorted scores, and `max + 1`, in ascending order.
pub fn threshold_candidates(s: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = s.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.is_empty() {
        return vec![0.0];
    }
    let mut c = Vec::with_capacity(u.len() + 1);
    c.push(u[0] - 1.0);
    c.extend(u.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    c.push(u[u.len() - 1] + 1.0);
    c
}

/// `argmax_c (1/n) sum_i w_i 1(beta' x_i > c)` over [`threshold_candidates`],
/// ties resolved toward the smallest candidate.
pub fn fit_threshold(data: &Dataset, w: &ContrastWeights, beta: &[f64]) -> Result<f64> {
    if beta.len() != data.d() {
        return Err(Error::DimensionMismatch { expected: data.d(), got: beta.len() });
    }
    if w.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: w.len() });
    }
    let s = scores(data.x(), beta);
    Ok(threshold_from_scores(&s, &w.w))
}

pub fn threshold_from_scores(s: &[f64], w: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let cands = threshold_candidates(s);
    // Candidate c_m treats exactly the subjects with score above it; walk the
    // candidates from the top so that each objective is a suffix sum.
    let mut objective = vec![0.0; cands.len()];
    let mut acc = 0.0;
    let mut pos = order.len();
    for m in (0..cands.len()).rev() {
        while pos > 0 && s[order[pos - 1]] > cands[m] {
            pos -= 1;
            acc += w[order[pos]];
        }
        objective[m] = acc;
    }
    let mut best = 0;
    for m in 1..cands.len() {
        if objective[m] > objective[best] {
            best = m;
        }
    }
    cands[best]
}

pub fn decide(regime: &Regime, x: &[f64]) -> Result<u8> {
    if x.len() != regime.d() {
        return Err(Error::DimensionMismatch { expected: regime.d(), got: x.len() });
    }
    let s: f64 = x.iter().zip(&regime.beta).map(|(a, b)| a * b).sum();
    Ok(u8::from(s > regime.c))
}

pub fn decide_batch(regime: &Regime, x: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
    if x.ncols() != regime.d() {
        return Err(Error::DimensionMismatch { expected: regime.d(), got: x.ncols() });
    }
    Ok(scores(x, &regime.beta).into_iter().map(|s| u8::from(s > regime.c)).collect())
}

/// `(1/n) sum_i Y_i 1[A_i = d(X_i)] / (A_i pi_i + (1 - A_i)(1 - pi_i))`.
pub fn ipw_value(data: &Dataset, prop: &PropensityModel, regime: &Regime) -> Result<f64> {
    let pi = prop.values(data)?;
    let decisions = decide_batch(regime, data.x())?;
    Ok(ipw_from_parts(data, &pi, &decisions))
}

fn ipw_from_parts(data: &Dataset, pi: &[f64], decisions: &[u8]) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n() {
        let a = data.a()[i];
        if a == decisions[i] {
            let p = if a == 1 { pi[i] } else { 1.0 - pi[i] };
            total += data.y()[i] / p;
        }
    }
    total / data.n() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    /// Mean over bootstrap draws.
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_boot: usize,
    pub boot_size: usize,
    /// Resamples discarded because they broke overlap.
    pub retries: usize,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap of `ipw_value(regime_a) - ipw_value(regime_b)`.
/// Draw `b` uses the stream derived from `(seed, b)`.
pub fn bootstrap_value_diff(
    data: &Dataset,
    prop: &PropensityModel,
    regime_a: &Regime,
    regime_b: &Regime,
    n_boot: usize,
    boot_size: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    bootstrap_impl(data, prop, regime_a, Some(regime_b), n_boot, boot_size, seed)
}

/// Percentile bootstrap of `ipw_value(regime)`.
pub fn bootstrap_value(
    data: &Dataset,
    prop: &PropensityModel,
    regime: &Regime,
    n_boot: usize,
    boot_size: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    bootstrap_impl(data, prop, regime, None, n_boot, boot_size, seed)
}

fn bootstrap_impl(
    data: &Dataset,
    prop: &PropensityModel,
    regime_a: &Regime,
    regime_b: Option<&Regime>,
    n_boot: usize,
    boot_size: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    if n_boot < 2 {
        return Err(Error::InvalidConfig(format!("n_boot must be at least 2, got {n_boot}")));
    }
    if boot_size == 0 || data.n() == 0 {
        return Err(Error::InvalidConfig("bootstrap needs a non-empty dataset and boot_size >= 1".into()));
    }
    let dec_a = decide_batch(regime_a, data.x())?;
    let dec_b = regime_b.map(|r| decide_batch(r, data.x())).transpose()?;
    let draws: Vec<Result<(f64, usize)>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let mut last_err = None;
            for attempt in 0..=MAX_BOOTSTRAP_RETRIES {
                let idx: Vec<usize> = (0..boot_size).map(|_| rng.random_range(0..data.n())).collect();
                let sub = data.subset(&idx);
                match prop.subset(&idx).values(&sub) {
                    Ok(pi) => {
                        let da: Vec<u8> = idx.iter().map(|&i| dec_a[i]).collect();
                        let mut v = ipw_from_parts(&sub, &pi, &da);
                        if let Some(db) = &dec_b {
                            let db: Vec<u8> = idx.iter().map(|&i| db[i]).collect();
                            v -= ipw_from_parts(&sub, &pi, &db);
                        }
                        return Ok((v, attempt));
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            Err(Error::Bootstrap {
                draw: b,
                attempts: MAX_BOOTSTRAP_RETRIES + 1,
                source: Box::new(last_err.expect("at least one attempt")),
            })
        })
        .collect();
    let mut values = Vec::with_capacity(n_boot);
    let mut retries = 0;
    for d in draws {
        let (v, r) = d?;
        values.push(v);
        retries += r;
    }
    let value = values.iter().sum::<f64>() / n_boot as f64;
    values.sort_by(f64::total_cmp);
    Ok(ValueEstimate {
        value,
        ci_low: percentile(&values, 0.025),
        ci_high: percentile(&values, 0.975),
        n_boot,
        boot_size,
        retries,
    })
}
