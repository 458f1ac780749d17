//! Proximal coordinate descent for the penalized smoothed loss.
//!
//! The anchor coordinate is held at `+1` or `-1`; every other coordinate is
//! visited in ascending order and updated with
//! `beta_k <- S_{t lambda}(beta_k - t g_k)`, where `g_k` is the partial
//! derivative of the smooth part and `S` is soft-thresholding.
//!
//! Pair margins `beta'(x_i - x_j)` are cached and patched after each
//! coordinate change, then rebuilt from scratch at the end of every sweep.

use serde::{Deserialize, Serialize};

use crate::concordance::{ActivePairs, PairwiseProblem};
use crate::error::{Error, Result};
use crate::kernels;
use crate::smoothing::{logistic_fast, LOGISTIC_SECOND_SUP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSize {
    /// Inverse of the largest per-coordinate curvature bound, see [`auto_step`].
    Auto,
    Fixed(f64),
    /// Per-coordinate steps that start above the [`auto_step`] bound and are
    /// halved until the coordinate majorization inequality holds, never
    /// going below the bound itself. Each accepted update still decreases
    /// the objective.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Plus,
    Minus,
    Both,
}

/// Sign of the anchor coordinate a fit started from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

impl From<Branch> for Init {
    fn from(b: Branch) -> Self {
        match b {
            Branch::Plus => Init::Plus,
            Branch::Minus => Init::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub step: StepSize,
    pub max_sweeps: usize,
    /// Stop once the largest coordinate change in a sweep is below this.
    pub tol: f64,
    pub init: Init,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { step: StepSize::Auto, max_sweeps: 500, tol: 1e-6, init: Init::Both }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(t) = self.step {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("step must be positive, got {t}")));
            }
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    pub final_loss: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub init_branch: Branch,
}

pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

/// Step size `1 / max_k L_k` with
/// `L_k = 2/(n(n-1)) sum_{w_i > w_j} (w_i - w_j)(x_ik - x_jk)^2 alpha^2 / (6 sqrt 3)`,
/// a bound on the curvature of the smooth loss along coordinate `k`.
pub fn auto_step(prob: &PairwiseProblem) -> Result<f64> {
    let pairs = ActivePairs::new(prob.x(), prob.w());
    auto_step_with(prob, &pairs)
}

fn auto_step_with(prob: &PairwiseProblem, pairs: &ActivePairs) -> Result<f64> {
    let n = prob.n() as f64;
    let scale = 2.0 / (n * (n - 1.0)) * prob.alpha() * prob.alpha() * LOGISTIC_SECOND_SUP;
    let mut max_curv = 0.0f64;
    for k in (0..prob.d()).filter(|&k| k != prob.anchor()) {
        let s: f64 = pairs.dw.iter().zip(pairs.column(k)).map(|(dw, dx)| dw * dx * dx).sum();
        max_curv = max_curv.max(scale * s);
    }
    if max_curv > 0.0 && max_curv.is_finite() {
        Ok(1.0 / max_curv)
    } else {
        Err(Error::ZeroCurvature)
    }
}

/// Largest `|g_k|` over free coordinates at the anchor-only starting points.
/// Any `lambda` at or above it leaves the starting point fixed.
pub fn lambda_max(prob: &PairwiseProblem, init: Init) -> Result<f64> {
    let pairs = ActivePairs::new(prob.x(), prob.w());
    if pairs.len == 0 {
        return Err(Error::DegenerateProblem("no pair with w_i > w_j".into()));
    }
    let branches: &[Branch] = match init {
        Init::Plus => &[Branch::Plus],
        Init::Minus => &[Branch::Minus],
        Init::Both => &[Branch::Plus, Branch::Minus],
    };
    let mut best = 0.0f64;
    for &b in branches {
        let mut cd = CoordinateDescent::with_pairs(prob, &pairs, b, 1.0);
        for k in (0..prob.d()).filter(|&k| k != prob.anchor()) {
            best = best.max(cd.gradient(k).abs());
        }
    }
    Ok(best)
}

/// One coordinate-descent session from a single anchor sign.
#[derive(Debug)]
pub struct CoordinateDescent<'a> {
    prob: &'a PairwiseProblem,
    pairs: PairsRef<'a>,
    beta: Vec<f64>,
    margins: Vec<f64>,
    /// `dw_p F'(alpha m_p)`; valid only when `weights_fresh`.
    weighted_slope: Vec<f64>,
    weights_fresh: bool,
    step: f64,
    grad_scale: f64,
    /// Backtracking state; `None` means every update uses `step`.
    adaptive: Option<Adaptive>,
}

/// Below this size the value change is dominated by rounding, so the
/// majorization check is skipped.
const TINY_CHANGE: f64 = 1e-9;

/// Per-coordinate trial steps and scratch buffers for backtracking.
#[derive(Debug)]
struct Adaptive {
    steps: Vec<f64>,
    /// `F(alpha m_p)` for the cached margins; valid when `weights_fresh`.
    smooth: Vec<f64>,
    trial_margins: Vec<f64>,
    trial_smooth: Vec<f64>,
    trial_slope: Vec<f64>,
}

#[derive(Debug)]
enum PairsRef<'a> {
    Owned(Box<ActivePairs>),
    Borrowed(&'a ActivePairs),
}

impl PairsRef<'_> {
    fn get(&self) -> &ActivePairs {
        match self {
            PairsRef::Owned(p) => p,
            PairsRef::Borrowed(p) => p,
        }
    }
}

impl<'a> CoordinateDescent<'a> {
    /// Starts at `branch.sign() * e_anchor`. `step = None` selects [`auto_step`].
    pub fn new(prob: &'a PairwiseProblem, branch: Branch, step: Option<f64>) -> Result<Self> {
        let pairs = ActivePairs::new(prob.x(), prob.w());
        if pairs.len == 0 {
            return Err(Error::DegenerateProblem("no pair with w_i > w_j".into()));
        }
        let step = match step {
            Some(t) => t,
            None => auto_step_with(prob, &pairs)?,
        };
        Ok(Self::from_pairs(prob, PairsRef::Owned(Box::new(pairs)), branch, step))
    }

    fn with_pairs(prob: &'a PairwiseProblem, pairs: &'a ActivePairs, branch: Branch, step: f64) -> Self {
        Self::from_pairs(prob, PairsRef::Borrowed(pairs), branch, step)
    }

    fn from_pairs(prob: &'a PairwiseProblem, pairs: PairsRef<'a>, branch: Branch, step: f64) -> Self {
        let mut beta = vec![0.0; prob.d()];
        beta[prob.anchor()] = branch.sign();
        let margins = pairs.get().margins(&beta);
        let n = prob.n() as f64;
        Self {
            prob,
            pairs,
            beta,
            weighted_slope: vec![0.0; margins.len()],
            margins,
            weights_fresh: false,
            step,
            grad_scale: -2.0 * prob.alpha() / (n * (n - 1.0)),
            adaptive: None,
        }
    }

    fn with_backtracking(mut self) -> Self {
        let len = self.margins.len();
        self.adaptive = Some(Adaptive {
            steps: vec![4.0 * self.step; self.beta.len()],
            smooth: vec![0.0; len],
            trial_margins: vec![0.0; len],
            trial_smooth: vec![0.0; len],
            trial_slope: vec![0.0; len],
        });
        self
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Smooth-loss partial derivative at the current iterate.
    pub fn gradient(&mut self, k: usize) -> f64 {
        if !self.weights_fresh {
            let alpha = self.prob.alpha();
            let pairs = self.pairs.get();
            match &mut self.adaptive {
                None => kernels::weighted_slope(&mut self.weighted_slope, &pairs.dw, &self.margins, alpha),
                Some(ad) => {
                    kernels::smooth(&mut ad.smooth, &self.margins, alpha);
                    kernels::slope_from_smooth(&mut self.weighted_slope, &ad.smooth, &pairs.dw);
                }
            }
            self.weights_fresh = true;
        }
        self.grad_scale * kernels::dot(&self.weighted_slope, self.pairs.get().column(k))
    }

    /// Proximal update of coordinate `k`; returns the change applied.
    pub fn update(&mut self, k: usize) -> Result<f64> {
        if k == self.prob.anchor() {
            return Err(Error::InvalidCoordinate { index: k, reason: "the anchor coordinate is fixed".into() });
        }
        if k >= self.beta.len() {
            return Err(Error::InvalidCoordinate {
                index: k,
                reason: format!("must be below d = {}", self.beta.len()),
            });
        }
        let g = self.gradient(k);
        if self.adaptive.is_some() {
            return Ok(self.backtracking_update(k, g));
        }
        let old = self.beta[k];
        let new = soft_threshold(old - self.step * g, self.step * self.prob.lambda());
        let delta = new - old;
        if delta != 0.0 {
            self.beta[k] = new;
            kernels::axpy(&mut self.margins, delta, self.pairs.get().column(k));
            self.weights_fresh = false;
        }
        Ok(delta)
    }

    fn backtracking_update(&mut self, k: usize, g: f64) -> f64 {
        let alpha = self.prob.alpha();
        let lambda = self.prob.lambda();
        let n = self.prob.n() as f64;
        let value_scale = -2.0 / (n * (n - 1.0));
        let floor = self.step;
        let pairs = self.pairs.get();
        let col = pairs.column(k);
        let ad = self.adaptive.as_mut().expect("backtracking state");
        let old = self.beta[k];
        let mut t = ad.steps[k].max(floor);
        let mut first = true;
        loop {
            let new = soft_threshold(old - t * g, t * lambda);
            let delta = new - old;
            if delta == 0.0 {
                return 0.0;
            }
            kernels::shifted_smooth(&mut ad.trial_margins, &mut ad.trial_smooth, &self.margins, col, delta, alpha);
            let change = kernels::slope_and_change(&mut ad.trial_slope, &ad.trial_smooth, &ad.smooth, &pairs.dw);
            let smooth_change = value_scale * change;
            let bound = g * delta + delta * delta / (2.0 * t);
            if t <= floor || delta.abs() < TINY_CHANGE || smooth_change <= bound {
                self.beta[k] = new;
                std::mem::swap(&mut self.margins, &mut ad.trial_margins);
                std::mem::swap(&mut ad.smooth, &mut ad.trial_smooth);
                std::mem::swap(&mut self.weighted_slope, &mut ad.trial_slope);
                ad.steps[k] = if first { t * 1.25 } else { t };
                // weighted_slope now holds dw F(1-F) at the new margins.
                self.weights_fresh = true;
                return delta;
            }
            t = (t * 0.5).max(floor);
            first = false;
        }
    }

    /// Visits every free coordinate once in ascending order, then rebuilds
    /// the margin cache. Returns the largest absolute coordinate change.
    pub fn sweep(&mut self) -> Result<f64> {
        let mut max_change = 0.0f64;
        for k in 0..self.beta.len() {
            if k != self.prob.anchor() {
                max_change = max_change.max(self.update(k)?.abs());
            }
        }
        self.refresh_margins();
        Ok(max_change)
    }

    pub fn refresh_margins(&mut self) {
        self.margins = self.pairs.get().margins(&self.beta);
        self.weights_fresh = false;
    }

    /// Largest gap between cached and freshly computed margins.
    pub fn margin_drift(&self) -> f64 {
        let fresh = self.pairs.get().margins(&self.beta);
        fresh.iter().zip(&self.margins).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Penalized loss from the margin cache.
    pub fn cached_loss(&self) -> f64 {
        let alpha = self.prob.alpha();
        let n = self.prob.n() as f64;
        let s: f64 = self.pairs.get().dw.iter().zip(&self.margins).map(|(dw, m)| dw * logistic_fast(alpha * m)).sum();
        -2.0 * s / (n * (n - 1.0)) + self.prob.l1_penalty(&self.beta)
    }
}

fn run_branch(
    prob: &PairwiseProblem,
    pairs: &ActivePairs,
    branch: Branch,
    step: f64,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let mut cd = CoordinateDescent::with_pairs(prob, pairs, branch, step);
    if cfg.step == StepSize::Backtracking {
        cd = cd.with_backtracking();
    }
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        let change = cd.sweep()?;
        sweeps += 1;
        if !cd.cached_loss().is_finite() || cd.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Divergence { sweep: sweeps });
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let final_loss = prob.loss(&cd.beta)?;
    Ok(FitResult { beta: cd.beta, final_loss, sweeps, converged, init_branch: branch })
}

/// Minimizes the penalized smoothed loss. With [`Init::Both`] both anchor
/// signs are run and the lower final loss wins; ties go to the plus branch.
pub fn fit_beta(prob: &PairwiseProblem, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let pairs = ActivePairs::new(prob.x(), prob.w());
    if pairs.len == 0 {
        return Err(Error::DegenerateProblem("no pair with w_i > w_j".into()));
    }
    let step = match cfg.step {
        StepSize::Auto | StepSize::Backtracking => auto_step_with(prob, &pairs)?,
        StepSize::Fixed(t) => t,
    };
    pick_branch(cfg.init, |b| run_branch(prob, &pairs, b, step, cfg))
}

fn pick_branch(init: Init, mut run: impl FnMut(Branch) -> Result<FitResult>) -> Result<FitResult> {
    match init {
        Init::Plus => run(Branch::Plus),
        Init::Minus => run(Branch::Minus),
        Init::Both => {
            let plus = run(Branch::Plus)?;
            let minus = run(Branch::Minus)?;
            Ok(if minus.final_loss < plus.final_loss { minus } else { plus })
        }
    }
}

/// Hinge-loss baseline: exact cyclic coordinate minimization of the
/// piecewise-linear convex objective
/// `2/(n(n-1)) sum_{w_i > w_j} (w_i - w_j)(1 - beta'(x_i - x_j))_+ + lambda |beta|_1`
/// with the anchor fixed. `cfg.step` is ignored.
pub fn fit_hinge(prob: &PairwiseProblem, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let pairs = ActivePairs::new(prob.x(), prob.w());
    if pairs.len == 0 {
        return Err(Error::DegenerateProblem("no pair with w_i > w_j".into()));
    }
    pick_branch(cfg.init, |b| run_hinge_branch(prob, &pairs, b, cfg))
}

fn run_hinge_branch(prob: &PairwiseProblem, pairs: &ActivePairs, branch: Branch, cfg: &FitConfig) -> Result<FitResult> {
    let d = prob.d();
    let n = prob.n() as f64;
    // Rescale so the per-pair cost is dw * 2/(n(n-1)) and the penalty is lambda.
    let cost: Vec<f64> = pairs.dw.iter().map(|dw| 2.0 * dw / (n * (n - 1.0))).collect();
    let mut beta = vec![0.0; d];
    beta[prob.anchor()] = branch.sign();
    let mut margins = pairs.margins(&beta);
    let mut breaks: Vec<(f64, f64)> = Vec::with_capacity(pairs.len + 1);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        let mut max_change = 0.0f64;
        for k in (0..d).filter(|&k| k != prob.anchor()) {
            let col = pairs.column(k);
            let old = beta[k];
            // Term p as a function of b = beta_k: cost_p * (r_p - b a_p)_+.
            breaks.clear();
            let mut slope = -prob.lambda();
            for ((&c, &m), &a) in cost.iter().zip(&margins).zip(col) {
                if a == 0.0 {
                    continue;
                }
                let r = 1.0 - (m - old * a);
                breaks.push((r / a, c * a.abs()));
                if a > 0.0 {
                    slope -= c * a;
                }
            }
            breaks.push((0.0, 2.0 * prob.lambda()));
            breaks.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut new = breaks.last().map(|b| b.0).unwrap_or(0.0);
            for &(at, jump) in &breaks {
                slope += jump;
                if slope >= 0.0 {
                    new = at;
                    break;
                }
            }
            let delta = new - old;
            if delta != 0.0 {
                beta[k] = new;
                for (m, &a) in margins.iter_mut().zip(col) {
                    *m += delta * a;
                }
            }
            max_change = max_change.max(delta.abs());
        }
        sweeps += 1;
        margins = pairs.margins(&beta);
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Divergence { sweep: sweeps });
        }
        if max_change < cfg.tol {
            converged = true;
            break;
        }
    }
    let final_loss = prob.scal_hinge_loss(&beta)?;
    Ok(FitResult { beta, final_loss, sweeps, converged, init_branch: branch })
}
