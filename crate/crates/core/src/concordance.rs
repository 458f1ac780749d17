//! Pairwise concordance objectives.
//!
//! For subjects with contrast weights `w` and scores `s = X beta`, the
//! smoothed concordance is
//!
//! ```text
//! C(beta) = 1/(n(n-1)) * sum_{i != j} (w_i - w_j) F(alpha (s_i - s_j))
//! ```
//!
//! and the penalized loss restricts the sum to the pairs with `w_i > w_j`:
//!
//! ```text
//! l(beta) = -2/(n(n-1)) * sum_{w_i > w_j} (w_i - w_j) F(alpha (s_i - s_j)) + lambda |beta|_1
//! ```
//!
//! Since `F(m) + F(-m) = 1`, the two forms differ by the constant
//! `1/(n(n-1)) * sum_{w_i > w_j} (w_i - w_j)`. Pairs with tied weights
//! contribute nothing to either. The L1 norm includes the anchor coordinate,
//! which adds the constant `lambda` to every loss value.
//!
//! Sums over pairs are split into fixed blocks of rows whose partial sums are
//! combined sequentially, so results are bit-identical for any worker count.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::smoothing::{logistic, logistic_prime, SmoothingKernel};

const ROW_BLOCK: usize = 32;

/// Deterministic parallel sum of `row_term(i)` over `0..n`.
pub(crate) fn block_sum<F>(n: usize, row_term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let blocks = n.div_ceil(ROW_BLOCK);
    let partial: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * ROW_BLOCK;
            let hi = (lo + ROW_BLOCK).min(n);
            let mut acc = 0.0;
            for i in lo..hi {
                acc += row_term(i);
            }
            acc
        })
        .collect();
    partial.iter().sum()
}

/// `X beta`, one row at a time in index order.
pub fn scores(x: ArrayView2<'_, f64>, beta: &[f64]) -> Vec<f64> {
    x.rows().into_iter().map(|row| row.iter().zip(beta).map(|(a, b)| a * b).sum()).collect()
}

#[derive(Debug, Clone)]
pub struct PairwiseProblem {
    x: Array2<f64>,
    w: Vec<f64>,
    kernel: SmoothingKernel,
    lambda: f64,
    anchor: usize,
}

impl PairwiseProblem {
    /// Problem over covariates `x` (n x d) and weights `w`, anchored at coordinate 0.
    pub fn new(x: Array2<f64>, w: Vec<f64>, alpha: f64, lambda: f64) -> Result<Self> {
        let n = x.nrows();
        if w.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: w.len() });
        }
        if n < 2 {
            return Err(Error::InsufficientPairs(n));
        }
        if x.ncols() == 0 {
            return Err(Error::Validation("covariate dimension must be at least 1".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("contrast weights must be finite".into()));
        }
        Ok(Self { x, w, kernel: SmoothingKernel::new(alpha)?, lambda, anchor: 0 })
    }

    /// Moves the anchor to the zero-based coordinate `index`.
    pub fn with_anchor(mut self, index: usize) -> Result<Self> {
        if index >= self.d() {
            return Err(Error::InvalidCoordinate { index, reason: format!("anchor must be below d = {}", self.d()) });
        }
        self.anchor = index;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be finite and non-negative, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.kernel = SmoothingKernel::new(alpha)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn kernel(&self) -> SmoothingKernel {
        self.kernel
    }

    pub fn alpha(&self) -> f64 {
        self.kernel.alpha()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    fn pair_norm(&self) -> f64 {
        let n = self.n() as f64;
        n * (n - 1.0)
    }

    fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: beta.len() });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("beta must be finite".into()));
        }
        Ok(())
    }

    pub fn l1_penalty(&self, beta: &[f64]) -> f64 {
        self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `sum_{w_i > w_j} (w_i - w_j)`.
    pub fn positive_difference_sum(&self) -> f64 {
        let w = &self.w;
        block_sum(self.n(), |i| w.iter().filter(|&&wj| w[i] > wj).map(|&wj| w[i] - wj).sum())
    }

    /// Smoothed concordance over all ordered pairs.
    pub fn smoothed_concordance(&self, beta: &[f64]) -> Result<f64> {
        self.check_beta(beta)?;
        let s = scores(self.x.view(), beta);
        let (w, alpha) = (&self.w, self.alpha());
        let total = block_sum(self.n(), |i| {
            let mut acc = 0.0;
            for j in 0..w.len() {
                if j != i {
                    acc += (w[i] - w[j]) * logistic(alpha * (s[i] - s[j]));
                }
            }
            acc
        });
        Ok(total / self.pair_norm())
    }

    /// The smooth part of [`loss`](Self::loss), without the penalty.
    pub fn smooth_loss(&self, beta: &[f64]) -> Result<f64> {
        self.check_beta(beta)?;
        let s = scores(self.x.view(), beta);
        let (w, alpha) = (&self.w, self.alpha());
        let total = block_sum(self.n(), |i| {
            let mut acc = 0.0;
            for j in 0..w.len() {
                if w[i] > w[j] {
                    acc += (w[i] - w[j]) * logistic(alpha * (s[i] - s[j]));
                }
            }
            acc
        });
        Ok(-2.0 * total / self.pair_norm())
    }

    /// Penalized smoothed loss.
    pub fn loss(&self, beta: &[f64]) -> Result<f64> {
        Ok(self.smooth_loss(beta)? + self.l1_penalty(beta))
    }

    /// Partial derivative of the smooth loss in coordinate `k`, summed over
    /// ordered pairs with the `alpha` factor explicit.
    pub fn loss_gradient_coord(&self, beta: &[f64], k: usize) -> Result<f64> {
        self.check_beta(beta)?;
        if k == self.anchor {
            return Err(Error::InvalidCoordinate { index: k, reason: "the anchor coordinate is fixed".into() });
        }
        if k >= self.d() {
            return Err(Error::InvalidCoordinate { index: k, reason: format!("must be below d = {}", self.d()) });
        }
        let s = scores(self.x.view(), beta);
        let xk = self.x.column(k);
        let (w, alpha) = (&self.w, self.alpha());
        let total = block_sum(self.n(), |i| {
            let mut acc = 0.0;
            for j in 0..w.len() {
                if j != i {
                    acc += (w[i] - w[j]) * (xk[i] - xk[j]) * logistic_prime(alpha * (s[i] - s[j]));
                }
            }
            acc
        });
        Ok(-alpha * total / self.pair_norm())
    }

    /// Exact concordance with the indicator `1(s_i > s_j)`; ties count zero.
    pub fn indicator_concordance(&self, beta: &[f64]) -> Result<f64> {
        self.check_beta(beta)?;
        let s = scores(self.x.view(), beta);
        Ok(indicator_concordance_from_scores(&self.w, &s))
    }

    /// Hinge-loss surrogate `2/(n(n-1)) sum_{w_i > w_j} (w_i - w_j)(1 - (s_i - s_j))_+ + lambda |beta|_1`.
    pub fn scal_hinge_loss(&self, beta: &[f64]) -> Result<f64> {
        self.check_beta(beta)?;
        let s = scores(self.x.view(), beta);
        let w = &self.w;
        let total = block_sum(self.n(), |i| {
            let mut acc = 0.0;
            for j in 0..w.len() {
                if w[i] > w[j] {
                    acc += (w[i] - w[j]) * (1.0 - (s[i] - s[j])).max(0.0);
                }
            }
            acc
        });
        Ok(2.0 * total / self.pair_norm() + self.l1_penalty(beta))
    }
}

/// `1/(n(n-1)) sum_{i != j} (w_i - w_j) 1(s_i > s_j)`.
pub fn indicator_concordance_from_scores(w: &[f64], s: &[f64]) -> f64 {
    let n = w.len();
    if n < 2 {
        return 0.0;
    }
    let total = block_sum(n, |i| {
        let mut acc = 0.0;
        for j in 0..n {
            if s[i] > s[j] {
                acc += w[i] - w[j];
            }
        }
        acc
    });
    total / (n as f64 * (n as f64 - 1.0))
}

/// Unordered pairs with `w_i > w_j`, covariate differences stored column-major
/// so that one coordinate's differences are contiguous.
#[derive(Debug, Clone)]
pub(crate) struct ActivePairs {
    pub(crate) len: usize,
    pub(crate) dw: Vec<f64>,
    dx: Vec<f64>,
}

impl ActivePairs {
    pub(crate) fn new(x: ArrayView2<'_, f64>, w: &[f64]) -> Self {
        let n = x.nrows();
        let d = x.ncols();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if w[i] > w[j] {
                    pairs.push((i, j));
                }
            }
        }
        let len = pairs.len();
        let dw = pairs.iter().map(|&(i, j)| w[i] - w[j]).collect();
        let mut dx = vec![0.0; len * d];
        for k in 0..d {
            let col = x.column(k);
            let out = &mut dx[k * len..(k + 1) * len];
            for (o, &(i, j)) in out.iter_mut().zip(&pairs) {
                *o = col[i] - col[j];
            }
        }
        Self { len, dw, dx }
    }

    #[inline]
    pub(crate) fn column(&self, k: usize) -> &[f64] {
        &self.dx[k * self.len..(k + 1) * self.len]
    }

    /// Margins `beta' (x_i - x_j)` for every active pair.
    pub(crate) fn margins(&self, beta: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.len];
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (mp, &dxp) in m.iter_mut().zip(self.column(k)) {
                    *mp += b * dxp;
                }
            }
        }
        m
    }
}
