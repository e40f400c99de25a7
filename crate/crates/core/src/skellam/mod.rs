//! Skellam likelihood for signed integer pair weights.
//!
//! `y = N+ - N-` with `N+ ~ Poisson(lambda_pos)`, `N- ~ Poisson(lambda_neg)`:
//!
//! ```text
//! log P(y) = -(lp + ln) + (y/2) log(lp/ln) + log I_|y|(2 sqrt(lp ln))
//! ```

pub mod bessel;

pub use bessel::{bessel_ratio, log_bessel_i, log_bessel_i0};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkellamError {
    #[error("length mismatch: {observations} observations for {pairs} rate pairs")]
    LengthMismatch { observations: usize, pairs: usize },
}

/// Pairwise rates `(lambda_pos, lambda_neg)`, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SkellamRates {
    pub pairs: Vec<(usize, usize)>,
    pub lambda_pos: Vec<f64>,
    pub lambda_neg: Vec<f64>,
}

impl SkellamRates {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// `(y/2) log(lp/ln)`, exactly zero when `y = 0`.
#[inline]
fn drift(y: i64, lp: f64, ln: f64) -> f64 {
    if y == 0 {
        0.0
    } else {
        0.5 * y as f64 * (lp.ln() - ln.ln())
    }
}

#[inline]
fn bessel_arg(lp: f64, ln: f64) -> f64 {
    2.0 * (lp.sqrt() * ln.sqrt())
}

#[inline]
fn order(y: i64) -> u32 {
    u32::try_from(y.unsigned_abs()).expect("pair weight magnitude exceeds u32")
}

pub fn skellam_log_pmf(y: i64, lp: f64, ln: f64) -> f64 {
    -(lp + ln) + drift(y, lp, ln) + log_bessel_i(order(y), bessel_arg(lp, ln))
}

/// Loss and rate derivatives for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairNll {
    pub loss: f64,
    /// d loss / d lambda_pos
    pub d_pos: f64,
    /// d loss / d lambda_neg
    pub d_neg: f64,
}

/// Negative log-likelihood of one pair and its gradient in the rates.
///
/// With `s = 2 sqrt(lp ln)`, `nu = |y|` and `r = I_{nu+1}(s) / I_nu(s)`,
/// `I'_nu / I_nu = r + nu/s`, which after the chain rule gives
///
/// ```text
/// d/dlp = 1 - (y + nu) / (2 lp) - r sqrt(ln/lp)
/// d/dln = 1 + (y - nu) / (2 ln) - r sqrt(lp/ln)
/// ```
pub fn pair_nll(y: i64, lp: f64, ln: f64) -> PairNll {
    let nu = order(y);
    let s = bessel_arg(lp, ln);
    let (log_i, r) = bessel::log_bessel_i_and_ratio(nu, s);
    let loss = (lp + ln) - drift(y, lp, ln) - log_i;
    let yf = y as f64;
    let nuf = nu as f64;
    PairNll {
        loss,
        d_pos: 1.0 - (yf + nuf) / (2.0 * lp) - r * (ln / lp).sqrt(),
        d_neg: 1.0 + (yf - nuf) / (2.0 * ln) - r * (lp / ln).sqrt(),
    }
}

/// Summed loss with per-pair gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNll {
    pub total: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// Sum of [`pair_nll`] over the rate pairs, accumulated in pair order.
pub fn batch_nll(y: &[i64], rates: &SkellamRates) -> Result<BatchNll, SkellamError> {
    batch_nll_slices(y, &rates.lambda_pos, &rates.lambda_neg)
}

pub(crate) fn batch_nll_slices(y: &[i64], lp: &[f64], ln: &[f64]) -> Result<BatchNll, SkellamError> {
    if y.len() != lp.len() || lp.len() != ln.len() {
        return Err(SkellamError::LengthMismatch {
            observations: y.len(),
            pairs: lp.len().min(ln.len()),
        });
    }
    let mut total = 0.0;
    let mut d_pos = Vec::with_capacity(y.len());
    let mut d_neg = Vec::with_capacity(y.len());
    for ((&yi, &a), &b) in y.iter().zip(lp).zip(ln) {
        let p = pair_nll(yi, a, b);
        total += p.loss;
        d_pos.push(p.d_pos);
        d_neg.push(p.d_neg);
    }
    Ok(BatchNll { total, d_pos, d_neg })
}
