//! Decay of the bracket term as the inverse temperature grows.

use serde::{Deserialize, Serialize};

use super::functionals::marginal_functionals;
use super::quadrature::QuadSettings;
use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::scalar::Real;

/// Magnitudes below this are treated as underflow and left out of the fit.
pub const UNDERFLOW: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdOrderReport {
    pub marginal: String,
    pub symmetric: bool,
    pub gamma: f64,
    pub betas: Vec<f64>,
    pub brackets: Vec<f64>,
    /// Betas whose bracket underflowed and were left out of the fit.
    pub dropped: Vec<f64>,
    /// Least-squares slope of `log |bracket|` on `log beta`; `None` when
    /// fewer than two points survive (e.g. Gaussian marginals).
    pub slope: Option<f64>,
    /// `min(2 + gamma, 3)` for symmetric marginals, else `min(2 + gamma, 5/2)`.
    pub expected_k: f64,
}

impl ColdOrderReport {
    pub fn is_degenerate(&self) -> bool {
        self.slope.is_none()
    }

    /// `|slope + k| <= tol`.
    pub fn matches_expected(&self, tol: f64) -> bool {
        self.slope.is_some_and(|s| (s + self.expected_k).abs() <= tol)
    }

    /// `slope <= -k + tol`: the bracket decays at least as fast as `beta^{-k}`.
    pub fn satisfies_bound(&self, tol: f64) -> bool {
        self.slope.is_some_and(|s| s <= -self.expected_k + tol)
    }
}

pub fn expected_order(gamma: f64, symmetric: bool) -> f64 {
    let cap = if symmetric { 3.0 } else { 2.5 };
    (2.0 + gamma).min(cap)
}

/// Least-squares slope through `(x_i, y_i)`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Evaluates the bracket on an increasing grid spanning at least two decades
/// and fits its log-log slope.
pub fn cold_order_scan<T: Real, F: Marginal<T> + ?Sized>(
    marginal: &F,
    betas: &[T],
    gamma: f64,
    settings: &QuadSettings<T>,
) -> Result<ColdOrderReport> {
    if betas.len() < 2 || betas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("cold-order betas must be strictly increasing".into()));
    }
    let span = (betas[betas.len() - 1] / betas[0]).as_f64().log10();
    if span < 2.0 - 1e-9 {
        return Err(Error::Config(format!(
            "cold-order betas must span at least two decades, got {span:.2}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let mut brackets = Vec::with_capacity(betas.len());
    let (mut xs, mut ys, mut dropped) = (Vec::new(), Vec::new(), Vec::new());
    for &b in betas {
        let f = marginal_functionals(marginal, b, settings)?;
        let v = f.bracket.as_f64();
        brackets.push(v);
        if v.abs() < UNDERFLOW {
            log::info!("{}: bracket {v:e} at beta = {b} underflows, dropped from the fit", marginal.name());
            dropped.push(b.as_f64());
        } else {
            xs.push(b.as_f64().ln());
            ys.push(v.abs().ln());
        }
    }
    let symmetric = marginal.is_symmetric();
    Ok(ColdOrderReport {
        marginal: marginal.name(),
        symmetric,
        gamma,
        betas: betas.iter().map(|b| b.as_f64()).collect(),
        brackets,
        dropped,
        slope: (xs.len() >= 2).then(|| ls_slope(&xs, &ys)),
        expected_k: expected_order(gamma, symmetric),
    })
}

/// `count` log-spaced points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
