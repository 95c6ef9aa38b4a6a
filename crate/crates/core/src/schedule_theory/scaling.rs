//! The limiting expected squared jumping distance of a rescaled swap as a
//! function of the spacing parameter `ell`, and its maximiser.
//!
//! Writing `c` for the curvature `-bracket >= 0`, the limit is
//! `2 ell^2 Phi(-ell sqrt(c) / sqrt 2)`. With `u = ell sqrt(c)` this is
//! `(2/c) u^2 Phi(-u / sqrt 2)`, so the optimal `u` is universal and
//! `ell_hat = u* / sqrt(c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `2 ell^2 Phi(-ell sqrt(curvature) / sqrt 2)`.
pub fn esjd_limit<T: Real>(ell: T, curvature: T) -> Result<T> {
    if !(curvature >= T::zero()) {
        return Err(Error::Domain(format!(
            "curvature must be non-negative, got {curvature}"
        )));
    }
    if !(ell >= T::zero()) {
        return Err(Error::Domain(format!("ell must be non-negative, got {ell}")));
    }
    Ok(esjd_unchecked(ell, curvature))
}

fn esjd_unchecked<T: Real>(ell: T, curvature: T) -> T {
    let two = T::lit(2.0);
    two * ell * ell * T::normal_cdf(-ell * curvature.sqrt() / two.sqrt())
}

/// Swap acceptance induced by `ell`: `2 Phi(-ell sqrt(curvature) / sqrt 2)`.
pub fn induced_acceptance<T: Real>(ell: T, curvature: T) -> T {
    let two = T::lit(2.0);
    two * T::normal_cdf(-ell * curvature.sqrt() / two.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OptimalScale<T> {
    /// `+inf` when the curvature is zero and the limit grows without bound.
    pub ell: T,
    /// `None` in the zero-curvature case.
    pub induced_acceptance: Option<T>,
}

impl<T: Real> OptimalScale<T> {
    pub fn is_unbounded(&self) -> bool {
        self.ell.is_infinite()
    }
}

/// Maximises `u^2 Phi(-u / sqrt 2)` over `u > 0` by golden-section search on
/// `[1e-6, 50]`, widening the upper end while the optimum sits on it.
pub fn optimal_u<T: Real>() -> T {
    let f = |u: T| u * u * T::normal_cdf(-u / T::lit(2.0).sqrt());
    let lo = T::lit(1e-6);
    let mut hi = T::lit(50.0);
    loop {
        let u = golden_max(f, lo, hi, T::lit(1e-12));
        if u < hi * T::lit(0.999) {
            return u;
        }
        hi = hi * T::lit(2.0);
    }
}

fn golden_max<T: Real, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, rel_tol: T) -> T {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..500 {
        if (b - a) <= rel_tol * (a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / T::lit(2.0)
}

/// The `ell` maximising [`esjd_limit`] and the acceptance it induces.
pub fn optimal_ell<T: Real>(curvature: T) -> Result<OptimalScale<T>> {
    if !(curvature >= T::zero()) || !curvature.is_finite() {
        return Err(Error::Domain(format!(
            "curvature must be finite and non-negative, got {curvature}"
        )));
    }
    if curvature == T::zero() {
        return Ok(OptimalScale {
            ell: T::infinity(),
            induced_acceptance: None,
        });
    }
    let u = optimal_u::<T>();
    let ell = u / curvature.sqrt();
    Ok(OptimalScale {
        ell,
        induced_acceptance: Some(induced_acceptance(ell, curvature)),
    })
}

/// Dense-grid maximiser of [`esjd_limit`] over `(0, 50/sqrt(curvature)]`,
/// refined by repeated local grids. Independent of the golden-section search.
pub fn grid_optimal_ell<T: Real>(curvature: T, points: usize) -> Result<T> {
    if !(curvature > T::zero()) {
        return Err(Error::Domain(format!("curvature must be positive, got {curvature}")));
    }
    let mut lo = T::zero();
    let mut hi = T::lit(50.0) / curvature.sqrt();
    let mut best = lo;
    for _ in 0..6 {
        let step = (hi - lo) / T::from_usize_lossy(points);
        let mut best_val = T::neg_infinity();
        for i in 0..=points {
            let ell = lo + step * T::from_usize_lossy(i);
            let v = esjd_unchecked(ell, curvature);
            if v > best_val {
                best_val = v;
                best = ell;
            }
        }
        lo = (best - step).max(T::zero());
        hi = best + step;
    }
    Ok(best)
}
