//! Expectations under `f^beta` that govern the limiting efficiency of the
//! rescaled swap: with `h = log f`, `k(x) = (x - mu) h'(x)` and
//! `r(x) = (x - mu)^2 h''(x)`,
//!
//! * `M = E[h]`, `S = E[k] = -1/beta`, `I = Var(h)`,
//! * `V = Cov(h, k) = 1/beta^2`, `R = E[r - k]`,
//! * `bracket = V/2 - I + R / (4 beta)`.
//!
//! The bracket equals `-Var(h - k/2)`, so it is never positive; the limiting
//! acceptance depends on its magnitude, exposed as [`MarginalFunctionals::curvature`].

use serde::{Deserialize, Serialize};

use super::quadrature::{abs_scale, integrate_lower_tail, integrate_to, integrate_upper_tail, QuadOutcome, QuadSettings};
use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MarginalFunctionals<T> {
    pub beta: T,
    /// `E[h]`.
    pub m: T,
    /// `E[k]`.
    pub s: T,
    /// `Var(h)`.
    pub i: T,
    /// `1 / beta^2`.
    pub v: T,
    /// `E[r - k]`.
    pub r: T,
    /// `V/2 - I + R / (4 beta)`.
    pub bracket: T,
    /// `Var(k)`.
    pub var_k: T,
    /// Quadrature value of `Cov(h, k)`, which should equal `v`.
    pub cov_hk: T,
    pub panels: usize,
}

impl<T: Real> MarginalFunctionals<T> {
    /// `-bracket`, clamped at zero.
    pub fn curvature(&self) -> T {
        (-self.bracket).max(T::zero())
    }

    /// Whether the bracket is zero relative to `V`, as for Gaussian marginals.
    pub fn is_degenerate(&self, rel_tol: T) -> bool {
        self.bracket.abs() <= rel_tol * self.v
    }

    /// `R/(4 beta) - (-Var(k)/4 + V/2)`, zero for every valid marginal.
    pub fn identity_residual(&self) -> T {
        let four = T::lit(4.0);
        self.r / (four * self.beta) - (-self.var_k / four + self.v / T::lit(2.0))
    }
}

/// Computes the functionals by quadrature over the support of `f^beta`.
///
/// The integration range is split into a central window of
/// `settings.window` effective standard deviations around the mode and two
/// tails mapped onto finite intervals, so no probability mass is truncated.
pub fn marginal_functionals<T: Real, F: Marginal<T> + ?Sized>(
    marginal: &F,
    beta: T,
    settings: &QuadSettings<T>,
) -> Result<MarginalFunctionals<T>> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::Domain(format!("inverse temperature must be positive, got {beta}")));
    }
    if !(beta > marginal.min_beta()) {
        return Err(Error::Domain(format!(
            "{} marginal: beta = {beta} is not above {} where f^beta or the moments of k stop being integrable",
            marginal.name(),
            marginal.min_beta()
        )));
    }
    let mu = marginal.mode();
    let h0 = marginal.log_density(mu);
    let curv = -marginal.d2(mu);
    if !(curv > T::zero()) {
        return Err(Error::Domain(format!(
            "{} marginal has no negative curvature at its mode {mu}",
            marginal.name()
        )));
    }
    let spread = settings.window / (curv * beta).sqrt();
    let (lo_support, hi_support) = marginal.support();
    let lo = (mu - spread).max(lo_support);
    let hi = (mu + spread).min(hi_support);

    let integrand = |x: T| -> [T; 7] {
        let g = marginal.log_ratio(x, mu);
        let w = (beta * g).exp();
        if w == T::zero() || !w.is_finite() {
            return [T::zero(); 7];
        }
        let y = x - mu;
        let k = y * marginal.d1(x);
        let r = y * y * marginal.d2(x);
        [w, w * g, w * g * g, w * k, w * k * k, w * r, w * g * k]
    };

    // tails and the bounded pieces beyond the window are held to a tolerance
    // relative to the bulk, not to their own (tiny) magnitude
    let bulk_l = abs_scale(&integrand, lo, mu, settings)?;
    let bulk_r = abs_scale(&integrand, mu, hi, settings)?;
    let tol: [T; 7] = std::array::from_fn(|c| (settings.rel_tol * (bulk_l[c] + bulk_r[c])).max(settings.abs_tol));

    let mut total = [T::zero(); 7];
    let mut panels = 0;
    let mut add = |out: QuadOutcome<T, 7>| {
        for c in 0..7 {
            total[c] = total[c] + out.values[c];
        }
        panels += out.panels;
    };
    add(integrate_to(integrand, lo, mu, tol, settings)?);
    add(integrate_to(integrand, mu, hi, tol, settings)?);
    if lo > lo_support {
        if lo_support.is_finite() {
            add(integrate_to(integrand, lo_support, lo, tol, settings)?);
        } else {
            add(integrate_lower_tail(integrand, lo, Some(tol), settings)?);
        }
    }
    if hi < hi_support {
        if hi_support.is_finite() {
            add(integrate_to(integrand, hi, hi_support, tol, settings)?);
        } else {
            add(integrate_upper_tail(integrand, hi, Some(tol), settings)?);
        }
    }

    let z = total[0];
    if !(z > T::zero()) || !z.is_finite() {
        return Err(Error::Numerical(format!("normalising constant of f^beta is {z}")));
    }
    let e = |c: usize| total[c] / z;
    let (eg, eg2, ek, ek2, er, egk) = (e(1), e(2), e(3), e(4), e(5), e(6));
    let i = eg2 - eg * eg;
    let var_k = ek2 - ek * ek;
    let r = er - ek;
    let v = (beta * beta).recip();
    let bracket = v / T::lit(2.0) - i + r / (T::lit(4.0) * beta);
    let cov_hk = egk - eg * ek;
    let out = MarginalFunctionals {
        beta,
        m: h0 + eg,
        s: ek,
        i,
        v,
        r,
        bracket,
        var_k,
        cov_hk,
        panels,
    };
    let cov_err = ((cov_hk - v) / v).abs();
    if !(cov_err < T::lit(1e-6)) {
        return Err(Error::Numerical(format!(
            "quadrature covariance of h and k is {cov_hk}, expected 1/beta^2 = {v} (functionals: {out:?})"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::{GammaMarginal, GaussianMarginal, StudentTMarginal};

    #[test]
    fn gaussian_closed_forms() {
        let s = QuadSettings::default();
        for &(mu, sigma) in &[(0.0_f64, 1.0_f64), (3.0, 0.01), (-50.0, 7.0)] {
            let g = GaussianMarginal::new(mu, sigma);
            for &beta in &[0.01_f64, 1.0, 100.0] {
                let f = marginal_functionals(&g, beta, &s).unwrap();
                assert!((f.i - 0.5 / (beta * beta)).abs() < 1e-9, "{f:?}");
                assert!(f.bracket.abs() < 1e-8, "{f:?}");
                assert!((f.s + 1.0 / beta).abs() < 1e-8);
                assert!(f.is_degenerate(1e-10));
                // h = -y^2/(2 s^2), so E[h] = -1/(2 beta)
                assert!((f.m + 0.5 / beta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn student_t_reference_values() {
        // independent mpmath quadrature
        let t = StudentTMarginal::new(5.0);
        let s = QuadSettings::default();
        let refs = [
            (1.0_f64, -0.17131320326807592_f64, 0.1875_f64),
            (10.0, -1.6610100250514208e-05, 0.00024193548387096766),
            (100.0, -1.6659853145493196e-09, 2.4916943521594694e-07),
        ];
        for (beta, bracket, r4b) in refs {
            let f = marginal_functionals(&t, beta, &s).unwrap();
            assert!((f.bracket - bracket).abs() < 1e-9 * bracket.abs().max(1e-6), "{beta}: {}", f.bracket);
            assert!((f.r / (4.0 * beta) - r4b).abs() < 1e-12 * r4b.max(1.0));
            assert!(f.identity_residual().abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_and_t_cold_values() {
        let s = QuadSettings::default();
        let t10 = StudentTMarginal::new(10.0);
        let g5 = GammaMarginal::new(5.0, 1.0);
        let cases: [(&dyn Marginal<f64>, f64, f64); 4] = [
            (&t10, 10.0, -4.948557285e-6),
            (&t10, 100.0, -4.957562313e-10),
            (&g5, 10.0, -1.057640248e-4),
            (&g5, 100.0, -1.043232562e-7),
        ];
        for (m, beta, expected) in cases {
            let f = marginal_functionals(m, beta, &s).unwrap();
            assert!(((f.bracket - expected) / expected).abs() < 1e-8, "{} {beta}: {}", m.name(), f.bracket);
        }
    }

    #[test]
    fn non_integrable_powers_are_refused() {
        let s = QuadSettings::default();
        let t = StudentTMarginal::new(5.0);
        assert!(matches!(marginal_functionals(&t, 0.1, &s), Err(Error::Domain(_))));
        assert!(matches!(marginal_functionals(&t, -1.0, &s), Err(Error::Domain(_))));
        let g = GammaMarginal::new(5.0, 1.0);
        assert!(marginal_functionals(&g, 0.2, &s).is_err());
        assert!(marginal_functionals(&g, 0.5, &s).is_ok());
    }
}
