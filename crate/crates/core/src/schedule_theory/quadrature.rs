//! Adaptive Gauss-Legendre quadrature for vector-valued integrands.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::Real;

const ORDER: usize = 20;

/// Nodes and weights of the `ORDER`-point rule on `[-1, 1]`.
fn rule() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSettings<T> {
    /// Tolerance relative to `int |f_c|`, per component.
    pub rel_tol: T,
    /// Floor on the absolute tolerance.
    pub abs_tol: T,
    pub max_panels: usize,
    pub initial_panels: usize,
    /// Half-width of the central window in units of `sigma_eff / sqrt(beta)`.
    pub window: T,
}

impl<T: Real> Default for QuadSettings<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-14),
            abs_tol: T::lit(1e-300),
            max_panels: 200_000,
            initial_panels: 16,
            window: T::lit(12.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOutcome<T, const M: usize> {
    pub values: [T; M],
    /// Sum of accepted panel error estimates.
    pub error: [T; M],
    pub panels: usize,
}

fn panel<T: Real, const M: usize, F: Fn(T) -> [T; M]>(f: &F, a: T, b: T) -> ([T; M], [T; M]) {
    let (nodes, weights) = rule();
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let mut sum = [T::zero(); M];
    let mut abs = [T::zero(); M];
    for (&x, &w) in nodes.iter().zip(weights) {
        let v = f(mid + half * T::lit(x));
        for c in 0..M {
            let term = T::lit(w) * half * v[c];
            sum[c] = sum[c] + term;
            abs[c] = abs[c] + term.abs();
        }
    }
    (sum, abs)
}

/// `int_a^b f`, with tolerance `rel_tol * int |f_c|` per component.
pub fn integrate<T: Real, const M: usize, F: Fn(T) -> [T; M]>(
    f: F,
    a: T,
    b: T,
    settings: &QuadSettings<T>,
) -> Result<QuadOutcome<T, M>> {
    let scale = abs_scale(&f, a, b, settings)?;
    let tol = scale.map(|s| (settings.rel_tol * s).max(settings.abs_tol));
    integrate_to(f, a, b, tol, settings)
}

/// Coarse estimate of `int_a^b |f_c|`.
pub fn abs_scale<T: Real, const M: usize, F: Fn(T) -> [T; M]>(
    f: &F,
    a: T,
    b: T,
    settings: &QuadSettings<T>,
) -> Result<[T; M]> {
    check_interval(a, b)?;
    let mut scale = [T::zero(); M];
    for w in initial_edges(a, b, settings).windows(2) {
        let (_, abs) = panel(f, w[0], w[1]);
        for c in 0..M {
            scale[c] = scale[c] + abs[c];
        }
    }
    Ok(scale)
}

fn check_interval<T: Real>(a: T, b: T) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Domain(format!("invalid integration interval [{a}, {b}]")));
    }
    Ok(())
}

fn initial_edges<T: Real>(a: T, b: T, settings: &QuadSettings<T>) -> Vec<T> {
    let n0 = settings.initial_panels.max(1);
    (0..=n0)
        .map(|i| a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(n0))
        .collect()
}

/// `int_a^b f` to the absolute tolerance `tol` per component.
///
/// A panel is accepted when its two halves agree with the whole to its share
/// of `tol`, or when the disagreement is at rounding level.
pub fn integrate_to<T: Real, const M: usize, F: Fn(T) -> [T; M]>(
    f: F,
    a: T,
    b: T,
    tol: [T; M],
    settings: &QuadSettings<T>,
) -> Result<QuadOutcome<T, M>> {
    check_interval(a, b)?;
    let width = b - a;
    let roundoff = T::lit(64.0) * T::epsilon();
    let mut values = [T::zero(); M];
    let mut error = [T::zero(); M];
    let edges = initial_edges(a, b, settings);
    let mut stack: Vec<(T, T)> = edges.windows(2).rev().map(|w| (w[0], w[1])).collect();
    let mut panels = 0usize;
    while let Some((lo, hi)) = stack.pop() {
        panels += 1;
        if panels > settings.max_panels {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] exceeded {} panels; stuck near [{lo}, {hi}], tolerance {:?}",
                settings.max_panels,
                tol.map(|t| t.as_f64())
            )));
        }
        let mid = (lo + hi) * T::lit(0.5);
        let (whole, _) = panel(&f, lo, hi);
        let (left, abs_l) = panel(&f, lo, mid);
        let (right, abs_r) = panel(&f, mid, hi);
        let share = (hi - lo) / width;
        let diff: [T; M] = std::array::from_fn(|c| (left[c] + right[c] - whole[c]).abs());
        if diff.iter().any(|d| d.is_nan()) {
            return Err(Error::Numerical(format!("integrand is not finite on [{lo}, {hi}]")));
        }
        let converged =
            (0..M).all(|c| diff[c] <= tol[c] * share || diff[c] <= roundoff * (abs_l[c] + abs_r[c]));
        // panels this narrow only chase rounding noise in the integrand
        let too_narrow = hi - lo <= T::lit(1e-13) * (lo.abs() + hi.abs());
        if converged || too_narrow {
            for c in 0..M {
                values[c] = values[c] + left[c] + right[c];
                error[c] = error[c] + diff[c];
            }
        } else {
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
    }
    Ok(QuadOutcome { values, error, panels })
}

/// `int_a^inf f` through `x = a + (1 - t) / t`, to the absolute tolerance
/// `tol` when given, else relative to the tail's own magnitude.
pub fn integrate_upper_tail<T: Real, const M: usize, F: Fn(T) -> [T; M]>(
    f: F,
    a: T,
    tol: Option<[T; M]>,
    settings: &QuadSettings<T>,
) -> Result<QuadOutcome<T, M>> {
    let g = |t: T| {
        let x = a + (T::one() - t) / t;
        let v = f(x);
        let jac = (t * t).recip();
        v.map(|vi| if vi == T::zero() { vi } else { vi * jac })
    };
    match tol {
        Some(tol) => integrate_to(g, T::zero(), T::one(), tol, settings),
        None => integrate(g, T::zero(), T::one(), settings),
    }
}

/// `int_-inf^b f`.
pub fn integrate_lower_tail<T: Real, const M: usize, F: Fn(T) -> [T; M]>(
    f: F,
    b: T,
    tol: Option<[T; M]>,
    settings: &QuadSettings<T>,
) -> Result<QuadOutcome<T, M>> {
    integrate_upper_tail(|y: T| f(-y), -b, tol, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let (nodes, weights) = rule();
        assert!((weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..2 * ORDER {
            let q: f64 = nodes.iter().zip(weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert!((q - exact).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn smooth_and_peaked_integrands() {
        let s = QuadSettings::<f64>::default();
        let out = integrate(|x: f64| [x.exp(), x.sin()], 0.0, 3.0, &s).unwrap();
        assert!((out.values[0] - (3.0_f64.exp() - 1.0)).abs() < 1e-12);
        assert!((out.values[1] - (1.0 - 3.0_f64.cos())).abs() < 1e-14);
        // sqrt singularity at the left end
        let out = integrate(|x: f64| [x.sqrt()], 0.0, 1.0, &s).unwrap();
        assert!((out.values[0] - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn tails() {
        let s = QuadSettings::<f64>::default();
        let g = |x: f64| [(-x * x / 2.0).exp()];
        let total = integrate_lower_tail(g, -1.0, None, &s).unwrap().values[0]
            + integrate(g, -1.0, 2.0, &s).unwrap().values[0]
            + integrate_upper_tail(g, 2.0, None, &s).unwrap().values[0];
        assert!((total - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
        // Cauchy tail
        let out = integrate_upper_tail(|x: f64| [1.0 / (1.0 + x * x)], 0.0, None, &s).unwrap();
        assert!((out.values[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }

    #[test]
    fn failure_is_reported() {
        let s = QuadSettings::<f64> {
            max_panels: 10,
            ..Default::default()
        };
        let err = integrate(|x: f64| [(50.0 * x).sin() / x.abs().max(1e-3)], -1.0, 1.0, &s);
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert!(integrate(|x: f64| [x], 1.0, 1.0, &QuadSettings::default()).is_err());
    }
}
