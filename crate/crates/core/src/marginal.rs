//! One-dimensional unimodal marginals `f = exp(h)` used by product targets and
//! by the scaling functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A unimodal 1-D log-density `h(x) = log f(x)` up to an additive constant.
pub trait Marginal<T: Real>: Send + Sync {
    fn name(&self) -> String;

    /// `h(x)`; `-inf` outside the support.
    fn log_density(&self, x: T) -> T;

    /// `h(x) - h(x0)`. Overridden where a form without cancellation exists.
    fn log_ratio(&self, x: T, x0: T) -> T {
        self.log_density(x) - self.log_density(x0)
    }

    /// Location of the maximum of `f`.
    fn mode(&self) -> T;

    fn support(&self) -> (T, T) {
        (T::neg_infinity(), T::infinity())
    }

    /// `h'(x)`. Defaults to a 5-point central difference.
    fn d1(&self, x: T) -> T {
        let h = fd_step(x);
        let two = T::lit(2.0);
        let eight = T::lit(8.0);
        (self.log_density(x - two * h) - eight * self.log_density(x - h)
            + eight * self.log_density(x + h)
            - self.log_density(x + two * h))
            / (T::lit(12.0) * h)
    }

    /// `h''(x)`. Defaults to a 5-point central difference.
    fn d2(&self, x: T) -> T {
        let h = fd_step(x);
        let two = T::lit(2.0);
        let sixteen = T::lit(16.0);
        (-self.log_density(x - two * h) + sixteen * self.log_density(x - h)
            - T::lit(30.0) * self.log_density(x)
            + sixteen * self.log_density(x + h)
            - self.log_density(x + two * h))
            / (T::lit(12.0) * h * h)
    }

    /// Whether `f` is symmetric about its mode.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Infimum of the inverse temperatures for which `f^beta` and the moments
    /// entering the scaling functionals are integrable.
    fn min_beta(&self) -> T {
        T::zero()
    }
}

fn fd_step<T: Real>(x: T) -> T {
    T::lit(1e-5) * (T::one() + x.abs())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMarginal<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Real> GaussianMarginal<T> {
    pub fn new(mu: T, sigma: T) -> Self {
        Self { mu, sigma }
    }
}

impl<T: Real> Marginal<T> for GaussianMarginal<T> {
    fn name(&self) -> String {
        format!("gaussian(mu={}, sigma={})", self.mu, self.sigma)
    }
    fn log_density(&self, x: T) -> T {
        let z = (x - self.mu) / self.sigma;
        -T::lit(0.5) * z * z
    }
    fn mode(&self) -> T {
        self.mu
    }
    fn d1(&self, x: T) -> T {
        -(x - self.mu) / (self.sigma * self.sigma)
    }
    fn d2(&self, _x: T) -> T {
        -(self.sigma * self.sigma).recip()
    }
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Gamma with shape `a > 1` and rate `b`: `h(x) = (a-1) log x - b x` on `x > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMarginal<T> {
    pub shape: T,
    pub rate: T,
}

impl<T: Real> GammaMarginal<T> {
    pub fn new(shape: T, rate: T) -> Self {
        Self { shape, rate }
    }
}

impl<T: Real> Marginal<T> for GammaMarginal<T> {
    fn name(&self) -> String {
        format!("gamma(shape={}, rate={})", self.shape, self.rate)
    }
    fn log_density(&self, x: T) -> T {
        if x <= T::zero() {
            return T::neg_infinity();
        }
        (self.shape - T::one()) * x.ln() - self.rate * x
    }
    fn log_ratio(&self, x: T, x0: T) -> T {
        if x <= T::zero() {
            return T::neg_infinity();
        }
        let y = x - x0;
        let z = y / x0;
        let log_ratio = if z.abs() < T::lit(0.5) { z.ln_1p() } else { (x / x0).ln() };
        (self.shape - T::one()) * log_ratio - self.rate * y
    }
    fn mode(&self) -> T {
        (self.shape - T::one()) / self.rate
    }
    fn support(&self) -> (T, T) {
        (T::zero(), T::infinity())
    }
    fn d1(&self, x: T) -> T {
        (self.shape - T::one()) / x - self.rate
    }
    fn d2(&self, x: T) -> T {
        -(self.shape - T::one()) / (x * x)
    }
    // Var((x - mu) h'(x)) needs x^{beta (a-1) - 2} integrable at 0.
    fn min_beta(&self) -> T {
        (self.shape - T::one()).recip()
    }
}

/// Student-t with `nu` degrees of freedom, centred at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudentTMarginal<T> {
    pub nu: T,
}

impl<T: Real> StudentTMarginal<T> {
    pub fn new(nu: T) -> Self {
        Self { nu }
    }
}

impl<T: Real> Marginal<T> for StudentTMarginal<T> {
    fn name(&self) -> String {
        format!("student_t(nu={})", self.nu)
    }
    fn log_density(&self, x: T) -> T {
        -T::lit(0.5) * (self.nu + T::one()) * (x * x / self.nu).ln_1p()
    }
    fn mode(&self) -> T {
        T::zero()
    }
    fn d1(&self, x: T) -> T {
        -(self.nu + T::one()) * x / (self.nu + x * x)
    }
    fn d2(&self, x: T) -> T {
        let s = self.nu + x * x;
        -(self.nu + T::one()) * (self.nu - x * x) / (s * s)
    }
    fn is_symmetric(&self) -> bool {
        true
    }
    // Tails of f^beta decay like |x|^{-beta (nu + 1)}.
    fn min_beta(&self) -> T {
        (self.nu + T::one()).recip()
    }
}

/// Serializable catalogue entry naming one of the built-in marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    Gaussian {
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    Gamma {
        shape: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    StudentT {
        nu: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Names accepted by [`MarginalSpec`].
pub const CATALOGUE: &[&str] = &["gaussian", "gamma", "student_t"];

/// A built-in marginal selected at run time.
#[derive(Clone, Debug, PartialEq)]
pub enum CatalogueMarginal<T> {
    Gaussian(GaussianMarginal<T>),
    Gamma(GammaMarginal<T>),
    StudentT(StudentTMarginal<T>),
}

impl MarginalSpec {
    pub fn build<T: Real>(&self) -> Result<CatalogueMarginal<T>> {
        match *self {
            MarginalSpec::Gaussian { mu, sigma } => {
                if !(sigma > 0.0) {
                    return Err(Error::Config("gaussian sigma must be positive".into()));
                }
                Ok(CatalogueMarginal::Gaussian(GaussianMarginal::new(T::lit(mu), T::lit(sigma))))
            }
            MarginalSpec::Gamma { shape, rate } => {
                if !(shape > 1.0) || !(rate > 0.0) {
                    return Err(Error::Config(
                        "gamma needs shape > 1 (interior mode) and rate > 0".into(),
                    ));
                }
                Ok(CatalogueMarginal::Gamma(GammaMarginal::new(T::lit(shape), T::lit(rate))))
            }
            MarginalSpec::StudentT { nu } => {
                if !(nu > 0.0) {
                    return Err(Error::Config("student_t nu must be positive".into()));
                }
                Ok(CatalogueMarginal::StudentT(StudentTMarginal::new(T::lit(nu))))
            }
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            CatalogueMarginal::Gaussian($m) => $e,
            CatalogueMarginal::Gamma($m) => $e,
            CatalogueMarginal::StudentT($m) => $e,
        }
    };
}

impl<T: Real> Marginal<T> for CatalogueMarginal<T> {
    fn name(&self) -> String {
        dispatch!(self, m => m.name())
    }
    fn log_density(&self, x: T) -> T {
        dispatch!(self, m => m.log_density(x))
    }
    fn log_ratio(&self, x: T, x0: T) -> T {
        dispatch!(self, m => m.log_ratio(x, x0))
    }
    fn mode(&self) -> T {
        dispatch!(self, m => m.mode())
    }
    fn support(&self) -> (T, T) {
        dispatch!(self, m => m.support())
    }
    fn d1(&self, x: T) -> T {
        dispatch!(self, m => m.d1(x))
    }
    fn d2(&self, x: T) -> T {
        dispatch!(self, m => m.d2(x))
    }
    fn is_symmetric(&self) -> bool {
        dispatch!(self, m => m.is_symmetric())
    }
    fn min_beta(&self) -> T {
        dispatch!(self, m => m.min_beta())
    }
}
