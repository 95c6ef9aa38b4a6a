//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Scalar type the samplers, clustering and quadrature are written against.
///
/// Implemented for `f32` and `f64`. Special functions go through `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on the open interval (0, 1).
    fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Complementary error function.
    #[inline]
    fn erfc(self) -> Self {
        Self::lit(libm::erfc(self.as_f64()))
    }

    /// Standard normal CDF.
    #[inline]
    fn normal_cdf(self) -> Self {
        Self::lit(0.5 * libm::erfc(-self.as_f64() / std::f64::consts::SQRT_2))
    }
}

impl Real for f64 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::Open01)
    }
}

impl Real for f32 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::Open01)
    }
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// `log(sum(exp(v)))` with the maximum shifted out.
pub fn log_sum_exp<T: Real>(values: impl IntoIterator<Item = T> + Clone) -> T {
    let max = values
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, v| if v > m { v } else { m });
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    let sum: T = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_survives_underflow() {
        let v = [-1.0e6_f64, -1.0e6 - 2.0_f64.ln()];
        let got = log_sum_exp(v);
        let expected = -1.0e6 + 1.5_f64.ln();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_all_neg_inf() {
        assert_eq!(
            log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn normal_cdf_matches_known_values() {
        assert!((0.0_f64.normal_cdf() - 0.5).abs() < 1e-15);
        // P(Z <= -1)
        assert!(((-1.0_f64).normal_cdf() - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!(((-1.0_f32).normal_cdf() - 0.158_655_25).abs() < 1e-6);
    }
}
