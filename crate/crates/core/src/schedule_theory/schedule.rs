use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Inverse temperatures `1 = beta_0 > beta_1 > ... > beta_n > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Real")]
pub struct TemperatureSchedule<T> {
    betas: Vec<T>,
}

impl<T: Real> TemperatureSchedule<T> {
    pub fn new(betas: Vec<T>) -> Result<Self> {
        match betas.first() {
            None => return Err(Error::Config("schedule needs at least one level".into())),
            Some(&b0) if b0 != T::one() => {
                return Err(Error::Config(format!("coldest level must be 1, got {b0}")))
            }
            _ => {}
        }
        if betas.iter().any(|&b| !(b > T::zero()) || !b.is_finite()) {
            return Err(Error::Config("inverse temperatures must be positive".into()));
        }
        if let Some(i) = betas.windows(2).position(|w| !(w[1] < w[0])) {
            return Err(Error::Config(format!(
                "schedule not strictly decreasing at levels {i} -> {}: {} then {}",
                i + 1,
                betas[i],
                betas[i + 1]
            )));
        }
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[T] {
        &self.betas
    }

    pub fn levels(&self) -> usize {
        self.betas.len()
    }

    pub fn adjacencies(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn hottest(&self) -> T {
        *self.betas.last().expect("non-empty")
    }

    /// `beta_l - beta_{l+1}` for each adjacent pair.
    pub fn spacings(&self) -> Vec<T> {
        self.betas.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

impl<T: Real> TryFrom<Vec<T>> for TemperatureSchedule<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<TemperatureSchedule<T>> for Vec<T> {
    fn from(s: TemperatureSchedule<T>) -> Self {
        s.betas
    }
}

/// `{1, r, r^2, ..., r^{levels-1}}`.
pub fn geometric_schedule<T: Real>(ratio: T, levels: usize) -> Result<TemperatureSchedule<T>> {
    if !(ratio > T::zero() && ratio < T::one()) {
        return Err(Error::Config(format!("geometric ratio must lie in (0, 1), got {ratio}")));
    }
    if levels == 0 {
        return Err(Error::Config("schedule needs at least one level".into()));
    }
    composite_schedule(&[GeometricSegment {
        ratio,
        start_power: 0,
        count: levels,
    }])
}

/// One geometric run inside a composite schedule: the powers
/// `ratio^start, ..., ratio^{start+count-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricSegment<T> {
    pub ratio: T,
    pub start_power: u32,
    pub count: usize,
}

/// Concatenates geometric segments into one schedule.
pub fn composite_schedule<T: Real>(segments: &[GeometricSegment<T>]) -> Result<TemperatureSchedule<T>> {
    let mut betas = Vec::new();
    for s in segments {
        if !(s.ratio > T::zero() && s.ratio < T::one()) {
            return Err(Error::Config(format!("segment ratio must lie in (0, 1), got {}", s.ratio)));
        }
        betas.extend((0..s.count).map(|i| s.ratio.powi((s.start_power as usize + i) as i32)));
    }
    TemperatureSchedule::new(betas)
}

/// The 12-level ladder `{1, 0.08, 0.08^2, 0.08^3, 0.4^9, ..., 0.4^16}` used
/// for the uneven five-dimensional mixture.
pub fn five_dim_uneven_schedule<T: Real>() -> TemperatureSchedule<T> {
    composite_schedule(&[
        GeometricSegment {
            ratio: T::lit(0.08),
            start_power: 0,
            count: 4,
        },
        GeometricSegment {
            ratio: T::lit(0.4),
            start_power: 9,
            count: 8,
        },
    ])
    .expect("valid preset")
}
