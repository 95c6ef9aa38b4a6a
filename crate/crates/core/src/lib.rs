//! Parallel tempering with mode-rescaling swap moves.

pub mod cli;
pub mod clustering;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod marginal;
pub mod population;
pub mod scalar;
pub mod schedule_theory;
pub mod target;

pub use error::{Error, Result};
pub use scalar::Real;

pub use population::Algorithm;
pub use schedule_theory::TemperatureSchedule;
pub use target::{GaussianMixtureTarget, TargetDensity};

/// Double-precision trace log.
pub type TraceLog64 = diagnostics::TraceLog<f64>;
/// Single-precision trace log.
pub type TraceLog32 = diagnostics::TraceLog<f32>;

