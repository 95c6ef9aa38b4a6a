//! Temperature ladders and the asymptotic theory of swap efficiency.

mod cold_order;
mod functionals;
mod quadrature;
mod scaling;
mod schedule;
mod tuner;

pub use cold_order::{cold_order_scan, expected_order, log_grid, ls_slope, ColdOrderReport, UNDERFLOW};
pub use functionals::{marginal_functionals, MarginalFunctionals};
pub use quadrature::{abs_scale, integrate, integrate_lower_tail, integrate_to, integrate_upper_tail, QuadOutcome, QuadSettings};
pub use scaling::{esjd_limit, grid_optimal_ell, induced_acceptance, optimal_ell, optimal_u, OptimalScale};
pub use schedule::{composite_schedule, five_dim_uneven_schedule, geometric_schedule, GeometricSegment, TemperatureSchedule};
pub use tuner::{tune_schedule, PilotConfig, TunedSchedule};
