//! Builds a ladder downward from `beta = 1`, choosing each spacing so that the
//! swap acceptance between neighbours is close to a target rate.
//!
//! Each new level is placed at `beta_next = beta * exp(-exp(theta))`, and
//! `theta` follows a Robbins-Monro recursion driven by the acceptance
//! estimated from a short two-level pilot population. Pilot chains are warm
//! started from a Laplace approximation around each known mode and estimate
//! acceptance by averaging acceptance probabilities.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::schedule::TemperatureSchedule;
use crate::clustering::{ModeSet, ModeSource};
use crate::diagnostics::expected_swap_rates;
use crate::error::{Error, Result};
use crate::kernels::stream_rng;
use crate::population::{default_scales, run, Algorithm, ModeEstimation, PopulationState, SweepConfig};
use crate::scalar::Real;
use crate::target::TargetDensity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub algorithm: Algorithm,
    pub schemes: usize,
    pub iterations: usize,
    pub adapt_iterations: usize,
    pub within_moves: usize,
    pub target_rate: f64,
    pub tolerance: f64,
    /// Robbins-Monro gain `gain / (round + 1)^0.6`.
    pub gain: f64,
    pub max_rounds: usize,
    pub max_levels: usize,
    pub seed: u64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Pt,
            schemes: 32,
            iterations: 50,
            adapt_iterations: 20,
            within_moves: 3,
            target_rate: 0.234,
            tolerance: 0.02,
            gain: 1.0,
            max_rounds: 60,
            max_levels: 500,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TunedSchedule<T> {
    pub schedule: TemperatureSchedule<T>,
    /// Estimated swap acceptance at each adjacency of the final ladder.
    pub rates: Vec<f64>,
    /// Pilot rounds spent on each adjacency.
    pub rounds: Vec<usize>,
    /// False when some adjacency missed the tolerance within `max_rounds`.
    pub converged: bool,
}

impl<T: Real> TunedSchedule<T> {
    /// Geometric mean of `beta_{l+1} / beta_l`.
    pub fn mean_ratio(&self) -> f64 {
        let b = self.schedule.betas();
        let n = self.schedule.adjacencies();
        (b[n].as_f64().ln() / n as f64).exp()
    }
}

/// Per-mode Laplace approximation: location, per-coordinate standard
/// deviation at `beta = 1`, and log mass at `beta = 1`.
#[derive(Clone, Debug)]
struct LaplaceMode<T> {
    centre: Vec<T>,
    sd: Vec<T>,
    log_peak: T,
}

fn laplace_modes<T: Real, D: TargetDensity<T> + ?Sized>(target: &D) -> Result<Vec<LaplaceMode<T>>> {
    let modes = target
        .known_modes()
        .ok_or_else(|| Error::Config("schedule tuning needs a target with known mode locations".into()))?;
    modes
        .into_iter()
        .map(|centre| {
            let log_peak = target.log_density(&centre);
            let sd = (0..centre.len())
                .map(|j| {
                    let curv = second_derivative(target, &centre, j);
                    if curv < T::zero() {
                        Ok((-curv).sqrt().recip())
                    } else {
                        Err(Error::Numerical(format!(
                            "target is not curved downward at known mode coordinate {j}"
                        )))
                    }
                })
                .collect::<Result<Vec<T>>>()?;
            Ok(LaplaceMode { centre, sd, log_peak })
        })
        .collect()
}

fn second_derivative<T: Real, D: TargetDensity<T> + ?Sized>(target: &D, x: &[T], j: usize) -> T {
    let mut y = x.to_vec();
    let mut at = |v: T| {
        y[j] = v;
        target.log_density(&y)
    };
    let x0 = x[j];
    // step on the scale of the mode, found by growing until the value moves
    let f0 = target.log_density(x);
    let mut h = T::lit(1e-6) * (T::one() + x0.abs());
    for _ in 0..60 {
        if (f0 - at(x0 + h)).abs() > T::lit(1e-6) {
            break;
        }
        h = h * T::lit(2.0);
    }
    (at(x0 + h) - T::lit(2.0) * f0 + at(x0 - h)) / (h * h)
}

/// A draw from the Laplace mixture tempered to `beta`.
fn warm_start<T: Real, R: Rng + ?Sized>(modes: &[LaplaceMode<T>], beta: T, rng: &mut R) -> Vec<T> {
    // mass of mode k under f^beta: exp(beta log_peak) prod (sd / sqrt(beta))
    let logs: Vec<f64> = modes
        .iter()
        .map(|m| (beta * m.log_peak).as_f64() + m.sd.iter().map(|s| s.as_f64().ln()).sum::<f64>())
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut k = modes.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            k = i;
            break;
        }
        u -= w;
    }
    let m = &modes[k];
    let spread = beta.sqrt().recip();
    m.centre
        .iter()
        .zip(&m.sd)
        .map(|(&c, &s)| c + s * spread * T::standard_normal(rng))
        .collect()
}

/// Seed for pilot `round` of adjacency `level`.
fn pilot_seed(seed: u64, level: usize, round: usize) -> u64 {
    stream_rng(seed, ((level as u64) << 32) | round as u64).next_u64()
}

/// Estimated swap acceptance between `beta_hi` and `beta_lo`.
fn pilot_rate<T: Real, D: TargetDensity<T> + ?Sized>(
    target: &D,
    modes: &[LaplaceMode<T>],
    oracle: &ModeSet<T>,
    beta_hi: T,
    beta_lo: T,
    cfg: &PilotConfig,
    seed: u64,
) -> Result<f64> {
    // the pilot ladder is rescaled so that its colder level is 1: tempering
    // pi at (beta_hi, beta_lo) equals tempering pi^beta_hi at (1, beta_lo/beta_hi)
    let mut rng = stream_rng(seed, u64::MAX);
    let betas = [beta_hi, beta_lo];
    let tempered = Tempered { target, beta: beta_hi };
    let relative = TemperatureSchedule::new(vec![T::one(), beta_lo / beta_hi])?;
    let mut state = PopulationState::with_positions(
        &tempered,
        relative.clone(),
        cfg.schemes,
        |_, j| warm_start(modes, betas[j], &mut rng),
        seed,
    )?;
    let mut sweep = SweepConfig::new(cfg.algorithm, &relative, cfg.iterations, &tempered);
    sweep.within_moves = cfg.within_moves;
    sweep.adapt_iterations = cfg.adapt_iterations;
    sweep.modes = ModeEstimation::Fixed(oracle.clone());
    let sd = modes
        .iter()
        .flat_map(|m| m.sd.iter())
        .fold(T::zero(), |a, &b| a.max(b));
    let base = T::lit(2.38) * sd / T::from_usize_lossy(target.dim()).sqrt() / beta_hi.sqrt();
    let mut scales = default_scales(&relative, base);
    let log = run(&mut state, &sweep, &mut scales, &tempered)?;
    expected_swap_rates(&log)[0].ok_or_else(|| Error::Numerical("pilot proposed no swaps".into()))
}

/// `pi^beta` as a target.
struct Tempered<'a, D: ?Sized, T> {
    target: &'a D,
    beta: T,
}

impl<T: Real, D: TargetDensity<T> + ?Sized> TargetDensity<T> for Tempered<'_, D, T> {
    fn dim(&self) -> usize {
        self.target.dim()
    }
    fn log_density(&self, x: &[T]) -> T {
        self.beta * self.target.log_density(x)
    }
    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        self.target.gradient(x).map(|g| g.into_iter().map(|v| self.beta * v).collect())
    }
    fn has_gradient(&self) -> bool {
        self.target.has_gradient()
    }
    fn known_modes(&self) -> Option<Vec<Vec<T>>> {
        self.target.known_modes()
    }
}

/// Tunes a ladder from 1 down to `hottest_beta`.
///
/// When the next tuned level would fall below `hottest_beta` the ladder is
/// closed at `hottest_beta`, provided that adjacency accepts at least the
/// target rate minus the tolerance. Failure to meet the tolerance within
/// `max_rounds` keeps the best spacing seen and logs a warning.
pub fn tune_schedule<T: Real, D: TargetDensity<T> + ?Sized>(
    target: &D,
    hottest_beta: T,
    cfg: &PilotConfig,
) -> Result<TunedSchedule<T>> {
    if !(hottest_beta > T::zero() && hottest_beta < T::one()) {
        return Err(Error::Config(format!("hottest beta must lie in (0, 1), got {hottest_beta}")));
    }
    if !(cfg.target_rate > 0.0 && cfg.target_rate < 1.0) || !(cfg.tolerance > 0.0) {
        return Err(Error::Config("pilot target rate must lie in (0, 1) with a positive tolerance".into()));
    }
    if cfg.schemes < 1 || cfg.iterations < 1 || cfg.max_rounds < 1 || cfg.max_levels < 2 {
        return Err(Error::Config("pilot schemes, iterations, rounds and levels must be positive".into()));
    }
    if cfg.algorithm == Algorithm::Quanta && cfg.schemes < 2 {
        return Err(Error::Config("rescaled-swap pilots need at least two schemes".into()));
    }
    let modes = laplace_modes(target)?;
    let oracle = ModeSet::merged(
        modes.iter().map(|m| m.centre.clone()).collect(),
        ModeSource::Oracle,
        T::zero(),
    )?;

    let mut betas = vec![T::one()];
    let mut rates = Vec::new();
    let mut rounds = Vec::new();
    let mut converged = true;
    let mut theta = 0.0_f64;
    let lo_target = cfg.target_rate - cfg.tolerance;

    while *betas.last().unwrap() > hottest_beta {
        if betas.len() >= cfg.max_levels {
            return Err(Error::Numerical(format!(
                "schedule tuning reached {} levels before beta = {hottest_beta}",
                cfg.max_levels
            )));
        }
        let level = betas.len() - 1;
        let beta = *betas.last().unwrap();

        // can the ladder be closed right away?
        let seed = pilot_seed(cfg.seed, level, 0);
        let closing = pilot_rate(target, &modes, &oracle, beta, hottest_beta, cfg, seed)?;
        if closing >= lo_target {
            betas.push(hottest_beta);
            rates.push(closing);
            rounds.push(1);
            break;
        }

        let mut best: Option<(f64, f64, f64)> = None; // (|error|, theta, rate)
        let mut chosen = None;
        for round in 0..cfg.max_rounds {
            let next = (beta * T::lit((-theta.exp()).exp())).max(hottest_beta);
            let seed = pilot_seed(cfg.seed, level, round + 1);
            let rate = pilot_rate(target, &modes, &oracle, beta, next, cfg, seed)?;
            let err = rate - cfg.target_rate;
            if best.is_none_or(|b| err.abs() < b.0) {
                best = Some((err.abs(), theta, rate));
            }
            if err.abs() <= cfg.tolerance {
                chosen = Some((theta, rate));
                rounds.push(round + 1);
                break;
            }
            theta += cfg.gain / ((round + 1) as f64).powf(0.6) * err;
        }
        let (chosen_theta, rate) = chosen.unwrap_or_else(|| {
            let (_, t, r) = best.expect("at least one round");
            log::warn!(
                "adjacency {level}: acceptance {r:.3} after {} rounds, outside {} +/- {}",
                cfg.max_rounds,
                cfg.target_rate,
                cfg.tolerance
            );
            converged = false;
            rounds.push(cfg.max_rounds);
            (t, r)
        });
        theta = chosen_theta;
        let next = beta * T::lit((-theta.exp()).exp());
        if next <= hottest_beta {
            betas.push(hottest_beta);
            rates.push(closing);
            break;
        }
        betas.push(next);
        rates.push(rate);
    }

    Ok(TunedSchedule {
        schedule: TemperatureSchedule::new(betas)?,
        rates,
        rounds,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::GaussianMixtureTarget;

    fn quick() -> PilotConfig {
        PilotConfig {
            schemes: 16,
            iterations: 40,
            ..PilotConfig::default()
        }
    }

    #[test]
    fn quanta_on_a_single_gaussian_needs_no_intermediate_levels() {
        let g = GaussianMixtureTarget::new(vec![1.0], vec![0.0], vec![1.0], 5).unwrap();
        let cfg = PilotConfig {
            algorithm: Algorithm::Quanta,
            ..quick()
        };
        let r = tune_schedule(&g, 1e-6, &cfg).unwrap();
        assert_eq!(r.schedule.betas(), &[1.0, 1e-6]);
        assert!(r.rates[0] > 0.99, "{:?}", r.rates);
        assert!(r.converged);
    }

    #[test]
    fn pt_ladder_accepts_near_the_target_rate() {
        let g = GaussianMixtureTarget::new(vec![1.0], vec![0.0], vec![1.0], 3).unwrap();
        let r = tune_schedule(&g, 1e-3, &quick()).unwrap();
        let b = r.schedule.betas();
        assert_eq!(b[0], 1.0);
        assert_eq!(*b.last().unwrap(), 1e-3);
        assert!(b.len() > 3, "{b:?}");
        // every tuned (non-closing) adjacency hit the tolerance band
        for &rate in &r.rates[..r.rates.len() - 1] {
            assert!((rate - 0.234).abs() <= 0.02 + 1e-12, "{:?}", r.rates);
        }
        // Gaussian spacing is scale free, so the ratios are roughly constant
        let ratios: Vec<f64> = b.windows(2).take(b.len() - 2).map(|w| w[1] / w[0]).collect();
        let (lo, hi) = ratios.iter().fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo < 2.0, "{ratios:?}");
    }

    #[test]
    fn tuning_is_deterministic_in_the_seed() {
        let g = GaussianMixtureTarget::new(vec![1.0, 1.0], vec![-3.0, 3.0], vec![0.5, 0.5], 2).unwrap();
        let a = tune_schedule(&g, 1e-2, &quick()).unwrap();
        let b = tune_schedule(&g, 1e-2, &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let g = GaussianMixtureTarget::new(vec![1.0], vec![0.0], vec![1.0], 1).unwrap();
        assert!(tune_schedule(&g, 1.0, &quick()).is_err());
        assert!(tune_schedule(&g, 0.0, &quick()).is_err());
        let bad = PilotConfig { target_rate: 1.5, ..quick() };
        assert!(tune_schedule(&g, 0.1, &bad).is_err());
        let bad = PilotConfig {
            algorithm: Algorithm::Quanta,
            schemes: 1,
            ..quick()
        };
        assert!(tune_schedule(&g, 0.1, &bad).is_err());
        assert!(matches!(tune_schedule(&NoModes, 0.1, &quick()), Err(Error::Config(_))));
    }

    struct NoModes;

    impl TargetDensity<f64> for NoModes {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x[0] * x[0]
        }
    }
}
