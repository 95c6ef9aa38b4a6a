//! A population of `N` tempering schemes over a shared ladder, with the
//! two-phase clustered swap update.
//!
//! Chains are stored scheme-major: chain `(i, j)` (scheme `i`, level `j`) sits
//! at index `i * levels + j`. Every chain owns its random stream; stream 0 is
//! reserved for orchestration (clustering initialisation, swap pair choice and
//! swap decisions), which is only touched between parallel sections. Results
//! are therefore independent of the thread count.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{initial_centres, refine_modes, weighted_kmeans, KMeansInit, ModeSet, RefineSettings, WeightedPointSet};
use crate::diagnostics::{AdjacencyCounts, LevelCounts, Timing, TraceLog};
use crate::error::{Error, Result};
use crate::kernels::{pt_log_ratio_from_densities, propose_quanta_swap, rwm_step, stream_rng, ChainRng, ChainState};
use crate::scalar::Real;
use crate::schedule_theory::TemperatureSchedule;
use crate::target::TargetDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Plain replica exchange at every adjacency.
    Pt,
    /// Mode-rescaling swaps at the configured adjacencies.
    Quanta,
}

/// Where the centring points for rescaled swaps come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ModeEstimation<T> {
    /// Weighted K-means on the other half of the population, every phase.
    Cluster {
        clusters: usize,
        max_iter: usize,
        init: KMeansInit,
    },
    /// A fixed, externally supplied set.
    Fixed(ModeSet<T>),
}

/// What is stored for each cold chain at a recorded iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    FirstCoordinate,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig<T> {
    pub algorithm: Algorithm,
    /// Within-level sweeps per swap phase.
    pub within_moves: usize,
    /// Composite iterations in the measured run.
    pub iterations: usize,
    /// Adjacencies `l` (pair `(l, l+1)`) that use the rescaled swap.
    pub quanta_levels: BTreeSet<usize>,
    pub modes: ModeEstimation<T>,
    pub refine: bool,
    pub refine_settings: RefineSettings<T>,
    /// Composite iterations of scale adaptation before measurement.
    pub adapt_iterations: usize,
    pub target_within_acceptance: T,
    pub thin: usize,
    pub record: RecordMode,
}

impl<T: Real> SweepConfig<T> {
    /// Defaults: `k = 3`, rescaled swaps at every adjacency for QuanTA,
    /// `K` = number of known modes (else 1), refinement when the target has
    /// a gradient, `T / 10` adaptation iterations, every iteration recorded.
    pub fn new<D: TargetDensity<T> + ?Sized>(
        algorithm: Algorithm,
        schedule: &TemperatureSchedule<T>,
        iterations: usize,
        target: &D,
    ) -> Self {
        let quanta_levels = match algorithm {
            Algorithm::Pt => BTreeSet::new(),
            Algorithm::Quanta => (0..schedule.adjacencies()).collect(),
        };
        let clusters = target.known_modes().map_or(1, |m| m.len());
        Self {
            algorithm,
            within_moves: 3,
            iterations,
            quanta_levels,
            modes: ModeEstimation::Cluster {
                clusters,
                max_iter: 50,
                init: KMeansInit::default(),
            },
            refine: target.has_gradient(),
            refine_settings: RefineSettings::default(),
            adapt_iterations: iterations / 10,
            target_within_acceptance: T::lit(0.234),
            thin: 1,
            record: RecordMode::FirstCoordinate,
        }
    }

    /// Adjacencies that actually use the rescaled swap.
    pub fn rescaled_levels(&self) -> &BTreeSet<usize> {
        static EMPTY: BTreeSet<usize> = BTreeSet::new();
        match self.algorithm {
            Algorithm::Pt => &EMPTY,
            Algorithm::Quanta => &self.quanta_levels,
        }
    }

    pub fn validate(&self, state: &PopulationState<T>) -> Result<()> {
        if self.within_moves == 0 {
            return Err(Error::Config("within_moves (k) must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations (T) must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        let n = state.schedule.adjacencies();
        if let Some(&l) = self.quanta_levels.iter().find(|&&l| l >= n) {
            return Err(Error::Config(format!(
                "quanta level {l} out of range: the ladder has {n} adjacencies"
            )));
        }
        if !(self.target_within_acceptance > T::zero() && self.target_within_acceptance < T::one()) {
            return Err(Error::Config("target within-level acceptance must lie in (0, 1)".into()));
        }
        if self.rescaled_levels().is_empty() || state.schemes < 2 {
            return Ok(());
        }
        match &self.modes {
            ModeEstimation::Cluster { clusters, max_iter, .. } => {
                let smallest_half = (state.schemes / 2) * state.levels();
                if *clusters == 0 || *clusters > smallest_half {
                    return Err(Error::Config(format!(
                        "cannot fit {clusters} clusters to {smallest_half} chain positions per half-population"
                    )));
                }
                if *max_iter == 0 {
                    return Err(Error::Config("K-means max_iter must be at least 1".into()));
                }
            }
            ModeEstimation::Fixed(m) if m.dim() != state.dim() => {
                return Err(Error::Config(format!(
                    "fixed modes have dimension {} but target has dimension {}",
                    m.dim(),
                    state.dim()
                )));
            }
            ModeEstimation::Fixed(_) => {}
        }
        Ok(())
    }
}

/// Positions of all `N x (n+1)` chains plus the orchestration stream.
#[derive(Clone, Debug)]
pub struct PopulationState<T> {
    schedule: TemperatureSchedule<T>,
    schemes: usize,
    chains: Vec<ChainState<T>>,
    orchestration: ChainRng,
    seed: u64,
}

impl<T: Real> PopulationState<T> {
    /// Every chain starts at `start`.
    pub fn new<D: TargetDensity<T> + ?Sized>(
        target: &D,
        schedule: TemperatureSchedule<T>,
        schemes: usize,
        start: &[T],
        seed: u64,
    ) -> Result<Self> {
        Self::with_positions(target, schedule, schemes, |_, _| start.to_vec(), seed)
    }

    /// Chain `(i, j)` starts at `start(i, j)`.
    pub fn with_positions<D: TargetDensity<T> + ?Sized>(
        target: &D,
        schedule: TemperatureSchedule<T>,
        schemes: usize,
        mut start: impl FnMut(usize, usize) -> Vec<T>,
        seed: u64,
    ) -> Result<Self> {
        if schemes == 0 {
            return Err(Error::Config("population needs at least one scheme".into()));
        }
        let levels = schedule.levels();
        let mut chains = Vec::with_capacity(schemes * levels);
        for i in 0..schemes {
            for j in 0..levels {
                let x = start(i, j);
                if x.len() != target.dim() {
                    return Err(Error::Domain(format!(
                        "chain ({i}, {j}) has dimension {} but target has dimension {}",
                        x.len(),
                        target.dim()
                    )));
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain(format!("chain ({i}, {j}) starts at a non-finite point")));
                }
                let stream = 1 + (i * levels + j) as u64;
                chains.push(ChainState::new(x, j, target, stream_rng(seed, stream)));
            }
        }
        Ok(Self {
            schedule,
            schemes,
            chains,
            orchestration: stream_rng(seed, 0),
            seed,
        })
    }

    pub fn schedule(&self) -> &TemperatureSchedule<T> {
        &self.schedule
    }

    pub fn schemes(&self) -> usize {
        self.schemes
    }

    pub fn levels(&self) -> usize {
        self.schedule.levels()
    }

    pub fn dim(&self) -> usize {
        self.chains[0].position.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain(&self, scheme: usize, level: usize) -> &ChainState<T> {
        &self.chains[scheme * self.levels() + level]
    }

    pub fn position(&self, scheme: usize, level: usize) -> &[T] {
        &self.chain(scheme, level).position
    }

    /// Positions and weights (`beta` of the level) of every chain in `schemes`.
    pub fn weighted_points(&self, schemes: std::ops::Range<usize>) -> Result<WeightedPointSet<T>> {
        let betas = self.schedule.betas();
        let mut points = Vec::with_capacity(schemes.len() * betas.len());
        let mut weights = Vec::with_capacity(points.capacity());
        for i in schemes {
            for (j, &b) in betas.iter().enumerate() {
                points.push(self.position(i, j).to_vec());
                weights.push(b);
            }
        }
        WeightedPointSet::new(points, weights)
    }
}

/// Initial within-level scales `base / sqrt(beta_j)`.
pub fn default_scales<T: Real>(schedule: &TemperatureSchedule<T>, base: T) -> Vec<T> {
    schedule.betas().iter().map(|&b| base / b.sqrt()).collect()
}

fn check_scales<T: Real>(scales: &[T], levels: usize) -> Result<()> {
    if scales.len() != levels {
        return Err(Error::Config(format!("expected {levels} proposal scales, got {}", scales.len())));
    }
    if scales.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
        return Err(Error::Config("proposal scales must be positive and finite".into()));
    }
    Ok(())
}

/// One random-walk step for every chain. Returns accepted moves per level.
pub fn within_sweep<T: Real, D: TargetDensity<T> + ?Sized>(
    state: &mut PopulationState<T>,
    scales: &[T],
    target: &D,
) -> Result<Vec<u64>> {
    let levels = state.levels();
    check_scales(scales, levels)?;
    let betas = state.schedule.betas();
    let per_scheme: Vec<Vec<u64>> = state
        .chains
        .par_chunks_mut(levels)
        .map(|scheme| {
            scheme
                .iter_mut()
                .enumerate()
                .map(|(j, c)| u64::from(rwm_step(c, betas[j], scales[j], target)))
                .collect()
        })
        .collect();
    let mut accepted = vec![0u64; levels];
    for row in per_scheme {
        for (a, r) in accepted.iter_mut().zip(row) {
            *a += r;
        }
    }
    Ok(accepted)
}

/// Swap statistics accumulated over phases.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SwapTally {
    pub proposals: Vec<u64>,
    pub acceptances: Vec<u64>,
    /// Sum of `min(1, exp(log ratio))` over proposals.
    pub expected_acceptances: Vec<f64>,
    pub skipped_phases: usize,
}

impl SwapTally {
    pub fn new(adjacencies: usize) -> Self {
        Self {
            proposals: vec![0; adjacencies],
            acceptances: vec![0; adjacencies],
            expected_acceptances: vec![0.0; adjacencies],
            skipped_phases: 0,
        }
    }

    fn record<T: Real>(&mut self, l: usize, accepted: bool, log_ratio: T) {
        self.proposals[l] += 1;
        self.acceptances[l] += u64::from(accepted);
        let p = log_ratio.as_f64().min(0.0).exp();
        self.expected_acceptances[l] += if p.is_nan() { 0.0 } else { p };
    }
}

/// Both halves of the two-phase swap update.
///
/// Phase 1 estimates centres from schemes `0..N/2` and proposes one swap in
/// each scheme of `N/2..N`; phase 2 reverses the roles. With a single scheme
/// and plain swaps only, that scheme is updated in phase 1. A population of
/// one scheme cannot estimate centres for rescaled swaps, so the update is
/// skipped with a warning.
pub fn swap_phase<T: Real, D: TargetDensity<T> + ?Sized>(
    state: &mut PopulationState<T>,
    cfg: &SweepConfig<T>,
    target: &D,
    tally: &mut SwapTally,
) -> Result<()> {
    if state.levels() < 2 {
        return Ok(());
    }
    let rescaled = cfg.rescaled_levels();
    if !rescaled.is_empty() && state.schemes < 2 {
        if tally.skipped_phases == 0 {
            log::warn!("a single scheme cannot estimate mode centres; swap updates are skipped");
        }
        tally.skipped_phases += 1;
        return Ok(());
    }
    let half = state.schemes / 2;
    let n = state.schemes;
    for (source, movers) in [(0..half, half..n), (half..n, 0..half)] {
        if movers.is_empty() {
            continue;
        }
        let modes = if rescaled.is_empty() {
            None
        } else {
            Some(estimate_modes(state, source, cfg, target)?)
        };
        swap_half(state, movers, rescaled, modes.as_ref(), target, tally)?;
    }
    Ok(())
}

fn estimate_modes<T: Real, D: TargetDensity<T> + ?Sized>(
    state: &mut PopulationState<T>,
    source: std::ops::Range<usize>,
    cfg: &SweepConfig<T>,
    target: &D,
) -> Result<ModeSet<T>> {
    let (clusters, max_iter, init) = match &cfg.modes {
        ModeEstimation::Fixed(m) => return Ok(m.clone()),
        ModeEstimation::Cluster { clusters, max_iter, init } => (*clusters, *max_iter, *init),
    };
    let data = state.weighted_points(source)?;
    let init = initial_centres(&data, clusters, init, &mut state.orchestration)?;
    let modes = weighted_kmeans(&data, clusters, init, max_iter)?.mode_set()?;
    if cfg.refine {
        refine_modes(&modes, target, cfg.refine_settings)
    } else {
        Ok(modes)
    }
}

fn swap_half<T: Real, D: TargetDensity<T> + ?Sized>(
    state: &mut PopulationState<T>,
    movers: std::ops::Range<usize>,
    rescaled: &BTreeSet<usize>,
    modes: Option<&ModeSet<T>>,
    target: &D,
    tally: &mut SwapTally,
) -> Result<()> {
    let levels = state.levels();
    let adjacencies = levels - 1;
    let draws: Vec<(usize, T)> = movers
        .clone()
        .map(|_| {
            let l = state.orchestration.random_range(0..adjacencies);
            (l, T::open_unit(&mut state.orchestration).ln())
        })
        .collect();
    let betas = state.schedule.betas();
    let chains = &mut state.chains[movers.start * levels..movers.end * levels];
    let outcomes: Vec<Result<(usize, bool, T)>> = chains
        .par_chunks_mut(levels)
        .zip(draws.par_iter())
        .map(|(scheme, &(l, log_u))| {
            let (cold, hot) = scheme.split_at_mut(l + 1);
            let (ci, cj) = (&mut cold[l], &mut hot[0]);
            let (bi, bj) = (betas[l], betas[l + 1]);
            match modes.filter(|_| rescaled.contains(&l)) {
                Some(modes) => {
                    let p = propose_quanta_swap(
                        &ci.position,
                        ci.log_density,
                        &cj.position,
                        cj.log_density,
                        bi,
                        bj,
                        modes,
                        target,
                    )?;
                    let accepted = log_u < p.log_acceptance_ratio;
                    if accepted {
                        let (g_i, g_j) = p.proposed;
                        let (lg_i, lg_j) = p.proposed_log_densities;
                        ci.set_position(g_j, lg_j);
                        cj.set_position(g_i, lg_i);
                    }
                    Ok((l, accepted, p.log_acceptance_ratio))
                }
                None => {
                    let r = pt_log_ratio_from_densities(ci.log_density, cj.log_density, bi, bj);
                    let accepted = log_u < r;
                    if accepted {
                        std::mem::swap(&mut ci.position, &mut cj.position);
                        std::mem::swap(&mut ci.log_density, &mut cj.log_density);
                    }
                    Ok((l, accepted, r))
                }
            }
        })
        .collect();
    for o in outcomes {
        let (l, accepted, r) = o?;
        tally.record(l, accepted, r);
    }
    Ok(())
}

/// Runs `(P2 o P1^k)^T`, preceded by `adapt_iterations` composite iterations
/// during which the per-level scales follow a Robbins-Monro recursion on
/// `log scale` towards the target within-level acceptance. Scales are frozen
/// for the measured iterations; `scales` holds the adapted values on return.
pub fn run<T: Real, D: TargetDensity<T> + ?Sized>(
    state: &mut PopulationState<T>,
    cfg: &SweepConfig<T>,
    scales: &mut [T],
    target: &D,
) -> Result<TraceLog<T>> {
    cfg.validate(state)?;
    check_scales(scales, state.levels())?;
    let levels = state.levels();
    let schemes = state.schemes;

    let adapt_start = Instant::now();
    let mut scratch = SwapTally::new(levels - 1);
    let mut sweep = 0usize;
    for _ in 0..cfg.adapt_iterations {
        for _ in 0..cfg.within_moves {
            let accepted = within_sweep(state, scales, target)?;
            sweep += 1;
            let gain = T::from_usize_lossy(sweep).powf(T::lit(-0.6));
            for (s, &a) in scales.iter_mut().zip(&accepted) {
                let rate = T::from_usize_lossy(a as usize) / T::from_usize_lossy(schemes);
                *s = (s.ln() + gain * (rate - cfg.target_within_acceptance)).exp();
            }
        }
        swap_phase(state, cfg, target, &mut scratch)?;
    }
    let adapt_seconds = adapt_start.elapsed().as_secs_f64();

    let width = match cfg.record {
        RecordMode::FirstCoordinate => 1,
        RecordMode::Full => state.dim(),
    };
    let recorded = cfg.iterations.div_ceil(cfg.thin);
    let mut cold_samples = Vec::with_capacity(recorded * schemes * width);
    let mut recorded_iterations = Vec::with_capacity(recorded);
    let mut tally = SwapTally::new(levels - 1);
    let mut within_accepted = vec![0u64; levels];

    let start = Instant::now();
    for t in 0..cfg.iterations {
        for _ in 0..cfg.within_moves {
            let accepted = within_sweep(state, scales, target)?;
            for (w, a) in within_accepted.iter_mut().zip(accepted) {
                *w += a;
            }
        }
        swap_phase(state, cfg, target, &mut tally)?;
        if t % cfg.thin == 0 {
            recorded_iterations.push(t);
            for i in 0..schemes {
                cold_samples.extend_from_slice(&state.position(i, 0)[..width]);
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);

    let within_proposals = (cfg.iterations * cfg.within_moves * schemes) as u64;
    Ok(TraceLog {
        algorithm: cfg.algorithm,
        seed: state.seed,
        schemes,
        betas: state.schedule.betas().to_vec(),
        quanta_levels: cfg.rescaled_levels().iter().copied().collect(),
        thin: cfg.thin,
        record_width: width,
        recorded_iterations,
        cold_samples,
        swaps: (0..levels - 1)
            .map(|l| AdjacencyCounts {
                proposals: tally.proposals[l],
                acceptances: tally.acceptances[l],
                expected_acceptances: tally.expected_acceptances[l],
            })
            .collect(),
        within: within_accepted
            .into_iter()
            .map(|acceptances| LevelCounts {
                proposals: within_proposals,
                acceptances,
            })
            .collect(),
        scales: scales.to_vec(),
        skipped_swap_phases: tally.skipped_phases,
        timing: Timing { adapt_seconds, seconds },
        config_echo: serde_json::Value::Null,
    })
}
