//! The `run`, `verify-theory` and `tune-schedule` commands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::Serialize;

use super::config::{load, AnyTarget, ArmConfig, ExperimentConfig, ScheduleConfig, TheoryConfig, TuneConfig};
use crate::diagnostics::{
    default_bands, empirical_esjd, expected_swap_rates, mode_weight_series, swap_rates, write_json, CostEntry,
    TraceLog,
};
use crate::clustering::{ModeSet, ModeSource};
use crate::error::{Error, Result};
use crate::kernels::stream_rng;
use crate::marginal::{CatalogueMarginal, Marginal};
use crate::population::{default_scales, run, Algorithm, ModeEstimation, PopulationState, SweepConfig};
use crate::schedule_theory::{
    cold_order_scan, log_grid, marginal_functionals, optimal_ell, tune_schedule, ColdOrderReport,
    MarginalFunctionals, QuadSettings, TemperatureSchedule, TunedSchedule,
};
use crate::target::TargetDensity;

/// Command-line overrides shared by the subcommands.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub repeats: Option<usize>,
}

/// Seed of repeat `r`, derived from the experiment seed.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    stream_rng(seed, repeat as u64).next_u64()
}

fn output_dir(config: &Path, configured: Option<&Path>, overrides: &Overrides) -> PathBuf {
    if let Some(out) = &overrides.out {
        return out.clone();
    }
    if let Some(out) = configured {
        return out.to_path_buf();
    }
    let stem = config.file_stem().map_or_else(|| "experiment".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("quanta_out").join(stem)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-run results that do not depend on wall-clock time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub arm: String,
    pub repeat: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub schemes: usize,
    pub betas: Vec<f64>,
    pub quanta_levels: Vec<usize>,
    pub swap_proposals: Vec<u64>,
    pub swap_rates: Vec<Option<f64>>,
    pub expected_swap_rates: Vec<Option<f64>>,
    pub esjd: Vec<Option<f64>>,
    pub within_rates: Vec<f64>,
    pub scales: Vec<f64>,
    pub skipped_swap_phases: usize,
    pub weight_bands: Vec<(f64, f64)>,
    pub final_weights: Vec<f64>,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunTiming {
    pub arm: String,
    pub repeat: usize,
    pub adapt_seconds: f64,
    pub seconds: f64,
    pub cost: Option<CostEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub count: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self::default();
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { mean: Some(mean), sd, count: n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub schemes: usize,
    pub completed: usize,
    pub failed: Vec<RunFailure>,
    pub swap_rates: Vec<MeanSd>,
    pub expected_swap_rates: Vec<MeanSd>,
    pub esjd: Vec<MeanSd>,
    pub final_weights: Vec<MeanSd>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunFailure {
    pub repeat: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub seed: u64,
    pub repeats: usize,
    pub betas: Vec<f64>,
    pub arms: Vec<ArmSummary>,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmTiming {
    pub name: String,
    pub algorithm: Algorithm,
    /// Mean run time `R` (divided by `N` for QuanTA).
    pub run_time: MeanSd,
    /// Mean first-adjacency acceptance `A`.
    pub acceptance: MeanSd,
    pub acceptance_per_second: MeanSd,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentTiming {
    pub arms: Vec<ArmTiming>,
    /// Ratio of mean `A/R` for each arm relative to the first arm.
    pub ratio_to_first: Vec<Option<f64>>,
    pub runs: Vec<RunTiming>,
}

/// Everything produced by [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub out: PathBuf,
    pub summary: ExperimentSummary,
    pub timing: ExperimentTiming,
    pub runs: Vec<RunSummary>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.summary.arms.iter().map(|a| a.failed.len()).sum()
    }
}

/// Loads, overrides and validates an experiment configuration.
pub fn load_experiment(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let (mut cfg, text): (ExperimentConfig, String) = load(path)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(r) = overrides.repeats {
        cfg.repeats = r;
    }
    cfg.validate(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_kind(&e))))?;
    Ok(cfg)
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        e => e.to_string(),
    }
}

/// Runs every arm `repeats` times and writes
/// `<out>/summary.json`, `<out>/timing.json` and
/// `<out>/runs/<arm>_r<repeat>/{trace.csv, summary.json, weights.csv, timing.json}`.
///
/// A run that fails part way leaves `error.txt` in its directory and is
/// listed under `failed` in the summary; the other runs still execute.
pub fn run_experiment(path: &Path, overrides: &Overrides) -> Result<ExperimentOutcome> {
    let cfg = load_experiment(path, overrides)?;
    let out = output_dir(path, cfg.output.as_deref(), overrides);
    run_config(&cfg, &out)
}

/// [`run_experiment`] for an already validated configuration.
pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    let target = cfg.target.build()?;
    let schedule = cfg.schedule.build(&target)?;
    if let ScheduleConfig::Tuned { .. } = cfg.schedule {
        log::info!("tuned ladder: {:?}", schedule.betas());
    }
    let echo = serde_json::json!({
        "experiment": cfg,
        "resolved_betas": schedule.betas(),
    });
    let bands = weight_bands(cfg, &target)?;
    create_dir(&out.join("runs"))?;

    let mut runs = Vec::new();
    let mut timings = Vec::new();
    let mut arms = Vec::new();
    let mut arm_timings = Vec::new();
    for arm in &cfg.arms {
        let mut arm_runs = Vec::new();
        let mut arm_costs = Vec::new();
        let mut failed = Vec::new();
        for r in 0..cfg.repeats {
            let seed = repeat_seed(cfg.seed, r);
            let dir = out.join("runs").join(format!("{}_r{r}", arm.name));
            create_dir(&dir)?;
            let _ = std::fs::remove_file(dir.join("error.txt"));
            log::info!("arm {} repeat {r} (seed {seed})", arm.name);
            match run_one(cfg, arm, &target, &schedule, seed, &echo) {
                Ok(log) => {
                    let summary = summarise(&log, arm, r, &schedule, &bands, cfg, &echo)?;
                    log.write_trace_csv(&dir.join("trace.csv"))?;
                    write_weights(&log, &bands, cfg, &dir.join("weights.csv"))?;
                    write_json(&dir.join("summary.json"), &summary)?;
                    let cost = CostEntry::from_log(&log).ok();
                    let timing = RunTiming {
                        arm: arm.name.clone(),
                        repeat: r,
                        adapt_seconds: log.timing.adapt_seconds,
                        seconds: log.timing.seconds,
                        cost,
                    };
                    write_json(&dir.join("timing.json"), &timing)?;
                    arm_costs.extend(cost);
                    timings.push(timing);
                    arm_runs.push(summary);
                }
                Err(e) => {
                    log::error!("arm {} repeat {r} failed: {e}", arm.name);
                    write_text(&dir.join("error.txt"), &format!("{e}\n"))?;
                    failed.push(RunFailure {
                        repeat: r,
                        seed,
                        error: e.to_string(),
                    });
                }
            }
        }
        arms.push(aggregate(arm, &arm_runs, failed, schedule.adjacencies(), bands.len()));
        arm_timings.push(ArmTiming {
            name: arm.name.clone(),
            algorithm: arm.algorithm,
            run_time: MeanSd::of(arm_costs.iter().map(|c| c.run_time)),
            acceptance: MeanSd::of(arm_costs.iter().map(|c| c.acceptance)),
            acceptance_per_second: MeanSd::of(arm_costs.iter().map(|c| c.acceptance_per_second)),
        });
        runs.extend(arm_runs);
    }

    let first = arm_timings.first().and_then(|a| a.acceptance_per_second.mean);
    let ratio_to_first = arm_timings
        .iter()
        .map(|a| match (a.acceptance_per_second.mean, first) {
            (Some(x), Some(f)) if f > 0.0 => Some(x / f),
            _ => None,
        })
        .collect();
    let summary = ExperimentSummary {
        seed: cfg.seed,
        repeats: cfg.repeats,
        betas: schedule.betas().to_vec(),
        arms,
        config: echo,
    };
    let timing = ExperimentTiming {
        arms: arm_timings,
        ratio_to_first,
        runs: timings,
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_json(&out.join("timing.json"), &timing)?;
    Ok(ExperimentOutcome {
        out: out.to_path_buf(),
        summary,
        timing,
        runs,
    })
}

/// Builds the population for one arm and runs it.
pub fn run_one(
    cfg: &ExperimentConfig,
    arm: &ArmConfig,
    target: &AnyTarget,
    schedule: &TemperatureSchedule<f64>,
    seed: u64,
    echo: &serde_json::Value,
) -> Result<TraceLog<f64>> {
    let mut sweep = SweepConfig::new(arm.algorithm, schedule, cfg.run.iterations, target);
    sweep.within_moves = cfg.run.within_moves;
    sweep.thin = cfg.run.thin;
    sweep.record = cfg.run.record;
    if let Some(a) = cfg.run.adapt_iterations {
        sweep.adapt_iterations = a;
    }
    if let Some(q) = &arm.quanta_levels {
        sweep.quanta_levels = q.clone();
    }
    if let Some(refine) = arm.refine {
        sweep.refine = refine;
    }
    if arm.oracle_modes {
        let modes = target
            .known_modes()
            .ok_or_else(|| Error::Config("oracle_modes needs a target with known modes".into()))?;
        sweep.modes = ModeEstimation::Fixed(ModeSet::new(modes, ModeSource::Oracle)?);
    } else if let ModeEstimation::Cluster { clusters, .. } = sweep.modes {
        sweep.modes = ModeEstimation::Cluster {
            clusters: arm.clusters.unwrap_or(clusters),
            max_iter: arm.kmeans_max_iter,
            init: arm.kmeans_init,
        };
    }
    let mut state = PopulationState::new(target, schedule.clone(), arm.schemes, &cfg.run.start, seed)?;
    let mut scales = default_scales(schedule, cfg.run.initial_scale);
    let mut log = run(&mut state, &sweep, &mut scales, target)?;
    log.config_echo = serde_json::json!({ "arm": arm, "experiment": echo });
    Ok(log)
}

fn weight_bands(cfg: &ExperimentConfig, target: &AnyTarget) -> Result<Vec<(f64, f64)>> {
    if let Some(b) = &cfg.weights.bands {
        return Ok(b.clone());
    }
    let modes = match &cfg.weights.modes {
        Some(m) => m.clone(),
        None => match target.known_modes() {
            Some(m) => {
                let mut firsts: Vec<f64> = m.iter().map(|v| v[0]).collect();
                firsts.sort_by(f64::total_cmp);
                firsts.dedup();
                firsts
            }
            None => return Ok(Vec::new()),
        },
    };
    default_bands(&modes)
}

/// Pooled first coordinates of every cold chain, iteration-major.
fn pooled_first_coordinates(log: &TraceLog<f64>) -> Vec<f64> {
    log.cold_first_coordinates()
}

fn burn_in(len: usize, fraction: f64) -> usize {
    ((len as f64 * fraction).floor() as usize).min(len.saturating_sub(1))
}

fn summarise(
    log: &TraceLog<f64>,
    arm: &ArmConfig,
    repeat: usize,
    schedule: &TemperatureSchedule<f64>,
    bands: &[(f64, f64)],
    cfg: &ExperimentConfig,
    echo: &serde_json::Value,
) -> Result<RunSummary> {
    let samples = pooled_first_coordinates(log);
    let b = burn_in(samples.len(), cfg.run.burn_in_fraction);
    let final_weights = bands
        .iter()
        .enumerate()
        .map(|(k, &(lo, hi))| mode_weight_series(&samples, k, lo, hi, b).map(|w| w.last()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary {
        arm: arm.name.clone(),
        repeat,
        seed: log.seed,
        algorithm: log.algorithm,
        schemes: log.schemes,
        betas: log.betas.clone(),
        quanta_levels: log.quanta_levels.clone(),
        swap_proposals: log.swaps.iter().map(|s| s.proposals).collect(),
        swap_rates: swap_rates(log),
        expected_swap_rates: expected_swap_rates(log),
        esjd: empirical_esjd(log, schedule)?,
        within_rates: log
            .within
            .iter()
            .map(|w| if w.proposals == 0 { 0.0 } else { w.acceptances as f64 / w.proposals as f64 })
            .collect(),
        scales: log.scales.clone(),
        skipped_swap_phases: log.skipped_swap_phases,
        weight_bands: bands.to_vec(),
        final_weights,
        config: serde_json::json!({ "arm": arm, "experiment": echo }),
    })
}

/// `index,w_0,..,w_{K-1}`: running weight estimates on the pooled cold
/// samples after burn-in.
fn write_weights(log: &TraceLog<f64>, bands: &[(f64, f64)], cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let samples = pooled_first_coordinates(log);
    let b = burn_in(samples.len(), cfg.run.burn_in_fraction);
    let series = bands
        .iter()
        .enumerate()
        .map(|(k, &(lo, hi))| mode_weight_series(&samples, k, lo, hi, b))
        .collect::<Result<Vec<_>>>()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["index".to_string()];
    header.extend((0..bands.len()).map(|k| format!("w_{k}")));
    w.write_record(&header)?;
    for m in 0..samples.len() - b {
        let mut row = vec![(b + m).to_string()];
        row.extend(series.iter().map(|s| s.series[m].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn aggregate(arm: &ArmConfig, runs: &[RunSummary], failed: Vec<RunFailure>, adjacencies: usize, modes: usize) -> ArmSummary {
    let per = |f: &dyn Fn(&RunSummary, usize) -> Option<f64>, n: usize| -> Vec<MeanSd> {
        (0..n).map(|i| MeanSd::of(runs.iter().filter_map(|r| f(r, i)))).collect()
    };
    ArmSummary {
        name: arm.name.clone(),
        algorithm: arm.algorithm,
        schemes: arm.schemes,
        completed: runs.len(),
        failed,
        swap_rates: per(&|r, i| r.swap_rates[i], adjacencies),
        expected_swap_rates: per(&|r, i| r.expected_swap_rates[i], adjacencies),
        esjd: per(&|r, i| r.esjd[i], adjacencies),
        final_weights: per(&|r, i| Some(r.final_weights[i]), modes),
    }
}

/// One `(marginal, beta)` entry of the theory report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalEntry {
    pub beta: f64,
    pub functionals: Option<MarginalFunctionals<f64>>,
    /// `beta * S + 1`, zero in theory.
    pub s_residual: Option<f64>,
    /// `beta^2 * Cov(h, k) - 1` from quadrature, zero in theory.
    pub v_residual: Option<f64>,
    /// `beta^2 * (R/(4 beta) + Var(k)/4 - V/2)`, zero in theory.
    pub identity_residual: Option<f64>,
    pub degenerate: Option<bool>,
    pub optimal_ell: Option<f64>,
    pub induced_acceptance: Option<f64>,
    /// Why the acceptance check was not made, or the error met.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalReport {
    pub marginal: String,
    pub symmetric: bool,
    pub entries: Vec<FunctionalEntry>,
    pub cold_order: Option<ColdOrderReport>,
    pub cold_order_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub optimal_u: f64,
    pub marginals: Vec<MarginalReport>,
    pub config: serde_json::Value,
}

pub fn theory_entry(marginal: &CatalogueMarginal<f64>, beta: f64, degenerate_tol: f64, settings: &QuadSettings<f64>) -> FunctionalEntry {
    let mut entry = FunctionalEntry {
        beta,
        functionals: None,
        s_residual: None,
        v_residual: None,
        identity_residual: None,
        degenerate: None,
        optimal_ell: None,
        induced_acceptance: None,
        note: None,
    };
    let f = match marginal_functionals(marginal, beta, settings) {
        Ok(f) => f,
        Err(e) => {
            entry.note = Some(e.to_string());
            return entry;
        }
    };
    entry.s_residual = Some(beta * f.s + 1.0);
    entry.v_residual = Some(beta * beta * f.cov_hk - 1.0);
    entry.identity_residual = Some(beta * beta * f.identity_residual());
    let degenerate = f.is_degenerate(degenerate_tol);
    entry.degenerate = Some(degenerate);
    if degenerate {
        entry.note = Some("bracket is zero: the limiting ESJD grows without bound in ell, so no optimal acceptance exists".into());
    } else if f.bracket > 0.0 {
        entry.note = Some(format!("positive bracket {:e} contradicts the theory; quadrature suspect", f.bracket));
    } else {
        match optimal_ell(f.curvature()) {
            Ok(o) => {
                entry.optimal_ell = Some(o.ell);
                entry.induced_acceptance = o.induced_acceptance;
            }
            Err(e) => entry.note = Some(e.to_string()),
        }
    }
    entry.functionals = Some(f);
    entry
}

/// Functionals, identity residuals, optimal scaling and cold-order fits for
/// every configured marginal; written to `<out>/theory.json` when `out` is set.
pub fn verify_theory(path: &Path, overrides: &Overrides) -> Result<TheoryReport> {
    let (cfg, text): (TheoryConfig, String) = load(path)?;
    cfg.validate(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_kind(&e))))?;
    let report = theory_report(&cfg)?;
    if let Some(out) = &overrides.out {
        create_dir(out)?;
        write_json(&out.join("theory.json"), &report)?;
    }
    Ok(report)
}

pub fn theory_report(cfg: &TheoryConfig) -> Result<TheoryReport> {
    let settings = QuadSettings::default();
    let grid = cfg.cold_order_betas.clone().unwrap_or_else(|| log_grid(10.0, 1000.0, 7));
    let mut marginals = Vec::new();
    for spec in &cfg.marginals {
        let m = spec.build::<f64>()?;
        let entries = cfg
            .betas
            .iter()
            .map(|&b| theory_entry(&m, b, cfg.degenerate_tol, &settings))
            .collect();
        let (cold_order, cold_order_note) = match cold_order_scan(&m, &grid, cfg.gamma, &settings) {
            Ok(r) if r.is_degenerate() => (Some(r), Some("bracket vanishes on the whole grid (Gaussian case)".into())),
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        marginals.push(MarginalReport {
            marginal: m.name(),
            symmetric: m.is_symmetric(),
            entries,
            cold_order,
            cold_order_note,
        });
    }
    Ok(TheoryReport {
        optimal_u: crate::schedule_theory::optimal_u::<f64>(),
        marginals,
        config: serde_json::to_value(cfg)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneReport {
    pub tuned: TunedSchedule<f64>,
    pub levels: usize,
    pub mean_ratio: f64,
    pub config: serde_json::Value,
}

/// Tunes a ladder; written to `<out>/schedule.json` when an output is given.
pub fn tune(path: &Path, overrides: &Overrides) -> Result<TuneReport> {
    let (mut cfg, text): (TuneConfig, String) = load(path)?;
    cfg.validate(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_kind(&e))))?;
    if let Some(seed) = overrides.seed {
        cfg.pilot.seed = seed;
    }
    let target = cfg.target.build()?;
    let tuned = tune_schedule(&target, cfg.hottest_beta, &cfg.pilot)?;
    let report = TuneReport {
        levels: tuned.schedule.levels(),
        mean_ratio: tuned.mean_ratio(),
        tuned,
        config: serde_json::to_value(&cfg)?,
    };
    if let Some(out) = overrides.out.as_ref().or(cfg.output.as_ref()) {
        create_dir(out)?;
        write_json(&out.join("schedule.json"), &report)?;
    }
    Ok(report)
}

/// Short human-readable digest of a finished experiment.
pub fn print_digest(outcome: &ExperimentOutcome, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "betas: {:?}", outcome.summary.betas)?;
    for arm in &outcome.summary.arms {
        let rates: Vec<String> = arm
            .swap_rates
            .iter()
            .map(|m| m.mean.map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        let weights: Vec<String> = arm
            .final_weights
            .iter()
            .map(|m| m.mean.map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        writeln!(
            w,
            "{:<12} {:?} N={:<4} runs={} failed={} swap rates [{}] weights [{}]",
            arm.name,
            arm.algorithm,
            arm.schemes,
            arm.completed,
            arm.failed.len(),
            rates.join(", "),
            weights.join(", ")
        )?;
    }
    let costs: BTreeMap<&str, Option<f64>> = outcome
        .timing
        .arms
        .iter()
        .zip(&outcome.timing.ratio_to_first)
        .map(|(a, r)| (a.name.as_str(), *r))
        .collect();
    writeln!(w, "A/R relative to the first arm: {costs:?}")?;
    writeln!(w, "outputs in {}", outcome.out.display())
}
