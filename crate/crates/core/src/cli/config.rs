//! Experiment configuration files (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::KMeansInit;
use crate::error::{Error, Result};
use crate::marginal::{CatalogueMarginal, MarginalSpec};
use crate::population::{Algorithm, RecordMode};
use crate::schedule_theory::{
    composite_schedule, geometric_schedule, GeometricSegment, PilotConfig, TemperatureSchedule,
};
use crate::target::{GaussianMixtureTarget, ProductMarginalTarget, TargetDensity};

/// Component means: one scalar per component (repeated across coordinates)
/// or one full vector per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Means {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    GaussianMixture {
        dim: usize,
        weights: Vec<f64>,
        means: Means,
        sigmas: Vec<f64>,
    },
    ProductMarginal {
        dim: usize,
        marginal: MarginalSpec,
    },
}

/// A target chosen at run time.
#[derive(Clone, Debug)]
pub enum AnyTarget {
    Mixture(GaussianMixtureTarget<f64>),
    Product(ProductMarginalTarget<CatalogueMarginal<f64>>),
}

impl TargetDensity<f64> for AnyTarget {
    fn dim(&self) -> usize {
        match self {
            AnyTarget::Mixture(t) => t.dim(),
            AnyTarget::Product(t) => t.dim(),
        }
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            AnyTarget::Mixture(t) => t.log_density(x),
            AnyTarget::Product(t) => t.log_density(x),
        }
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            AnyTarget::Mixture(t) => t.gradient(x),
            AnyTarget::Product(t) => t.gradient(x),
        }
    }
    fn has_gradient(&self) -> bool {
        match self {
            AnyTarget::Mixture(t) => t.has_gradient(),
            AnyTarget::Product(t) => t.has_gradient(),
        }
    }
    fn known_modes(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            AnyTarget::Mixture(t) => t.known_modes(),
            AnyTarget::Product(t) => t.known_modes(),
        }
    }
}

impl TargetConfig {
    pub fn build(&self) -> Result<AnyTarget> {
        match self {
            TargetConfig::GaussianMixture { dim, weights, means, sigmas } => {
                let t = match means {
                    Means::Scalar(m) => GaussianMixtureTarget::new(weights.clone(), m.clone(), sigmas.clone(), *dim)?,
                    Means::Vector(m) => {
                        if m.iter().any(|v| v.len() != *dim) {
                            return Err(Error::Config(format!("every mean vector must have length {dim}")));
                        }
                        GaussianMixtureTarget::with_mean_vectors(weights.clone(), m.clone(), sigmas.clone())?
                    }
                };
                Ok(AnyTarget::Mixture(t))
            }
            TargetConfig::ProductMarginal { dim, marginal } => {
                Ok(AnyTarget::Product(ProductMarginalTarget::new(marginal.build()?, *dim)?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Geometric {
        ratio: f64,
        levels: usize,
    },
    Composite {
        segments: Vec<GeometricSegment<f64>>,
    },
    Explicit {
        betas: Vec<f64>,
    },
    Tuned {
        hottest_beta: f64,
        #[serde(default)]
        pilot: PilotConfig,
    },
}

impl ScheduleConfig {
    /// Builds the ladder; tuned ladders need the target.
    pub fn build<D: TargetDensity<f64> + ?Sized>(&self, target: &D) -> Result<TemperatureSchedule<f64>> {
        match self {
            ScheduleConfig::Geometric { ratio, levels } => geometric_schedule(*ratio, *levels),
            ScheduleConfig::Composite { segments } => composite_schedule(segments),
            ScheduleConfig::Explicit { betas } => TemperatureSchedule::new(betas.clone()),
            ScheduleConfig::Tuned { hottest_beta, pilot } => {
                Ok(crate::schedule_theory::tune_schedule(target, *hottest_beta, pilot)?.schedule)
            }
        }
    }
}

/// Settings shared by all arms of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Composite iterations `T`.
    pub iterations: usize,
    /// Within-level sweeps per swap phase `k`.
    #[serde(default = "default_within")]
    pub within_moves: usize,
    /// Start position shared by every chain.
    pub start: Vec<f64>,
    /// Initial within-level scale at `beta = 1` (divided by `sqrt(beta)` per level).
    #[serde(default = "default_scale")]
    pub initial_scale: f64,
    /// Adaptation iterations before measurement; defaults to `iterations / 10`.
    #[serde(default)]
    pub adapt_iterations: Option<usize>,
    #[serde(default = "default_one")]
    pub thin: usize,
    #[serde(default = "default_record")]
    pub record: RecordMode,
    /// Fraction of recorded samples discarded before weight estimation.
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
}

fn default_within() -> usize {
    3
}
fn default_scale() -> f64 {
    1.0
}
fn default_one() -> usize {
    1
}
fn default_record() -> RecordMode {
    RecordMode::FirstCoordinate
}
fn default_burn_in() -> f64 {
    0.1
}

/// One algorithm configuration to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub name: String,
    pub algorithm: Algorithm,
    /// Number of schemes `N`.
    pub schemes: usize,
    /// Adjacencies using rescaled swaps; all of them when omitted.
    #[serde(default)]
    pub quanta_levels: Option<BTreeSet<usize>>,
    /// Cluster count `K`; the number of known modes when omitted.
    #[serde(default)]
    pub clusters: Option<usize>,
    #[serde(default = "default_kmeans_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default)]
    pub kmeans_init: KMeansInit,
    /// Centre rescaled swaps on the target's known modes instead of clustering.
    #[serde(default)]
    pub oracle_modes: bool,
    /// Refine cluster centres to modes; on when the target has a gradient.
    #[serde(default)]
    pub refine: Option<bool>,
}

fn default_kmeans_iter() -> usize {
    50
}

/// Mode-weight bands on the first coordinate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// Mode locations; bands are midpoints between them. Defaults to the
    /// first coordinate of the target's known modes.
    #[serde(default)]
    pub modes: Option<Vec<f64>>,
    /// Explicit `(lower, upper]` bands, overriding `modes`.
    #[serde(default)]
    pub bands: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub repeats: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub target: TargetConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    #[serde(rename = "arm")]
    pub arms: Vec<ArmConfig>,
    #[serde(default)]
    pub weights: WeightsConfig,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub marginals: Vec<MarginalSpec>,
    /// Inverse temperatures at which functionals are reported.
    pub betas: Vec<f64>,
    /// Grid for the cold-order fit; 7 log-spaced points on `[10, 1000]` by default.
    #[serde(default)]
    pub cold_order_betas: Option<Vec<f64>>,
    /// Assumed regular-variation index.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Brackets with `|bracket| <= degenerate_tol * V` are treated as zero.
    #[serde(default = "default_degenerate")]
    pub degenerate_tol: f64,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_degenerate() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub target: TargetConfig,
    pub hottest_beta: f64,
    #[serde(default)]
    pub pilot: PilotConfig,
}

/// Reads and parses a TOML file, reporting syntax and schema errors with
/// their line.
pub fn load<C: serde::de::DeserializeOwned>(path: &Path) -> Result<(C, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => e,
    })?;
    Ok((cfg, text))
}

pub fn parse<C: serde::de::DeserializeOwned>(text: &str) -> Result<C> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        match line {
            Some(l) => Error::Config(format!("line {l}: {}", e.message())),
            None => Error::Config(e.message().to_string()),
        }
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key = ...` first appears inside `[section]` (or a
/// `[[section]]` entry), for pointing validation errors at the file.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = name.trim().to_string();
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section {
            let k = line.split('=').next().unwrap_or("").trim();
            if k == key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn at(text: &str, section: &str, key: &str, msg: String) -> Error {
    let place = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
    match locate(text, section, key) {
        Some(l) => Error::Config(format!("line {l}: {place}: {msg}")),
        None => Error::Config(format!("{place}: {msg}")),
    }
}

impl ExperimentConfig {
    /// Checks every precondition that can be checked before running.
    pub fn validate(&self, text: &str) -> Result<()> {
        if self.repeats == 0 {
            return Err(at(text, "", "repeats", "must be at least 1".into()));
        }
        let target = self.target.build().map_err(|e| at(text, "target", "kind", e.to_string()))?;
        let r = &self.run;
        if r.iterations == 0 {
            return Err(at(text, "run", "iterations", "must be at least 1".into()));
        }
        if r.within_moves == 0 {
            return Err(at(text, "run", "within_moves", "must be at least 1".into()));
        }
        if r.thin == 0 {
            return Err(at(text, "run", "thin", "must be at least 1".into()));
        }
        if r.start.len() != target.dim() || r.start.iter().any(|v| !v.is_finite()) {
            return Err(at(
                text,
                "run",
                "start",
                format!("needs {} finite coordinates", target.dim()),
            ));
        }
        if !(r.initial_scale > 0.0) || !r.initial_scale.is_finite() {
            return Err(at(text, "run", "initial_scale", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&r.burn_in_fraction) {
            return Err(at(text, "run", "burn_in_fraction", "must lie in [0, 1)".into()));
        }
        let levels = match &self.schedule {
            ScheduleConfig::Tuned { hottest_beta, .. } => {
                if !(*hottest_beta > 0.0 && *hottest_beta < 1.0) {
                    return Err(at(text, "schedule", "hottest_beta", "must lie in (0, 1)".into()));
                }
                None
            }
            s => Some(
                s.build(&target)
                    .map_err(|e| at(text, "schedule", "kind", e.to_string()))?
                    .levels(),
            ),
        };
        if self.arms.is_empty() {
            return Err(Error::Config("at least one [[arm]] is required".into()));
        }
        let mut names = BTreeSet::new();
        for arm in &self.arms {
            if !names.insert(arm.name.as_str()) {
                return Err(at(text, "arm", "name", format!("duplicate arm name {:?}", arm.name)));
            }
            if arm.name.is_empty() || arm.name.contains(['/', '\\']) {
                return Err(at(text, "arm", "name", format!("{:?} is not a usable directory name", arm.name)));
            }
            if arm.schemes == 0 {
                return Err(at(text, "arm", "schemes", format!("arm {:?} needs at least one scheme", arm.name)));
            }
            if let (Some(levels), Some(q)) = (levels, &arm.quanta_levels) {
                if let Some(l) = q.iter().find(|&&l| l + 1 >= levels) {
                    return Err(at(
                        text,
                        "arm",
                        "quanta_levels",
                        format!("level {l} out of range for a {levels}-level ladder"),
                    ));
                }
            }
            if arm.algorithm == Algorithm::Quanta && arm.schemes >= 2 {
                let k = arm.clusters.unwrap_or_else(|| target.known_modes().map_or(1, |m| m.len()));
                if let Some(levels) = levels {
                    let available = (arm.schemes / 2) * levels;
                    if k == 0 || k > available {
                        return Err(at(
                            text,
                            "arm",
                            "clusters",
                            format!("arm {:?}: cannot fit {k} clusters to {available} points", arm.name),
                        ));
                    }
                }
            }
            if arm.oracle_modes && target.known_modes().is_none() {
                return Err(at(text, "arm", "oracle_modes", "the target has no known modes".into()));
            }
            if arm.kmeans_max_iter == 0 {
                return Err(at(text, "arm", "kmeans_max_iter", "must be at least 1".into()));
            }
        }
        if let Some(bands) = &self.weights.bands {
            if bands.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(at(text, "weights", "bands", "every band needs lower < upper".into()));
            }
        }
        Ok(())
    }
}

impl TheoryConfig {
    pub fn validate(&self, text: &str) -> Result<()> {
        if self.marginals.is_empty() {
            return Err(at(text, "", "marginals", "list at least one marginal".into()));
        }
        for m in &self.marginals {
            m.build::<f64>().map_err(|e| at(text, "", "marginals", e.to_string()))?;
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(at(text, "", "betas", "needs positive inverse temperatures".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(at(text, "", "gamma", "must be positive".into()));
        }
        Ok(())
    }
}

impl TuneConfig {
    pub fn validate(&self, text: &str) -> Result<()> {
        self.target.build().map_err(|e| at(text, "target", "kind", e.to_string()))?;
        if !(self.hottest_beta > 0.0 && self.hottest_beta < 1.0) {
            return Err(at(text, "", "hottest_beta", "must lie in (0, 1)".into()));
        }
        Ok(())
    }
}
