//! Summaries of finished runs: swap acceptance per adjacency, empirical
//! squared jumping distance in the temperature coordinate, running mode-weight
//! estimates, and run-time standardised acceptance.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Algorithm;
use crate::scalar::Real;
use crate::schedule_theory::TemperatureSchedule;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyCounts {
    pub proposals: u64,
    pub acceptances: u64,
    /// Sum of the acceptance probabilities of all proposals.
    pub expected_acceptances: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub proposals: u64,
    pub acceptances: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Scale adaptation before measurement.
    pub adapt_seconds: f64,
    /// Measured iterations only.
    pub seconds: f64,
}

/// Everything recorded by one population run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TraceLog<T> {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub schemes: usize,
    pub betas: Vec<T>,
    pub quanta_levels: Vec<usize>,
    pub thin: usize,
    /// Values stored per cold chain per recorded iteration.
    pub record_width: usize,
    pub recorded_iterations: Vec<usize>,
    /// Iteration-major, then scheme, then coordinate.
    pub cold_samples: Vec<T>,
    pub swaps: Vec<AdjacencyCounts>,
    pub within: Vec<LevelCounts>,
    /// Frozen within-level proposal scales.
    pub scales: Vec<T>,
    pub skipped_swap_phases: usize,
    pub timing: Timing,
    pub config_echo: serde_json::Value,
}

impl<T: Real> TraceLog<T> {
    /// Equality of everything except wall-clock timings.
    pub fn eq_ignoring_timing(&self, other: &Self) -> bool {
        let strip = |l: &Self| Self {
            timing: Timing::default(),
            ..l.clone()
        };
        strip(self) == strip(other)
    }

    /// Cold-chain value of coordinate `coord` for `scheme` at recorded row `row`.
    pub fn cold_value(&self, row: usize, scheme: usize, coord: usize) -> T {
        self.cold_samples[(row * self.schemes + scheme) * self.record_width + coord]
    }

    /// First coordinate of every cold chain, iteration-major.
    pub fn cold_first_coordinates(&self) -> Vec<T> {
        self.cold_samples.iter().step_by(self.record_width).copied().collect()
    }

    /// First coordinate of one scheme's cold chain over time.
    pub fn cold_series(&self, scheme: usize) -> Vec<T> {
        (0..self.recorded_iterations.len())
            .map(|r| self.cold_value(r, scheme, 0))
            .collect()
    }

    /// One row per recorded iteration per scheme:
    /// `iteration, scheme, level, x0[, x1, ...]`.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["iteration".to_string(), "scheme".into(), "level".into()];
        header.extend((0..self.record_width).map(|c| format!("x{c}")));
        w.write_record(&header)?;
        for (r, &it) in self.recorded_iterations.iter().enumerate() {
            for i in 0..self.schemes {
                let mut row = vec![it.to_string(), i.to_string(), "0".into()];
                row.extend((0..self.record_width).map(|c| self.cold_value(r, i, c).to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Acceptance fraction per adjacency; `None` where nothing was proposed.
pub fn swap_rates<T: Real>(log: &TraceLog<T>) -> Vec<Option<f64>> {
    log.swaps
        .iter()
        .map(|a| (a.proposals > 0).then(|| a.acceptances as f64 / a.proposals as f64))
        .collect()
}

/// Mean acceptance probability per adjacency (lower variance than [`swap_rates`]).
pub fn expected_swap_rates<T: Real>(log: &TraceLog<T>) -> Vec<Option<f64>> {
    log.swaps
        .iter()
        .map(|a| (a.proposals > 0).then(|| a.expected_acceptances / a.proposals as f64))
        .collect()
}

/// `(beta_l - beta_{l+1})^2` times the swap acceptance rate, per adjacency.
pub fn empirical_esjd<T: Real>(log: &TraceLog<T>, schedule: &TemperatureSchedule<T>) -> Result<Vec<Option<f64>>> {
    if schedule.adjacencies() != log.swaps.len() {
        return Err(Error::Config(format!(
            "schedule has {} adjacencies but the log has {}",
            schedule.adjacencies(),
            log.swaps.len()
        )));
    }
    Ok(swap_rates(log)
        .into_iter()
        .zip(schedule.spacings())
        .map(|(r, eps)| r.map(|r| eps.as_f64().powi(2) * r))
        .collect())
}

/// Running estimate of one mode's weight from a cold-chain projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEstimate {
    pub mode: usize,
    pub lower: f64,
    pub upper: f64,
    pub burn_in: usize,
    /// `series[m]` is the fraction of samples `B..=B+m` in `(lower, upper]`.
    pub series: Vec<f64>,
}

impl WeightEstimate {
    pub fn last(&self) -> f64 {
        *self.series.last().expect("non-empty series")
    }

    /// `index,estimate` rows (index counts samples from the start of the chain).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["index", "estimate"])?;
        for (m, v) in self.series.iter().enumerate() {
            w.write_record([(self.burn_in + m).to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Fraction of samples after the first `burn_in` that fall in `(lower, upper]`,
/// as a running series.
pub fn mode_weight_series<T: Real>(
    samples: &[T],
    mode: usize,
    lower: f64,
    upper: f64,
    burn_in: usize,
) -> Result<WeightEstimate> {
    if !(lower < upper) {
        return Err(Error::Config(format!("band ({lower}, {upper}] is empty")));
    }
    if burn_in >= samples.len() {
        return Err(Error::Config(format!(
            "burn-in {burn_in} leaves nothing of {} samples",
            samples.len()
        )));
    }
    let mut inside = 0u64;
    let series = samples[burn_in..]
        .iter()
        .enumerate()
        .map(|(m, x)| {
            let x = x.as_f64();
            inside += u64::from(lower < x && x <= upper);
            inside as f64 / (m + 1) as f64
        })
        .collect();
    Ok(WeightEstimate {
        mode,
        lower,
        upper,
        burn_in,
        series,
    })
}

/// Bands around sorted mode locations: boundaries at midpoints, with the
/// outer bands extended by half the neighbouring gap. A single mode gets the
/// whole line.
pub fn default_bands(modes: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut m = modes.to_vec();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("mode locations must be finite".into()));
    }
    m.sort_by(f64::total_cmp);
    if m.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("mode locations must be distinct".into()));
    }
    match m.len() {
        0 => Err(Error::Config("no mode locations given".into())),
        1 => Ok(vec![(f64::NEG_INFINITY, f64::INFINITY)]),
        k => Ok((0..k)
            .map(|i| {
                let lo = if i == 0 {
                    m[0] - (m[1] - m[0]) / 2.0
                } else {
                    (m[i - 1] + m[i]) / 2.0
                };
                let hi = if i + 1 == k {
                    m[k - 1] + (m[k - 1] - m[k - 2]) / 2.0
                } else {
                    (m[i] + m[i + 1]) / 2.0
                };
                (lo, hi)
            })
            .collect()),
    }
}

/// Run-time standardised acceptance for one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub algorithm: Algorithm,
    /// Seconds, divided by the scheme count for population runs.
    pub run_time: f64,
    /// First-adjacency swap acceptance rate.
    pub acceptance: f64,
    pub acceptance_per_second: f64,
}

impl CostEntry {
    pub fn new(algorithm: Algorithm, run_time: f64, acceptance: f64) -> Self {
        Self {
            algorithm,
            run_time,
            acceptance,
            acceptance_per_second: acceptance / run_time,
        }
    }

    pub fn from_log<T: Real>(log: &TraceLog<T>) -> Result<Self> {
        let acceptance = swap_rates(log)
            .first()
            .copied()
            .flatten()
            .ok_or_else(|| Error::Config("log has no first-adjacency swap proposals".into()))?;
        if !(log.timing.seconds > 0.0) {
            return Err(Error::Config("log carries no run time".into()));
        }
        let run_time = match log.algorithm {
            Algorithm::Pt => log.timing.seconds,
            Algorithm::Quanta => log.timing.seconds / log.schemes as f64,
        };
        Ok(Self::new(log.algorithm, run_time, acceptance))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub a: CostEntry,
    pub b: CostEntry,
    /// `b.acceptance_per_second / a.acceptance_per_second`.
    pub ratio: f64,
}

pub fn compare_costs(a: CostEntry, b: CostEntry) -> CostComparison {
    CostComparison {
        a,
        b,
        ratio: b.acceptance_per_second / a.acceptance_per_second,
    }
}

pub fn cost_report<T: Real>(log_a: &TraceLog<T>, log_b: &TraceLog<T>) -> Result<CostComparison> {
    Ok(compare_costs(CostEntry::from_log(log_a)?, CostEntry::from_log(log_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule_theory::geometric_schedule;

    fn log_with(algorithm: Algorithm, schemes: usize, counts: &[(u64, u64)], seconds: f64) -> TraceLog<f64> {
        TraceLog {
            algorithm,
            seed: 0,
            schemes,
            betas: geometric_schedule(2e-4, counts.len() + 1).unwrap().betas().to_vec(),
            quanta_levels: vec![],
            thin: 1,
            record_width: 1,
            recorded_iterations: vec![0, 1],
            cold_samples: vec![0.5; 2 * schemes],
            swaps: counts
                .iter()
                .map(|&(p, a)| AdjacencyCounts {
                    proposals: p,
                    acceptances: a,
                    expected_acceptances: a as f64,
                })
                .collect(),
            within: vec![],
            scales: vec![],
            skipped_swap_phases: 0,
            timing: Timing {
                adapt_seconds: 0.0,
                seconds,
            },
            config_echo: serde_json::Value::Null,
        }
    }

    #[test]
    fn rates_and_missing_entries() {
        let log = log_with(Algorithm::Pt, 1, &[(10, 10), (0, 0), (4, 1)], 1.0);
        assert_eq!(swap_rates(&log), vec![Some(1.0), None, Some(0.25)]);
    }

    #[test]
    fn esjd_examples() {
        let schedule = geometric_schedule(2e-4, 3).unwrap();
        let log = log_with(Algorithm::Quanta, 1, &[(100, 99), (100, 0)], 1.0);
        let e = empirical_esjd(&log, &schedule).unwrap();
        assert!((e[0].unwrap() - (1.0_f64 - 2e-4).powi(2) * 0.99).abs() < 1e-15);
        assert!((e[0].unwrap() - 0.9896).abs() < 1e-4);
        assert_eq!(e[1], Some(0.0));
        let full = log_with(Algorithm::Quanta, 1, &[(5, 5), (5, 5)], 1.0);
        let e = empirical_esjd(&full, &schedule).unwrap();
        for (v, eps) in e.iter().zip(schedule.spacings()) {
            assert_eq!(v.unwrap(), eps * eps);
        }
        let short = geometric_schedule(0.5, 2).unwrap();
        assert!(empirical_esjd(&log, &short).is_err());
    }

    #[test]
    fn weight_series_basics() {
        let w = mode_weight_series(&[1.0, 2.0, 3.0], 0, 0.0, 5.0, 0).unwrap();
        assert_eq!(w.series, vec![1.0, 1.0, 1.0]);
        let w = mode_weight_series(&[9.0, 1.0, 9.0, 1.0], 0, 0.0, 5.0, 1).unwrap();
        assert_eq!(w.series, vec![1.0, 0.5, 2.0 / 3.0]);
        // the band is open below and closed above
        let w = mode_weight_series(&[0.0, 5.0], 0, 0.0, 5.0, 0).unwrap();
        assert_eq!(w.last(), 0.5);
        assert!(mode_weight_series(&[1.0], 0, 0.0, 5.0, 1).is_err());
        assert!(mode_weight_series(&[1.0], 0, 5.0, 5.0, 0).is_err());
    }

    #[test]
    fn bands_for_five_modes() {
        let b = default_bands(&[200.0, -200.0, 0.0, 100.0, -100.0]).unwrap();
        assert_eq!(b[0], (-250.0, -150.0));
        assert_eq!(b[2], (-50.0, 50.0));
        assert_eq!(b[4], (150.0, 250.0));
        assert_eq!(default_bands(&[3.0]).unwrap(), vec![(f64::NEG_INFINITY, f64::INFINITY)]);
        assert!(default_bands(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn cost_arithmetic() {
        let pt = CostEntry::new(Algorithm::Pt, 5.60, 0.06);
        let qa = CostEntry::new(Algorithm::Quanta, 8.01, 0.99);
        let c = compare_costs(pt, qa);
        assert_eq!((pt.acceptance_per_second * 100.0).round() / 100.0, 0.01);
        assert_eq!((qa.acceptance_per_second * 100.0).round() / 100.0, 0.12);
        assert!((c.ratio - (0.99 / 8.01) / (0.06 / 5.60)).abs() < 1e-12);

        let pt = CostEntry::new(Algorithm::Pt, 8.00, 0.0);
        let qa = CostEntry::new(Algorithm::Quanta, 12.79, 0.99);
        assert_eq!(pt.acceptance_per_second, 0.0);
        assert_eq!((qa.acceptance_per_second * 100.0).round() / 100.0, 0.08);
    }

    #[test]
    fn cost_from_logs() {
        let a = log_with(Algorithm::Quanta, 100, &[(100, 99)], 801.0);
        let c = cost_report(&a, &a).unwrap();
        assert_eq!(c.ratio, 1.0);
        assert!((c.a.run_time - 8.01).abs() < 1e-12);
        let empty = log_with(Algorithm::Pt, 1, &[(0, 0)], 1.0);
        assert!(cost_report(&empty, &a).is_err());
    }

    #[test]
    fn trace_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let log = log_with(Algorithm::Quanta, 2, &[(3, 2)], 1.5);
        let p = dir.path().join("log.json");
        log.write_json(&p).unwrap();
        assert_eq!(TraceLog::<f64>::read_json(&p).unwrap(), log);
        let csv_path = dir.path().join("trace.csv");
        log.write_trace_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(csv_path).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2);
        assert!(text.starts_with("iteration,scheme,level,x0\n"));
    }
}
