//! Two-level, one-dimensional systems on lattices where the rescaling map
//! sends lattice points to lattice points, so the swap kernel becomes a
//! finite matrix.
//!
//! With `beta_cold / beta_hot = 4` the map scales offsets from a mode by 2
//! (cold to hot) and by 1/2 (hot to cold). The cold lattice has spacing `h`
//! and the hot lattice spacing `2h`, with every mode on both lattices. Each
//! lattice point carries mass `pi^beta(x)` times its spacing, so the Jacobian
//! of the continuous map is accounted for by the change of spacing.

#![allow(dead_code)]

use quanta::clustering::{ModeSet, ModeSource};
use quanta::kernels::propose_quanta_swap;
use quanta::target::{GaussianMixtureTarget, TargetDensity};

pub const H: f64 = 0.25;
pub const COLD: f64 = 1.0;
pub const HOT: f64 = 0.25;

pub struct System {
    pub target: GaussianMixtureTarget<f64>,
    pub modes: ModeSet<f64>,
    pub cold: Vec<f64>,
    pub hot: Vec<f64>,
}

impl System {
    pub fn new() -> Self {
        // unequal weights and scales so nothing cancels by symmetry
        let target = GaussianMixtureTarget::new(vec![0.3, 0.7], vec![-6.0, 6.0], vec![1.0, 1.4], 1).unwrap();
        let modes = ModeSet::new(vec![vec![-6.0], vec![6.0]], ModeSource::Oracle).unwrap();
        let cold = (-56..=56).map(|j| j as f64 * H).collect();
        let hot = (-56..=56).map(|j| j as f64 * 2.0 * H).collect();
        Self { target, modes, cold, hot }
    }

    pub fn states(&self) -> usize {
        self.cold.len() * self.hot.len()
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.hot.len(), s % self.hot.len())
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.hot.len() + b
    }

    /// Unnormalised log mass of a joint state.
    pub fn log_mass(&self, s: usize) -> f64 {
        let (a, b) = self.coords(s);
        COLD * self.target.log_density(&[self.cold[a]]) + H.ln() + HOT * self.target.log_density(&[self.hot[b]]) + (2.0 * H).ln()
    }

    pub fn stationary(&self) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.states()).map(|s| self.log_mass(s)).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    fn lattice_index(grid: &[f64], x: f64, spacing: f64) -> Option<usize> {
        let j = (x - grid[0]) / spacing;
        let r = j.round();
        ((j - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < grid.len()).then_some(r as usize)
    }

    /// Target state and acceptance probability of the rescaled swap from `s`.
    /// Proposals leaving the lattice window are rejected.
    pub fn swap(&self, s: usize) -> Option<(usize, f64)> {
        let (a, b) = self.coords(s);
        let x = [self.cold[a]];
        let y = [self.hot[b]];
        let p = propose_quanta_swap(
            &x,
            self.target.log_density(&x),
            &y,
            self.target.log_density(&y),
            COLD,
            HOT,
            &self.modes,
            &self.target,
        )
        .unwrap();
        let (g_x, g_y) = p.proposed;
        let new_cold = Self::lattice_index(&self.cold, g_y[0], H)?;
        let new_hot = Self::lattice_index(&self.hot, g_x[0], 2.0 * H)?;
        let alpha = p.log_acceptance_ratio.min(0.0).exp();
        Some((self.index(new_cold, new_hot), alpha))
    }

    /// Applies the swap kernel to a distribution.
    pub fn apply_swap(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        for s in 0..p.len() {
            match self.swap(s) {
                Some((t, alpha)) => {
                    out[t] += p[s] * alpha;
                    out[s] += p[s] * (1.0 - alpha);
                }
                None => out[s] += p[s],
            }
        }
        out
    }

    /// Applies one within-level Metropolis sweep (nearest-neighbour lattice
    /// proposals, each direction with probability 1/2) to both levels.
    pub fn apply_within(&self, p: &[f64]) -> Vec<f64> {
        let cold_log: Vec<f64> = self.cold.iter().map(|&x| COLD * self.target.log_density(&[x])).collect();
        let hot_log: Vec<f64> = self.hot.iter().map(|&x| HOT * self.target.log_density(&[x])).collect();
        let step = |p: &[f64], n_a: usize, n_b: usize, cold: bool| {
            let mut out = vec![0.0; p.len()];
            for a in 0..n_a {
                for b in 0..n_b {
                    let s = a * n_b + b;
                    let (pos, len, logs) = if cold { (a, n_a, &cold_log) } else { (b, n_b, &hot_log) };
                    let mut stay = 1.0;
                    for dir in [-1i64, 1] {
                        let q = pos as i64 + dir;
                        if q < 0 || q >= len as i64 {
                            continue;
                        }
                        let q = q as usize;
                        let alpha = (logs[q] - logs[pos]).min(0.0).exp() * 0.5;
                        let t = if cold { q * n_b + b } else { a * n_b + q };
                        out[t] += p[s] * alpha;
                        stay -= alpha;
                    }
                    out[s] += p[s] * stay;
                }
            }
            out
        };
        let q = step(p, self.cold.len(), self.hot.len(), true);
        step(&q, self.cold.len(), self.hot.len(), false)
    }
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Largest entrywise `|pi(a) P(a, b) - pi(b) P(b, a)|` over swap moves, the
/// largest relative mismatch, and the number of states that can move.
pub fn balance_error(sys: &System) -> (f64, f64, usize) {
    let pi = sys.stationary();
    let (mut abs, mut rel, mut moved) = (0.0f64, 0.0f64, 0);
    for s in 0..sys.states() {
        let Some((t, alpha)) = sys.swap(s) else { continue };
        if t == s {
            continue;
        }
        // K(t, s): the reverse move only reaches s through the swap from t
        let beta = match sys.swap(t) {
            Some((back, beta)) if back == s => beta,
            _ => 0.0,
        };
        if alpha > 0.0 {
            assert_eq!(sys.swap(t).map(|m| m.0), Some(s), "accepted moves are involutive");
            moved += 1;
        }
        let (flow, reverse) = (pi[s] * alpha, pi[t] * beta);
        abs = abs.max((flow - reverse).abs());
        if flow.max(reverse) > 0.0 {
            rel = rel.max((flow - reverse).abs() / flow.max(reverse));
        }
    }
    (abs, rel, moved)
}

/// `(P2 o P1^k) p`.
pub fn composite(sys: &System, p: &[f64], k: usize) -> Vec<f64> {
    let mut q = p.to_vec();
    for _ in 0..k {
        q = sys.apply_within(&q);
    }
    sys.apply_swap(&q)
}

/// TV distance between the target and its image under the composite kernel.
pub fn stationarity_error(sys: &System) -> f64 {
    let pi = sys.stationary();
    tv(&composite(sys, &pi, 3), &pi)
}
