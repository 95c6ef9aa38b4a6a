//! Weighted K-means over chain positions and local refinement of cluster
//! centres into mode points.
//!
//! Points carry the inverse temperature of the chain they came from as a
//! weight, so colder chains have more leverage on the centres.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sq_dist, Real};
use crate::target::TargetDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSource {
    RawCluster,
    RefinedMode,
    Oracle,
}

/// `K >= 1` pairwise distinct centring points in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet<T> {
    centres: Vec<Vec<T>>,
    source: ModeSource,
}

impl<T: Real> ModeSet<T> {
    pub fn new(centres: Vec<Vec<T>>, source: ModeSource) -> Result<Self> {
        Self::validate_shape(&centres)?;
        for i in 0..centres.len() {
            for j in 0..i {
                if centres[i] == centres[j] {
                    return Err(Error::Config(format!("mode centres {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { centres, source })
    }

    /// Builds a mode set, merging centres closer than `radius * (1 + |c|)`
    /// into the earlier one.
    pub fn merged(centres: Vec<Vec<T>>, source: ModeSource, radius: T) -> Result<Self> {
        Self::validate_shape(&centres)?;
        let mut kept: Vec<Vec<T>> = Vec::with_capacity(centres.len());
        for c in centres {
            let norm = c.iter().map(|&v| v * v).sum::<T>().sqrt();
            let r = radius * (T::one() + norm);
            if kept.iter().all(|k| sq_dist(k, &c) > r * r) {
                kept.push(c);
            }
        }
        Ok(Self {
            centres: kept,
            source,
        })
    }

    fn validate_shape(centres: &[Vec<T>]) -> Result<()> {
        let Some(first) = centres.first() else {
            return Err(Error::Config("mode set needs at least one centre".into()));
        };
        let d = first.len();
        if d == 0 || centres.iter().any(|c| c.len() != d) {
            return Err(Error::Config("mode centres must share a positive dimension".into()));
        }
        if centres.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("mode centres must be finite".into()));
        }
        Ok(())
    }

    pub fn centres(&self) -> &[Vec<T>] {
        &self.centres
    }

    pub fn source(&self) -> ModeSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centres[0].len()
    }
}

/// Chain positions with their inverse temperatures as weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPointSet<T> {
    points: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Real> WeightedPointSet<T> {
    pub fn new(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::Config("point weights must be positive and finite".into()));
        }
        if let Some(first) = points.first() {
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(Error::Config("points must share a dimension".into()));
            }
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Output of [`weighted_kmeans`].
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit<T> {
    pub centres: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    pub objective: T,
    /// Objective after every centre update.
    pub history: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> KMeansFit<T> {
    /// The centres as a [`ModeSet`], with coincident centres merged.
    pub fn mode_set(&self) -> Result<ModeSet<T>> {
        ModeSet::merged(self.centres.clone(), ModeSource::RawCluster, T::zero())
    }
}

fn nearest<T: Real>(x: &[T], centres: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (h, c) in centres.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (h, d);
        }
    }
    best
}

fn objective<T: Real>(data: &WeightedPointSet<T>, centres: &[Vec<T>], assignment: &[usize]) -> T {
    data.points
        .iter()
        .zip(&data.weights)
        .zip(assignment)
        .map(|((x, &w), &a)| w * sq_dist(x, &centres[a]))
        .sum()
}

/// Weighted K-means from the given initial centres.
///
/// Alternates nearest-centre assignment with weighted-mean centre updates
/// until the assignment no longer changes or `max_iter` updates were made.
/// An empty cluster is reseeded at the point with the largest weighted
/// distance to its current centre.
pub fn weighted_kmeans<T: Real>(
    data: &WeightedPointSet<T>,
    k: usize,
    init: Vec<Vec<T>>,
    max_iter: usize,
) -> Result<KMeansFit<T>> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cannot fit {k} clusters to {n} points"
        )));
    }
    if init.len() != k {
        return Err(Error::Config(format!("expected {k} initial centres, got {}", init.len())));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    let d = data.points[0].len();
    if init.iter().any(|c| c.len() != d) {
        return Err(Error::Config("initial centres have the wrong dimension".into()));
    }

    let mut centres = init;
    let mut assignment: Vec<usize> = data.points.iter().map(|x| nearest(x, &centres).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        reseed_empty(data, k, &centres, &mut assignment);

        let mut sums = vec![vec![T::zero(); d]; k];
        let mut mass = vec![T::zero(); k];
        for ((x, &w), &a) in data.points.iter().zip(&data.weights).zip(&assignment) {
            mass[a] = mass[a] + w;
            for (s, &xi) in sums[a].iter_mut().zip(x) {
                *s = *s + w * xi;
            }
        }
        for ((c, s), &m) in centres.iter_mut().zip(sums).zip(&mass) {
            *c = s.into_iter().map(|v| v / m).collect();
        }
        history.push(objective(data, &centres, &assignment));

        let next: Vec<usize> = data.points.iter().map(|x| nearest(x, &centres).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let objective = objective(data, &centres, &assignment);
    Ok(KMeansFit {
        centres,
        assignment,
        objective,
        history,
        iterations,
    })
}

fn reseed_empty<T: Real>(
    data: &WeightedPointSet<T>,
    k: usize,
    centres: &[Vec<T>],
    assignment: &mut [usize],
) {
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        // farthest point (weighted) from its own centre, taken from a cluster
        // that keeps at least one member
        let donor = data
            .points
            .iter()
            .zip(&data.weights)
            .enumerate()
            .filter(|&(j, _)| counts[assignment[j]] > 1)
            .map(|(j, (x, &w))| (j, w * sq_dist(x, &centres[assignment[j]])))
            .fold(None, |best: Option<(usize, T)>, (j, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((j, v)),
            });
        if let Some((j, _)) = donor {
            counts[assignment[j]] -= 1;
            assignment[j] = empty;
            counts[empty] = 1;
        }
    }
}

/// Draws `k` distinct initial centres from the points, each draw favouring
/// points in proportion to their weight.
pub fn weighted_init<T: Real, R: Rng + ?Sized>(
    data: &WeightedPointSet<T>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    if k == 0 || k > data.len() {
        return Err(Error::Config(format!(
            "cannot draw {k} initial centres from {} points",
            data.len()
        )));
    }
    let weights = &data.weights;
    let idx = rand::seq::index::sample_weighted(rng, data.len(), |j| weights[j].as_f64(), k)
        .map_err(|e| Error::Numerical(format!("weighted initialisation failed: {e}")))?;
    Ok(idx.into_iter().map(|j| data.points[j].clone()).collect())
}

/// How initial K-means centres are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    /// [`weighted_init`]: distinct points drawn in proportion to weight.
    Weighted,
    /// [`weighted_plus_plus_init`]: weight times squared distance seeding.
    #[default]
    WeightedPlusPlus,
}

pub fn initial_centres<T: Real, R: Rng + ?Sized>(
    data: &WeightedPointSet<T>,
    k: usize,
    init: KMeansInit,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    match init {
        KMeansInit::Weighted => weighted_init(data, k, rng),
        KMeansInit::WeightedPlusPlus => weighted_plus_plus_init(data, k, rng),
    }
}

/// Draws the first centre in proportion to weight and each further centre in
/// proportion to weight times the squared distance to the nearest centre
/// drawn so far. When every remaining point coincides with a chosen centre
/// the draw falls back to weight alone among unchosen points.
pub fn weighted_plus_plus_init<T: Real, R: Rng + ?Sized>(
    data: &WeightedPointSet<T>,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    let n = data.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot draw {k} initial centres from {n} points")));
    }
    let w: Vec<f64> = data.weights.iter().map(|v| v.as_f64()).collect();
    let mut chosen = vec![false; n];
    let mut d2 = vec![f64::INFINITY; n];
    let mut centres = Vec::with_capacity(k);
    for _ in 0..k {
        let mut scores: Vec<f64> = (0..n)
            .map(|j| if chosen[j] { 0.0 } else { w[j] * d2[j].min(f64::MAX) })
            .collect();
        if !scores.iter().any(|&s| s > 0.0) || centres.is_empty() {
            scores = (0..n).map(|j| if chosen[j] { 0.0 } else { w[j] }).collect();
        }
        let pick = rand::distr::weighted::WeightedIndex::new(&scores)
            .map_err(|e| Error::Numerical(format!("weighted initialisation failed: {e}")))?;
        let j = rng.sample(pick);
        chosen[j] = true;
        let c = data.points[j].clone();
        for (dj, x) in d2.iter_mut().zip(&data.points) {
            *dj = dj.min(sq_dist(x, &c).as_f64());
        }
        centres.push(c);
    }
    Ok(centres)
}

/// Settings for [`refine_modes`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineSettings<T> {
    pub max_steps: usize,
    pub tol: T,
}

impl<T: Real> Default for RefineSettings<T> {
    fn default() -> Self {
        Self {
            max_steps: 200,
            tol: T::lit(1e-8),
        }
    }
}

/// Moves every centre uphill on `log pi` to a nearby local maximum.
///
/// Uses gradient ascent with Armijo backtracking when the target exposes a
/// gradient and coordinate-wise golden-section search otherwise. A refined
/// point never has lower log-density than its starting point.
pub fn refine_modes<T: Real, D: TargetDensity<T> + ?Sized>(
    centres: &ModeSet<T>,
    target: &D,
    settings: RefineSettings<T>,
) -> Result<ModeSet<T>> {
    let refined: Vec<Vec<T>> = centres
        .centres()
        .iter()
        .map(|c| refine_point(c, target, settings).point)
        .collect();
    ModeSet::merged(refined, ModeSource::RefinedMode, T::lit(1e-6))
}

/// Path of a single refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineTrace<T> {
    pub point: Vec<T>,
    /// `log pi` after every accepted step, starting with the initial value.
    pub log_densities: Vec<T>,
    pub steps: usize,
}

pub fn refine_point<T: Real, D: TargetDensity<T> + ?Sized>(
    start: &[T],
    target: &D,
    settings: RefineSettings<T>,
) -> RefineTrace<T> {
    if target.has_gradient() {
        gradient_ascent(start, target, settings)
    } else {
        golden_polish(start, target, settings)
    }
}

fn gradient_ascent<T: Real, D: TargetDensity<T> + ?Sized>(
    start: &[T],
    target: &D,
    settings: RefineSettings<T>,
) -> RefineTrace<T> {
    let armijo = T::lit(1e-4);
    let mut x = start.to_vec();
    let mut fx = target.log_density(&x);
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return RefineTrace {
            point: x,
            log_densities: trace,
            steps: 0,
        };
    }
    let mut step: Option<T> = None;
    let mut steps = 0;
    while steps < settings.max_steps {
        let Some(g) = target.gradient(&x) else { break };
        let g2: T = g.iter().map(|&v| v * v).sum();
        let gnorm = g2.sqrt();
        if !(gnorm >= settings.tol) {
            break;
        }
        let mut t = match step {
            Some(s) => s * T::lit(4.0),
            None => gnorm.recip(),
        };
        let mut moved = false;
        for _ in 0..200 {
            let y: Vec<T> = x.iter().zip(&g).map(|(&xi, &gi)| xi + t * gi).collect();
            let fy = target.log_density(&y);
            if fy.is_finite() && fy >= fx + armijo * t * g2 {
                // keep halving while that still improves, so steps that
                // overshoot across the mode are not taken repeatedly
                let (mut y, mut fy) = (y, fy);
                loop {
                    let h = t * T::lit(0.5);
                    let z: Vec<T> = x.iter().zip(&g).map(|(&xi, &gi)| xi + h * gi).collect();
                    let fz = target.log_density(&z);
                    if !(fz > fy) {
                        break;
                    }
                    (y, fy, t) = (z, fz, h);
                }
                x = y;
                fx = fy;
                moved = true;
                break;
            }
            t = t * T::lit(0.5);
            if t == T::zero() {
                break;
            }
        }
        if !moved {
            break;
        }
        step = Some(t);
        steps += 1;
        trace.push(fx);
        let xnorm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
        if t * gnorm <= settings.tol * (T::one() + xnorm) {
            break;
        }
    }
    RefineTrace {
        point: x,
        log_densities: trace,
        steps,
    }
}

fn golden_polish<T: Real, D: TargetDensity<T> + ?Sized>(
    start: &[T],
    target: &D,
    settings: RefineSettings<T>,
) -> RefineTrace<T> {
    let mut x = start.to_vec();
    let mut fx = target.log_density(&x);
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return RefineTrace {
            point: x,
            log_densities: trace,
            steps: 0,
        };
    }
    let mut steps = 0;
    while steps < settings.max_steps {
        let before = x.clone();
        for i in 0..x.len() {
            let f = |v: T| {
                let mut y = x.clone();
                y[i] = v;
                target.log_density(&y)
            };
            let (best, fbest) = golden_line_max(f, x[i], fx, settings.tol);
            if fbest > fx {
                x[i] = best;
                fx = fbest;
            }
        }
        steps += 1;
        trace.push(fx);
        let moved = sq_dist(&x, &before).sqrt();
        if moved <= settings.tol {
            break;
        }
    }
    RefineTrace {
        point: x,
        log_densities: trace,
        steps,
    }
}

/// Maximises a 1-D function near `x0` by bracketing outward and golden-section
/// search. Returns the best point seen.
fn golden_line_max<T: Real, F: Fn(T) -> T>(f: F, x0: T, f0: T, tol: T) -> (T, T) {
    let finite_or_min = |v: T| if v.is_finite() { v } else { T::neg_infinity() };
    let mut h = T::lit(1e-3) * (T::one() + x0.abs());
    // pick the uphill direction
    let fr = finite_or_min(f(x0 + h));
    let fl = finite_or_min(f(x0 - h));
    if fr <= f0 && fl <= f0 {
        // already bracketed by [x0 - h, x0 + h]
        return golden_section(&f, x0 - h, x0 + h, x0, f0, tol);
    }
    let dir = if fr > fl { T::one() } else { -T::one() };
    let (mut a, mut b, mut fb) = (x0, x0 + dir * h, fr.max(fl));
    for _ in 0..200 {
        h = h * T::lit(2.0);
        let c = b + dir * h;
        let fc = finite_or_min(f(c));
        if fc <= fb {
            let (lo, hi) = if dir > T::zero() { (a, c) } else { (c, a) };
            return golden_section(&f, lo, hi, b, fb, tol);
        }
        a = b;
        b = c;
        fb = fc;
    }
    (b, fb)
}

fn golden_section<T: Real, F: Fn(T) -> T>(f: &F, mut lo: T, mut hi: T, best0: T, fbest0: T, tol: T) -> (T, T) {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let mut best = (best0, fbest0);
    let eval = |v: T| {
        let fv = f(v);
        if fv.is_finite() {
            fv
        } else {
            T::neg_infinity()
        }
    };
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..300 {
        if (hi - lo).abs() <= tol * (T::one() + best.0.abs()) {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = eval(d);
        }
        for (v, fv) in [(c, fc), (d, fd)] {
            if fv > best.1 {
                best = (v, fv);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::stream_rng;
    use crate::target::GaussianMixtureTarget;
    use rand::Rng;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn mode_set_invariants() {
        assert!(ModeSet::<f64>::new(vec![], ModeSource::Oracle).is_err());
        assert!(ModeSet::new(pts(&[1.0, 1.0]), ModeSource::Oracle).is_err());
        let m = ModeSet::merged(pts(&[1.0, 1.0 + 1e-12, 3.0]), ModeSource::RefinedMode, 1e-6).unwrap();
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn single_cluster_is_weighted_mean() {
        let data = WeightedPointSet::new(pts(&[0.0, 10.0, 4.0]), vec![1.0, 0.5, 0.25]).unwrap();
        let fit = weighted_kmeans(&data, 1, pts(&[100.0]), 10).unwrap();
        let expected = (0.0 * 1.0 + 10.0 * 0.5 + 4.0 * 0.25) / 1.75;
        assert!((fit.centres[0][0] - expected).abs() < 1e-14);
    }

    #[test]
    fn two_point_leverage_follows_beta_ratio() {
        let data = WeightedPointSet::new(pts(&[0.0, 1.0]), vec![1.0, 3.0]).unwrap();
        let fit = weighted_kmeans(&data, 1, pts(&[0.5]), 5).unwrap();
        // centre = 3/4, closer to the heavier point by exactly the weight ratio
        assert!((fit.centres[0][0] - 0.75).abs() < 1e-15);
        let (d0, d1) = (fit.centres[0][0], 1.0 - fit.centres[0][0]);
        assert!((d0 / d1 - 3.0).abs() < 1e-12);
    }

    fn unweighted_kmeans(points: &[Vec<f64>], mut centres: Vec<Vec<f64>>, iters: usize) -> Vec<Vec<f64>> {
        for _ in 0..iters {
            let assign: Vec<usize> = points.iter().map(|p| nearest(p, &centres).0).collect();
            for (h, c) in centres.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> =
                    points.iter().zip(&assign).filter(|(_, &a)| a == h).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                for i in 0..c.len() {
                    c[i] = members.iter().map(|p| p[i]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        centres
    }

    #[test]
    fn equal_weights_reduce_to_plain_kmeans() {
        let mut rng = stream_rng(5, 0);
        let points: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 3) as f64 * 10.0 + rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)])
            .collect();
        let init = vec![points[0].clone(), points[1].clone(), points[2].clone()];
        let data = WeightedPointSet::new(points.clone(), vec![0.37; 60]).unwrap();
        let fit = weighted_kmeans(&data, 3, init.clone(), 50).unwrap();
        let plain = unweighted_kmeans(&points, init, fit.iterations);
        for (a, b) in fit.centres.iter().zip(&plain) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let data = WeightedPointSet::new(pts(&[0.0, 0.1, 10.0, 10.2]), vec![1.0; 4]).unwrap();
        // second centre far from everything: starts empty
        let fit = weighted_kmeans(&data, 2, pts(&[5.0, 1000.0]), 20).unwrap();
        let mut c: Vec<f64> = fit.centres.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.1).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn errors_on_bad_shapes() {
        let data = WeightedPointSet::new(pts(&[0.0, 1.0]), vec![1.0; 2]).unwrap();
        assert!(weighted_kmeans(&data, 3, pts(&[0.0, 1.0, 2.0]), 5).is_err());
        assert!(weighted_kmeans(&data, 1, pts(&[0.0]), 0).is_err());
        assert!(WeightedPointSet::new(pts(&[0.0]), vec![0.0]).is_err());
        assert!(WeightedPointSet::new(pts(&[0.0]), vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn init_draws_distinct_points() {
        let data = WeightedPointSet::new(pts(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 1e-3, 1e-3, 1.0]).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let mut init: Vec<f64> = weighted_init(&data, 3, &mut rng).unwrap().into_iter().map(|c| c[0]).collect();
            init.sort_by(f64::total_cmp);
            init.dedup();
            assert_eq!(init.len(), 3);
        }
    }

    #[test]
    fn plus_plus_init_covers_separated_clusters() {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for m in [-200.0, -100.0, 0.0, 100.0, 200.0] {
            for j in 0..10 {
                xs.push(m + 0.01 * j as f64);
                ws.push(if j % 2 == 0 { 1.0 } else { 2e-4 });
            }
        }
        let data = WeightedPointSet::new(pts(&xs), ws).unwrap();
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let init = weighted_plus_plus_init(&data, 5, &mut rng).unwrap();
            let mut modes: Vec<i64> = init.iter().map(|c| (c[0] / 100.0).round() as i64).collect();
            modes.sort();
            modes.dedup();
            assert_eq!(modes.len(), 5);
        }
        let few = WeightedPointSet::new(pts(&[1.0, 1.0, 1.0]), vec![1.0; 3]).unwrap();
        assert_eq!(weighted_plus_plus_init(&few, 3, &mut rng).unwrap().len(), 3);
    }

    #[test]
    fn refinement_keeps_a_mean_in_place() {
        let t = GaussianMixtureTarget::<f64>::one_dim_five_mode();
        let m = ModeSet::new(pts(&[100.0]), ModeSource::RawCluster).unwrap();
        let r = refine_modes(&m, &t, RefineSettings::default()).unwrap();
        assert!((r.centres()[0][0] - 100.0).abs() < 1e-6);
        assert_eq!(r.source(), ModeSource::RefinedMode);
    }

    #[test]
    fn refinement_converges_to_nearest_mode_monotonically() {
        let t = GaussianMixtureTarget::<f64>::one_dim_five_mode();
        let tr = refine_point(&[-195.0], &t, RefineSettings::default());
        assert!((tr.point[0] + 200.0).abs() < 1e-4, "{:?}", tr.point);
        assert!(tr.log_densities.windows(2).all(|w| w[1] >= w[0]));
    }

    struct NoGradient<D>(D);

    impl<D: TargetDensity<f64>> TargetDensity<f64> for NoGradient<D> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            self.0.log_density(x)
        }
    }

    #[test]
    fn golden_polish_without_gradient() {
        let t = NoGradient(GaussianMixtureTarget::new(vec![1.0, 1.0], vec![-3.0, 4.0], vec![0.5, 0.7], 2).unwrap());
        let tr = refine_point(&[3.1, 4.6], &t, RefineSettings { max_steps: 200, tol: 1e-10 });
        assert!((tr.point[0] - 4.0).abs() < 1e-6 && (tr.point[1] - 4.0).abs() < 1e-6, "{:?}", tr.point);
        assert!(tr.log_densities.windows(2).all(|w| w[1] >= w[0]));
    }
}
