//! Target densities and their tempered versions.
//!
//! All densities are handled in the log domain. A tempered density at inverse
//! temperature `beta` is `beta * log pi(x)` with no normalisation applied.

use crate::error::{Error, Result};
use crate::marginal::Marginal;
use crate::scalar::{log_sum_exp, Real};

/// An unnormalised log-density on `R^d`.
pub trait TargetDensity<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[T]) -> T;

    /// Gradient of `log_density`, when available analytically.
    fn gradient(&self, _x: &[T]) -> Option<Vec<T>> {
        None
    }

    fn has_gradient(&self) -> bool {
        false
    }

    /// Mode locations known a priori (used as oracle centres and warm starts).
    fn known_modes(&self) -> Option<Vec<Vec<T>>> {
        None
    }
}

impl<T: Real, D: TargetDensity<T> + ?Sized> TargetDensity<T> for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[T]) -> T {
        (**self).log_density(x)
    }
    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        (**self).gradient(x)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
    fn known_modes(&self) -> Option<Vec<Vec<T>>> {
        (**self).known_modes()
    }
}

impl<T: Real, D: TargetDensity<T> + ?Sized> TargetDensity<T> for Box<D> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[T]) -> T {
        (**self).log_density(x)
    }
    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        (**self).gradient(x)
    }
    fn has_gradient(&self) -> bool {
        (**self).has_gradient()
    }
    fn known_modes(&self) -> Option<Vec<Vec<T>>> {
        (**self).known_modes()
    }
}

/// `beta * log pi(x)`.
pub fn tempered_log_density<T: Real, D: TargetDensity<T> + ?Sized>(
    target: &D,
    x: &[T],
    beta: T,
) -> Result<T> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::Domain(format!(
            "inverse temperature must be positive and finite, got {beta}"
        )));
    }
    if x.len() != target.dim() {
        return Err(Error::Domain(format!(
            "point has dimension {} but target has dimension {}",
            x.len(),
            target.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("point has non-finite coordinates".into()));
    }
    Ok(beta * target.log_density(x))
}

/// `pi(x) ∝ sum_k w_k prod_j phi(x_j; mu_kj, sigma_k^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureTarget<T> {
    weights: Vec<T>,
    means: Vec<Vec<T>>,
    sigmas: Vec<T>,
    dim: usize,
    // log w_k - d log sigma_k - d/2 log(2 pi)
    log_norms: Vec<T>,
}

impl<T: Real> GaussianMixtureTarget<T> {
    /// Mixture whose component `k` has every coordinate centred on `means[k]`.
    pub fn new(weights: Vec<T>, means: Vec<T>, sigmas: Vec<T>, dim: usize) -> Result<Self> {
        let means = means.into_iter().map(|m| vec![m; dim]).collect();
        Self::with_mean_vectors(weights, means, sigmas)
    }

    pub fn with_mean_vectors(weights: Vec<T>, means: Vec<Vec<T>>, sigmas: Vec<T>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        if means.len() != k || sigmas.len() != k {
            return Err(Error::Config(format!(
                "mixture has {k} weights, {} means and {} sigmas",
                means.len(),
                sigmas.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::Config("mixture means must share a positive dimension".into()));
        }
        if weights.iter().any(|&w| !(w > T::zero()) || !w.is_finite()) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        if sigmas.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::Config("mixture sigmas must be positive".into()));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Config("mixture means must be finite".into()));
        }
        let total: T = weights.iter().copied().sum();
        let weights: Vec<T> = weights.into_iter().map(|w| w / total).collect();
        let d = T::from_usize_lossy(dim);
        let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
        let log_norms = weights
            .iter()
            .zip(&sigmas)
            .map(|(&w, &s)| w.ln() - d * s.ln() - d * half_log_2pi)
            .collect();
        Ok(Self {
            weights,
            means,
            sigmas,
            dim,
            log_norms,
        })
    }

    /// Five equally weighted 1-D modes at -200, -100, 0, 100, 200 with sigma 0.01.
    pub fn one_dim_five_mode() -> Self {
        let means = [-200.0, -100.0, 0.0, 100.0, 200.0].map(T::lit).to_vec();
        Self::new(vec![T::one(); 5], means, vec![T::lit(0.01); 5], 1)
            .expect("valid preset")
    }

    /// Three equally weighted 20-D modes at -20, 0, 20 (per coordinate), sigma 0.01.
    pub fn twenty_dim_three_mode() -> Self {
        let means = [-20.0, 0.0, 20.0].map(T::lit).to_vec();
        Self::new(vec![T::one(); 3], means, vec![T::lit(0.01); 3], 20).expect("valid preset")
    }

    /// Three equally weighted 5-D modes at -20, 0, 20 with sigmas 0.02, 0.01, 0.015.
    pub fn five_dim_uneven() -> Self {
        let means = [-20.0, 0.0, 20.0].map(T::lit).to_vec();
        let sigmas = [0.02, 0.01, 0.015].map(T::lit).to_vec();
        Self::new(vec![T::one(); 3], means, sigmas, 5).expect("valid preset")
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<T>] {
        &self.means
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn component_log_density(&self, k: usize, x: &[T]) -> T {
        let s2 = self.sigmas[k] * self.sigmas[k];
        let q = crate::scalar::sq_dist(x, &self.means[k]);
        self.log_norms[k] - q / (T::lit(2.0) * s2)
    }
}

impl<T: Real> TargetDensity<T> for GaussianMixtureTarget<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[T]) -> T {
        if self.weights.len() == 1 {
            return self.component_log_density(0, x);
        }
        let terms = (0..self.weights.len()).map(|k| self.component_log_density(k, x));
        log_sum_exp(terms)
    }

    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        let logs: Vec<T> = (0..self.weights.len())
            .map(|k| self.component_log_density(k, x))
            .collect();
        let total = log_sum_exp(logs.iter().copied());
        let mut grad = vec![T::zero(); self.dim];
        for (k, &lk) in logs.iter().enumerate() {
            let resp = (lk - total).exp();
            if resp == T::zero() {
                continue;
            }
            let inv_s2 = (self.sigmas[k] * self.sigmas[k]).recip();
            for (g, (&xi, &mi)) in grad.iter_mut().zip(x.iter().zip(&self.means[k])) {
                *g = *g - resp * (xi - mi) * inv_s2;
            }
        }
        Some(grad)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn known_modes(&self) -> Option<Vec<Vec<T>>> {
        Some(mixture_mode_points(self))
    }
}

/// Component means of a mixture, which are its local maxima when the
/// components are well separated (pairwise distance above `6 * max sigma`).
pub fn mixture_mode_points<T: Real>(target: &GaussianMixtureTarget<T>) -> Vec<Vec<T>> {
    target.means.clone()
}

/// `f_d(x) = prod_i f(x_i)` for a 1-D marginal `f`.
#[derive(Clone, Debug)]
pub struct ProductMarginalTarget<M> {
    marginal: M,
    dim: usize,
}

impl<M> ProductMarginalTarget<M> {
    pub fn new(marginal: M, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Ok(Self { marginal, dim })
    }

    pub fn marginal(&self) -> &M {
        &self.marginal
    }
}

impl<T: Real, M: Marginal<T>> TargetDensity<T> for ProductMarginalTarget<M> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[T]) -> T {
        x.iter().map(|&xi| self.marginal.log_density(xi)).sum()
    }

    fn gradient(&self, x: &[T]) -> Option<Vec<T>> {
        Some(x.iter().map(|&xi| self.marginal.d1(xi)).collect())
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn known_modes(&self) -> Option<Vec<Vec<T>>> {
        Some(vec![vec![self.marginal.mode(); self.dim]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::GaussianMarginal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normal_pdf(x: f64, mu: f64, s: f64) -> f64 {
        (-(x - mu) * (x - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn tempering_at_mode_of_standard_core_is_zero() {
        let t = ProductMarginalTarget::new(GaussianMarginal::new(0.0, 1.0), 1).unwrap();
        assert_eq!(tempered_log_density(&t, &[0.0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn unit_beta_is_identity() {
        let t = GaussianMixtureTarget::<f64>::five_dim_uneven();
        let x = [0.3, -0.1, 0.2, 0.0, 0.01];
        assert_eq!(tempered_log_density(&t, &x, 1.0).unwrap(), t.log_density(&x));
    }

    #[test]
    fn five_mode_value_matches_dense_sum() {
        let t = GaussianMixtureTarget::<f64>::one_dim_five_mode();
        let direct: f64 = [-200.0, -100.0, 0.0, 100.0, 200.0]
            .iter()
            .map(|&m| 0.2 * normal_pdf(-200.0, m, 0.01))
            .sum();
        let got = tempered_log_density(&t, &[-200.0], 1.0).unwrap();
        assert!((got - direct.ln()).abs() <= 1e-12 * direct.ln().abs());
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = GaussianMixtureTarget::<f64>::one_dim_five_mode();
        assert!(matches!(
            tempered_log_density(&t, &[f64::NAN], 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(tempered_log_density(&t, &[0.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(tempered_log_density(&t, &[0.0, 1.0], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn mode_points_of_paper_presets() {
        let one = GaussianMixtureTarget::<f64>::one_dim_five_mode();
        let pts: Vec<f64> = mixture_mode_points(&one).into_iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![-200.0, -100.0, 0.0, 100.0, 200.0]);

        let twenty = GaussianMixtureTarget::<f64>::twenty_dim_three_mode();
        let pts = mixture_mode_points(&twenty);
        assert_eq!(pts.len(), 3);
        for (p, m) in pts.iter().zip([-20.0, 0.0, 20.0]) {
            assert_eq!(p.len(), 20);
            assert!(p.iter().all(|&c| c == m));
        }

        let single = GaussianMixtureTarget::new(vec![1.0], vec![3.5], vec![2.0], 2).unwrap();
        assert_eq!(mixture_mode_points(&single), vec![vec![3.5, 3.5]]);
    }

    #[test]
    fn single_component_is_product_gaussian_plus_constant() {
        let mix = GaussianMixtureTarget::new(vec![1.0], vec![1.0], vec![0.5], 3).unwrap();
        let prod = ProductMarginalTarget::new(GaussianMarginal::new(1.0, 0.5), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c0 = mix.log_density(&[0.0; 3]) - prod.log_density(&[0.0; 3]);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c = mix.log_density(&x) - prod.log_density(&x);
            assert!((c - c0).abs() < 1e-12);
        }
    }

    fn check_gradient<D: TargetDensity<f64>>(t: &D, x: &[f64]) {
        let g = t.gradient(x).unwrap();
        for i in 0..x.len() {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let fd = (t.log_density(&xp) - t.log_density(&xm)) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1e-8);
            assert!((g[i] - fd).abs() / scale < 1e-5, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mix = GaussianMixtureTarget::new(
            vec![0.3, 0.7],
            vec![-1.0, 1.5],
            vec![0.8, 1.2],
            3,
        )
        .unwrap();
        let prod = ProductMarginalTarget::new(crate::marginal::StudentTMarginal::new(5.0), 4).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            check_gradient(&mix, &x);
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            check_gradient(&prod, &y);
        }
    }

    #[test]
    fn mixture_log_density_finite_far_out() {
        let t = GaussianMixtureTarget::<f64>::twenty_dim_three_mode();
        let v = t.log_density(&[1.0e3; 20]);
        assert!(v.is_finite());
        assert!(t.gradient(&[1.0e3; 20]).unwrap().iter().all(|g| g.is_finite()));
    }
}
