//! Gaussian observation likelihood, its gradient, and the scalar KL /
//! Hellinger-affinity formulas.

use crate::error::{Error, Result};
use crate::sampling::Observations;
use crate::tensor::Tensor3;

/// Additive white Gaussian noise model with known standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel {
    sigma: f64,
}

impl GaussianModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {}",
                sigma
            )));
        }
        Ok(GaussianModel { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Full negative log-likelihood,
    /// `(|S|/2) log(2 pi sigma^2) + (1/2 sigma^2) sum_S (y - x)^2`.
    pub fn neg_log_likelihood(&self, x: &Tensor3, obs: &Observations) -> Result<f64> {
        let data = self.data_term(x, obs)?;
        let m = obs.sample_set.len() as f64;
        let constant = 0.5 * m * (2.0 * std::f64::consts::PI * self.sigma * self.sigma).ln();
        Ok(constant + data)
    }

    /// The part of the NLL that depends on `x`:
    /// `(1/2 sigma^2) sum_S (y - x)^2`. This is what the solver minimizes.
    pub fn data_term(&self, x: &Tensor3, obs: &Observations) -> Result<f64> {
        if x.dims() != obs.dims() {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {:?} vs observation dims {:?}",
                x.dims(),
                obs.dims()
            )));
        }
        let inv2s2 = 0.5 / (self.sigma * self.sigma);
        let mut acc = 0.0;
        for (&(i, j, k), y) in obs.sample_set.indices().iter().zip(&obs.values) {
            let r = y - x.get(i, j, k);
            acc += r * r;
        }
        Ok(inv2s2 * acc)
    }

    /// Gradient of the NLL w.r.t. the tensor: `(x - y)/sigma^2` at sampled
    /// indices, zero elsewhere.
    pub fn nll_gradient(&self, x: &Tensor3, obs: &Observations) -> Result<Tensor3> {
        if x.dims() != obs.dims() {
            return Err(Error::DimensionMismatch(format!(
                "tensor dims {:?} vs observation dims {:?}",
                x.dims(),
                obs.dims()
            )));
        }
        let inv_s2 = 1.0 / (self.sigma * self.sigma);
        let mut g = Tensor3::zeros(x.dims());
        for (&(i, j, k), y) in obs.sample_set.indices().iter().zip(&obs.values) {
            g.set(i, j, k, (x.get(i, j, k) - y) * inv_s2);
        }
        Ok(g)
    }
}

/// KL divergence between N(x_star, sigma^2) and N(x, sigma^2):
/// `(x_star - x)^2 / (2 sigma^2)`.
pub fn gaussian_kl(x_star: f64, x: f64, sigma: f64) -> f64 {
    let d = x_star - x;
    d * d / (2.0 * sigma * sigma)
}

/// `-2 log A(p, q)` for the same pair: `(x_star - x)^2 / (4 sigma^2)`.
pub fn gaussian_neg2log_affinity(x_star: f64, x: f64, sigma: f64) -> f64 {
    let d = x_star - x;
    d * d / (4.0 * sigma * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_bernoulli_mask, SampleSet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_obs(y: f64, sigma: f64) -> Observations {
        let set = SampleSet::new((1, 1, 1), vec![(0, 0, 0)]).unwrap();
        Observations::new(set, vec![y], sigma).unwrap()
    }

    #[test]
    fn nll_zero_residual_is_constant_term() {
        let model = GaussianModel::new(1.0).unwrap();
        let x = Tensor3::new((1, 1, 1), vec![2.0]).unwrap();
        let obs = single_obs(2.0, 1.0);
        let nll = model.neg_log_likelihood(&x, &obs).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((nll - expected).abs() < 1e-12);
        assert!((nll - 0.9189385).abs() < 1e-6);
    }

    #[test]
    fn nll_single_sample_value() {
        // y = 1, x = 0, sigma = 0.5 -> 0.5 log(2 pi 0.25) + 1/(2*0.25).
        let model = GaussianModel::new(0.5).unwrap();
        let x = Tensor3::new((1, 1, 1), vec![0.0]).unwrap();
        let obs = single_obs(1.0, 0.5);
        let nll = model.neg_log_likelihood(&x, &obs).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * 0.25).ln() + 2.0;
        assert!((nll - expected).abs() < 1e-12);
        // Cross-check against -log of the density evaluated numerically.
        let dens = (2.0 * std::f64::consts::PI * 0.25_f64).powf(-0.5) * (-1.0_f64 / 0.5).exp();
        assert!((nll + dens.ln()).abs() < 1e-12);
    }

    #[test]
    fn doubling_residuals_quadruples_data_term() {
        let model = GaussianModel::new(0.8).unwrap();
        let x1 = Tensor3::new((1, 1, 1), vec![1.0]).unwrap();
        let x2 = Tensor3::new((1, 1, 1), vec![-1.0]).unwrap(); // residual doubled
        let obs = single_obs(3.0, 0.8);
        let d1 = model.data_term(&x1, &obs).unwrap();
        let d2 = model.data_term(&x2, &obs).unwrap();
        assert!((d2 - 4.0 * d1).abs() < 1e-12 * d2.abs());
    }

    #[test]
    fn gradient_zero_at_data_and_zero_off_sample() {
        let model = GaussianModel::new(1.0).unwrap();
        let truth = Tensor3::from_fn((3, 3, 3), |i, j, k| (i + j + k) as f64);
        let mask = sample_bernoulli_mask((3, 3, 3), 0.4, 17).unwrap();
        let obs = crate::sampling::observe_gaussian(&truth, &mask, 1e-12_f64.max(1.0), 0).unwrap();
        // Build x equal to the observed values on S.
        let mut x = Tensor3::zeros((3, 3, 3));
        for (&(i, j, k), y) in obs.sample_set.indices().iter().zip(&obs.values) {
            x.set(i, j, k, *y);
        }
        let g = model.nll_gradient(&x, &obs).unwrap();
        assert!(g.max_abs() < 1e-12);
        // Off-sample entries are always zero.
        let x2 = Tensor3::from_fn((3, 3, 3), |i, j, k| (i * j + k) as f64);
        let g2 = model.nll_gradient(&x2, &obs).unwrap();
        let sampled: std::collections::HashSet<_> =
            obs.sample_set.indices().iter().cloned().collect();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if !sampled.contains(&(i, j, k)) {
                        assert_eq!(g2.get(i, j, k), 0.0);
                    }
                }
            }
        }
    }

    // Central finite-difference oracle for the gradient.
    fn fd_gradient(model: &GaussianModel, x: &Tensor3, obs: &Observations, h: f64) -> Tensor3 {
        let mut g = Tensor3::zeros(x.dims());
        let (n1, n2, n3) = x.dims();
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    let mut xp = x.clone();
                    xp.set(i, j, k, x.get(i, j, k) + h);
                    let mut xm = x.clone();
                    xm.set(i, j, k, x.get(i, j, k) - h);
                    let fp = model.neg_log_likelihood(&xp, obs).unwrap();
                    let fm = model.neg_log_likelihood(&xm, obs).unwrap();
                    g.set(i, j, k, (fp - fm) / (2.0 * h));
                }
            }
        }
        g
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for case in 0..20 {
            let sigma = 0.3 + rng.random::<f64>();
            let model = GaussianModel::new(sigma).unwrap();
            let truth = Tensor3::from_fn((3, 3, 3), |_, _, _| rng.random::<f64>() * 4.0 - 2.0);
            let mask = sample_bernoulli_mask((3, 3, 3), 0.6, case).unwrap();
            let obs = crate::sampling::observe_gaussian(&truth, &mask, sigma, case + 100).unwrap();
            let x = Tensor3::from_fn((3, 3, 3), |_, _, _| rng.random::<f64>() * 4.0 - 2.0);
            let g = model.nll_gradient(&x, &obs).unwrap();
            let fd = fd_gradient(&model, &x, &obs, 1e-5);
            for (a, b) in g.values().iter().zip(fd.values()) {
                let scale = a.abs().max(b.abs()).max(1.0);
                assert!((a - b).abs() < 1e-6 * scale, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn kl_and_affinity_formulas() {
        assert_eq!(gaussian_kl(1.5, 1.5, 0.7), 0.0);
        assert_eq!(gaussian_neg2log_affinity(1.5, 1.5, 0.7), 0.0);
        assert!((gaussian_kl(1.0, 0.0, 0.5) - 2.0).abs() < 1e-15);
        assert!((gaussian_neg2log_affinity(1.0, 0.0, 0.5) - 1.0).abs() < 1e-15);
        // Symmetry and the factor-2 relation.
        assert_eq!(gaussian_kl(0.3, -0.9, 1.1), gaussian_kl(-0.9, 0.3, 1.1));
        for (a, b, s) in [(0.2, 1.4, 0.6), (-3.0, 2.0, 1.5)] {
            let kl = gaussian_kl(a, b, s);
            let aff = gaussian_neg2log_affinity(a, b, s);
            assert!((aff - kl / 2.0).abs() < 1e-15 * kl.max(1.0));
        }
    }

    // Per-entry KL summed over S equals the KL of the joint (product) densities.
    #[test]
    fn kl_sums_to_joint_divergence() {
        let sigma = 0.9;
        let truth = Tensor3::from_fn((3, 3, 3), |i, j, k| {
            (i as f64) - (j as f64) + 0.5 * k as f64
        });
        let other = Tensor3::from_fn((3, 3, 3), |i, j, k| 0.3 * (i + j + k) as f64);
        let mask = sample_bernoulli_mask((3, 3, 3), 0.7, 2).unwrap();
        let per_entry: f64 = mask
            .indices()
            .iter()
            .map(|&(i, j, k)| gaussian_kl(truth.get(i, j, k), other.get(i, j, k), sigma))
            .sum();
        // Joint divergence for product Gaussians with equal variance is
        // ||x* - x||_F^2 over S / (2 sigma^2).
        let joint: f64 = mask
            .indices()
            .iter()
            .map(|&(i, j, k)| {
                let d = truth.get(i, j, k) - other.get(i, j, k);
                d * d
            })
            .sum::<f64>()
            / (2.0 * sigma * sigma);
        assert!((per_entry - joint).abs() < 1e-10);
    }

    proptest! {
        // Convexity along random segments.
        #[test]
        fn prop_nll_convex(seed in 0u64..500, t in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sigma = 0.5 + rng.random::<f64>();
            let model = GaussianModel::new(sigma).unwrap();
            let truth = Tensor3::from_fn((3, 3, 3), |_, _, _| rng.random::<f64>() * 2.0 - 1.0);
            let mask = sample_bernoulli_mask((3, 3, 3), 0.5, seed).unwrap();
            let obs = crate::sampling::observe_gaussian(&truth, &mask, sigma, seed + 1).unwrap();
            let x1 = Tensor3::from_fn((3, 3, 3), |_, _, _| rng.random::<f64>() * 4.0 - 2.0);
            let x2 = Tensor3::from_fn((3, 3, 3), |_, _, _| rng.random::<f64>() * 4.0 - 2.0);
            let blend = Tensor3::from_fn((3, 3, 3), |i, j, k| {
                t * x1.get(i, j, k) + (1.0 - t) * x2.get(i, j, k)
            });
            let f1 = model.neg_log_likelihood(&x1, &obs).unwrap();
            let f2 = model.neg_log_likelihood(&x2, &obs).unwrap();
            let fb = model.neg_log_likelihood(&blend, &obs).unwrap();
            prop_assert!(fb <= t * f1 + (1.0 - t) * f2 + 1e-10);
        }
    }
}
