//! Isotropic Gaussian mixtures with exact log-densities and seeded sampling.
//!
//! These serve both as benchmark data distributions and as analytic
//! generator densities, so every density here is exact (no fitting).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One isotropic Gaussian component: mean vector and scalar std dev.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// Mixture of isotropic Gaussians. Weights are normalized at construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<Component>,
    weights: Vec<f64>,
}

const LN_2PI: f64 = 1.8378770664093453;

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

impl GaussianMixture {
    /// Build a mixture, validating weights, dimensions and sigmas.
    pub fn new(components: Vec<Component>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("empty mixture".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let d = components[0].mean.len();
        if d == 0 {
            return Err(Error::InvalidParameter("zero-dimensional mean".into()));
        }
        for c in &components {
            if c.mean.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.mean.len(),
                });
            }
            if !c.sigma.is_finite() || c.sigma <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "sigma must be positive, got {}",
                    c.sigma
                )));
            }
        }
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("weights must be non-negative with positive sum".into()));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { components, weights })
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// log Σ_i w_i N(x; μ_i, σ_i² I), via log-sum-exp.
    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        let mut terms = Vec::with_capacity(self.components.len());
        for (c, &w) in self.components.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let sq: f64 = x
                .iter()
                .zip(&c.mean)
                .map(|(xi, mi)| (xi - mi) * (xi - mi))
                .sum();
            let log_norm = -0.5 * d as f64 * (LN_2PI + 2.0 * c.sigma.ln());
            terms.push(w.ln() + log_norm - sq / (2.0 * c.sigma * c.sigma));
        }
        Ok(log_sum_exp(&terms))
    }

    /// n iid draws: component chosen by weight, plus isotropic noise.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                idx = i;
                break;
            }
        }
        let c = &self.components[idx];
        c.mean
            .iter()
            .map(|&m| m + c.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// The 5×5 grid benchmark: means on {−2,−1,0,1,2}², σ = 0.05, equal weights.
///
/// Component index is `iy * 5 + ix` with x varying fastest, so indices
/// 20..=24 form the top row.
pub fn make_grid25() -> GaussianMixture {
    let mut components = Vec::with_capacity(25);
    for iy in 0..5 {
        for ix in 0..5 {
            components.push(Component {
                mean: vec![-2.0 + ix as f64, -2.0 + iy as f64],
                sigma: 0.05,
            });
        }
    }
    let weights = vec![1.0 / 25.0; 25];
    GaussianMixture::new(components, weights).expect("grid25 parameters are valid")
}

/// Four-mode univariate benchmark: means {−3,−1,1,3}, σ = 0.5, equal
/// weights. With `missing = Some(k)` the k-th component is removed and the
/// remaining weights renormalized, giving the imperfect generator density.
pub fn make_univariate4(missing: Option<usize>) -> Result<GaussianMixture> {
    let means = [-3.0, -1.0, 1.0, 3.0];
    if let Some(k) = missing {
        if k >= 4 {
            return Err(Error::InvalidParameter(format!(
                "missing component index {k} out of range 0..4"
            )));
        }
    }
    let kept: Vec<usize> = (0..4).filter(|&i| Some(i) != missing).collect();
    let components = kept
        .iter()
        .map(|&i| Component {
            mean: vec![means[i]],
            sigma: 0.5,
        })
        .collect();
    let w = 1.0 / kept.len() as f64;
    GaussianMixture::new(components, vec![w; kept.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
        (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp()
            / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn standard_normal_at_zero() {
        let m = GaussianMixture::new(
            vec![Component { mean: vec![0.0], sigma: 1.0 }],
            vec![1.0],
        )
        .unwrap();
        let lp = m.logpdf(&[0.0]).unwrap();
        assert!((lp - (-0.9189385332046727)).abs() < 1e-12, "{lp}");
    }

    #[test]
    fn two_component_average_matches_direct_sum() {
        let m = GaussianMixture::new(
            vec![
                Component { mean: vec![-1.0], sigma: 1.0 },
                Component { mean: vec![1.0], sigma: 1.0 },
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        // direct summation oracle
        let expected = (0.5 * normal_pdf(0.0, -1.0, 1.0) + 0.5 * normal_pdf(0.0, 1.0, 1.0)).ln();
        let got = m.logpdf(&[0.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn grid25_logpdf_matches_bruteforce() {
        let m = make_grid25();
        let x = [0.0, 0.0];
        // brute-force sum over all 25 components in plain arithmetic
        let mut p = 0.0;
        for iy in 0..5 {
            for ix in 0..5 {
                let (mx, my) = (-2.0 + ix as f64, -2.0 + iy as f64);
                let sq = (x[0] - mx).powi(2) + (x[1] - my).powi(2);
                p += (1.0 / 25.0) * (-sq / (2.0 * 0.05 * 0.05)).exp()
                    / (2.0 * std::f64::consts::PI * 0.05 * 0.05);
            }
        }
        let got = m.logpdf(&x).unwrap();
        assert!((got - p.ln()).abs() < 1e-9, "got {got}, expected {}", p.ln());
    }

    #[test]
    fn logpdf_no_underflow_far_out() {
        let m = make_grid25();
        let lp = m.logpdf(&[100.0, 100.0]).unwrap();
        assert!(lp.is_finite());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let m = make_grid25();
        assert!(matches!(
            m.logpdf(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sample_zero_is_empty() {
        let m = make_grid25();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.sample(0, &mut rng).is_empty());
    }

    #[test]
    fn sample_moments_single_component() {
        let m = GaussianMixture::new(
            vec![Component { mean: vec![0.0], sigma: 0.05 }],
            vec![1.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = m.sample(10_000, &mut rng);
        let mean: f64 = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        let var: f64 =
            xs.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var.sqrt() - 0.05).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn grid25_sample_counts_concentrate() {
        let m = make_grid25();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs = m.sample(100_000, &mut rng);
        let mut counts = [0usize; 25];
        for x in &xs {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in m.components().iter().enumerate() {
                let d = (x[0] - c.mean[0]).powi(2) + (x[1] - c.mean[1]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            counts[best] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as i64 - 4000).unsigned_abs() <= 400,
                "mode {i} got {c} samples"
            );
        }
    }

    #[test]
    fn univariate4_construction() {
        let full = make_univariate4(None).unwrap();
        assert_eq!(full.n_components(), 4);
        assert!(full.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));

        let gen = make_univariate4(Some(3)).unwrap();
        assert_eq!(gen.n_components(), 3);
        assert!(gen.weights().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(gen.components().iter().all(|c| c.mean[0] != 3.0));

        assert!(make_univariate4(Some(4)).is_err());
    }

    #[test]
    fn missing_mode_density_gap() {
        let data = make_univariate4(None).unwrap();
        let gen = make_univariate4(Some(3)).unwrap();
        let ld = data.logpdf(&[3.0]).unwrap();
        let lg = gen.logpdf(&[3.0]).unwrap();
        assert!(ld - lg > 5.0, "expected a large density gap, got {}", ld - lg);
    }

    #[test]
    fn univariate_density_integrates_to_one() {
        // trapezoid quadrature on [-10, 10]
        for m in [make_univariate4(None).unwrap(), make_univariate4(Some(1)).unwrap()] {
            let n = 20_000;
            let h = 20.0 / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let x = -10.0 + i as f64 * h;
                let f = m.logpdf(&[x]).unwrap().exp();
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                total += w * f * h;
            }
            assert!((total - 1.0).abs() < 1e-3, "integral {total}");
        }
    }

    #[test]
    fn two_sample_ks_against_independent_draw() {
        // two independent draws from the same mixture should pass a
        // two-sample KS test at alpha = 0.01 in nearly all trials
        let m = make_univariate4(None).unwrap();
        let trials = 40;
        let n = 2000usize;
        // critical value c(0.01) * sqrt((m+n)/(m n))
        let crit = 1.628 * ((2.0 * n as f64) / (n as f64 * n as f64)).sqrt();
        let mut pass = 0;
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
            let a: Vec<f64> = m.sample(n, &mut rng).into_iter().map(|x| x[0]).collect();
            let b: Vec<f64> = m.sample(n, &mut rng).into_iter().map(|x| x[0]).collect();
            let (stat, _) = crate::metrics::ks_two_sample(&a, &b).unwrap();
            if stat < crit {
                pass += 1;
            }
        }
        assert!(pass * 100 >= trials * 95, "only {pass}/{trials} passed");
    }
}
