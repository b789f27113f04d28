use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::embedder::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::sampler::Sampler;

/// A single Gaussian `N(mean, cov)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub cov: Vec<f64>,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::Shape(format!("covariance for d={d} needs {} entries", d * d)));
        }
        let g = Self { mean, cov };
        check_spd(&g.cov_matrix())?;
        Ok(g)
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            cov: Tensor::identity(d).into_data(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.cov)
    }
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    let sym = (m - m.transpose()).abs().max();
    if sym > 1e-9 * (1.0 + m.abs().max()) {
        return Err(Error::Shape("covariance is not symmetric".into()));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::Shape("covariance is not positive definite".into()));
    }
    Ok(())
}

/// Finite mixture of Gaussians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<Gaussian>,
    weights: Vec<f64>,
    #[serde(skip)]
    factors: Vec<DMatrix<f64>>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Gaussian>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::Distribution("one weight per component required".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Shape("components differ in dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Distribution("mixture weights must lie on the simplex".into()));
        }
        let mut factors = Vec::with_capacity(components.len());
        for c in &components {
            let m = c.cov_matrix();
            check_spd(&m)?;
            factors.push(m.cholesky().unwrap().l());
        }
        Ok(Self {
            components,
            weights,
            factors,
        })
    }

    pub fn single(g: Gaussian) -> Result<Self> {
        Self::new(vec![g], vec![1.0])
    }

    /// `k` components with means uniform in `[−4, 4]ᵈ`, covariances
    /// `G Gᵀ/d + 0.1 I` with standard normal `G`, and flat-Dirichlet weights.
    pub fn random<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::Config("mixture needs d ≥ 1 and k ≥ 1".into()));
        }
        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        let components = (0..k)
            .map(|_| {
                let mean = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
                let g = DMatrix::from_fn(d, d, |_, _| {
                    let v: f64 = StandardNormal.sample(rng);
                    v
                });
                let cov = &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
                Gaussian {
                    mean,
                    cov: cov.transpose().as_slice().to_vec(),
                }
            })
            .collect();
        Self::new(components, weights)
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (c, w) in self.components.iter().zip(&self.weights) {
            m += DVector::from_column_slice(&c.mean) * *w;
        }
        m
    }

    /// Covariance of the whole mixture.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mean = self.mean();
        let mut s = DMatrix::zeros(d, d);
        for (c, w) in self.components.iter().zip(&self.weights) {
            let m = DVector::from_column_slice(&c.mean);
            s += (c.cov_matrix() + &m * m.transpose()) * *w;
        }
        s - &mean * mean.transpose()
    }

    /// `n` i.i.d. draws with uniform weights, reproducible from `seed`.
    pub fn sample_empirical(&self, n: usize, seed: u64) -> Result<EmpiricalDistribution> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmpiricalDistribution::uniform(self.sample(&mut rng, n))
    }

    fn ensure_factors(&self) -> std::borrow::Cow<'_, [DMatrix<f64>]> {
        if self.factors.len() == self.components.len() {
            std::borrow::Cow::Borrowed(&self.factors)
        } else {
            std::borrow::Cow::Owned(
                self.components
                    .iter()
                    .map(|c| c.cov_matrix().cholesky().expect("SPD covariance").l())
                    .collect(),
            )
        }
    }
}

impl Sampler for GaussianMixture {
    fn dim(&self) -> usize {
        GaussianMixture::dim(self)
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Tensor {
        let d = self.dim();
        let factors = self.ensure_factors();
        let mut data = Vec::with_capacity(n * d);
        let mut eps = vec![0.0; d];
        for _ in 0..n {
            let k = if self.weights.len() == 1 {
                0
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            };
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(rng);
            }
            let l = &factors[k];
            let mean = &self.components[k].mean;
            for i in 0..d {
                let mut v = mean[i];
                for j in 0..=i {
                    v += l[(i, j)] * eps[j];
                }
                data.push(v);
            }
        }
        Tensor::from_raw(n, d, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_spd() {
        assert!(Gaussian::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(Gaussian::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.0, 1.0]).is_err());
        assert!(Gaussian::new(vec![0.0, 0.0], vec![2.0, 0.5, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn random_mixture_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gm = GaussianMixture::random(3, 3, &mut rng).unwrap();
        assert_eq!(gm.components().len(), 3);
        assert!((gm.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in gm.components() {
            assert!(c.mean.iter().all(|m| (-4.0..4.0).contains(m)));
        }
    }

    #[test]
    fn sample_moments_match() {
        let g = Gaussian::new(vec![1.0, -2.0], vec![4.0, 1.0, 1.0, 2.0]).unwrap();
        let gm = GaussianMixture::single(g).unwrap();
        let dist = gm.sample_empirical(100_000, 3).unwrap();
        let m = dist.mean();
        assert!((m[0] - 1.0).abs() < 0.03 && (m[1] + 2.0).abs() < 0.03);
        let pts = dist.points();
        let mut c01 = 0.0;
        for r in 0..pts.rows() {
            c01 += (pts.get(r, 0) - m[0]) * (pts.get(r, 1) - m[1]);
        }
        assert!((c01 / pts.rows() as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn mixture_covariance_of_two_points() {
        let a = Gaussian::new(vec![-1.0], vec![0.5]).unwrap();
        let b = Gaussian::new(vec![1.0], vec![0.5]).unwrap();
        let gm = GaussianMixture::new(vec![a, b], vec![0.5, 0.5]).unwrap();
        assert!((gm.covariance()[(0, 0)] - 1.5).abs() < 1e-12);
    }
}
