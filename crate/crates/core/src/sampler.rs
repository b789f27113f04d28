use rand::RngCore;

use crate::diffcore::Tensor;
use crate::embedder::EmpiricalDistribution;

/// Anything that can produce i.i.d. points in `ℝᵈ`.
pub trait Sampler {
    fn dim(&self) -> usize;

    /// `n` points as an `n × d` tensor.
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Tensor;
}

impl Sampler for EmpiricalDistribution {
    fn dim(&self) -> usize {
        EmpiricalDistribution::dim(self)
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Tensor {
        EmpiricalDistribution::sample(self, rng, n)
    }
}

impl<S: Sampler + ?Sized> Sampler for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Tensor {
        (**self).sample(rng, n)
    }
}
