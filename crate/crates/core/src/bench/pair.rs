use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::RngCore;

use super::mixture::{Gaussian, GaussianMixture};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::icnn::IcnnParams;
use crate::sampler::Sampler;

/// Something that moves a batch of points, row by row.
pub trait TransportMap {
    fn apply(&self, x: &Tensor) -> Result<Tensor>;
}

impl<F: Fn(&Tensor) -> Result<Tensor>> TransportMap for F {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self(x)
    }
}

/// `x ↦ ∇f(x)`.
impl TransportMap for IcnnParams {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.transport_map(x)
    }
}

/// `x ↦ A x + b`, stored with `A` as a `d × d` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: Tensor,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn new(matrix: Tensor, offset: Vec<f64>) -> Result<Self> {
        let [r, c] = matrix.shape();
        if r != c || offset.len() != r {
            return Err(Error::Shape(format!(
                "affine map needs a square matrix and matching offset, got {r}×{c} and {}",
                offset.len()
            )));
        }
        Ok(Self { matrix, offset })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: Tensor::identity(d),
            offset: vec![0.0; d],
        }
    }

    pub fn translation(c: Vec<f64>) -> Self {
        Self {
            matrix: Tensor::identity(c.len()),
            offset: c,
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    fn na(&self) -> DMatrix<f64> {
        to_na(&self.matrix)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .na()
            .try_inverse()
            .ok_or_else(|| Error::Shape("affine map is singular".into()))?;
        let b = -(&inv * DVector::from_column_slice(&self.offset));
        Ok(Self {
            matrix: from_na(&inv),
            offset: b.as_slice().to_vec(),
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Self) -> Self {
        let a = self.na();
        let m = &a * inner.na();
        let b = &a * DVector::from_column_slice(&inner.offset) + DVector::from_column_slice(&self.offset);
        Self {
            matrix: from_na(&m),
            offset: b.as_slice().to_vec(),
        }
    }

    /// Gaussian mixture pushed through the map.
    pub fn push_mixture(&self, gm: &GaussianMixture) -> Result<GaussianMixture> {
        let a = self.na();
        let comps = gm
            .components()
            .iter()
            .map(|c| {
                let m = &a * DVector::from_column_slice(&c.mean) + DVector::from_column_slice(&self.offset);
                let s = &a * c.cov_matrix() * a.transpose();
                let s = (&s + s.transpose()) * 0.5;
                Gaussian::new(m.as_slice().to_vec(), s.transpose().as_slice().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(comps, gm.weights().to_vec())
    }
}

impl TransportMap for AffineMap {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "map is {}-d, points are {}-d",
                self.dim(),
                x.cols()
            )));
        }
        let mut y = x.matmul_t(&self.matrix, false, true);
        for r in 0..y.rows() {
            for (v, b) in y.row_slice_mut(r).iter_mut().zip(&self.offset) {
                *v += b;
            }
        }
        Ok(y)
    }
}

pub(crate) fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_raw(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec())
}

/// Maps used to build ground-truth pairs.
#[derive(Clone, Debug, PartialEq)]
pub enum PointMap {
    Identity,
    Affine(AffineMap),
    /// Gradient of a convex potential.
    Gradient(IcnnParams),
}

impl TransportMap for PointMap {
    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            PointMap::Identity => Ok(x.clone()),
            PointMap::Affine(a) => a.apply(x),
            PointMap::Gradient(u) => u.transport_map(x),
        }
    }
}

/// A pair `(μ, ν)` with a known optimal map.
///
/// Both sides are pushforwards of one latent mixture `ρ`: `μ = s_#ρ` and
/// `ν = t_#ρ`. Sampling `z ∼ ρ` gives exactly paired points `x = s(z)` and
/// `y = t(z) = T*(x)`.
#[derive(Clone, Debug)]
pub struct GroundTruthPair {
    latent: GaussianMixture,
    source: PointMap,
    target: PointMap,
    target_variance: f64,
}

/// Sample count used when `Var(ν)` has no closed form.
const VARIANCE_SAMPLES: usize = 1 << 16;

impl GroundTruthPair {
    pub fn new(latent: GaussianMixture, source: PointMap, target: PointMap, seed: u64) -> Result<Self> {
        let target_variance = match &target {
            PointMap::Identity => latent.covariance().trace(),
            PointMap::Affine(a) => {
                let m = a.na();
                (&m * latent.covariance() * m.transpose()).trace()
            }
            PointMap::Gradient(u) => {
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                let z = latent.sample(&mut rng, VARIANCE_SAMPLES);
                total_variance(&u.transport_map(&z)?)
            }
        };
        if !(target_variance > 0.0) {
            return Err(Error::Distribution("target distribution is degenerate".into()));
        }
        Ok(Self {
            latent,
            source,
            target,
            target_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.latent.dim()
    }

    /// Total variance of `ν`.
    pub fn target_variance(&self) -> f64 {
        self.target_variance
    }

    pub fn latent(&self) -> &GaussianMixture {
        &self.latent
    }

    pub fn source_map(&self) -> &PointMap {
        &self.source
    }

    pub fn target_map(&self) -> &PointMap {
        &self.target
    }

    /// `n` source points and their exact images.
    pub fn sample_pairs(&self, rng: &mut dyn RngCore, n: usize) -> Result<(Tensor, Tensor)> {
        let z = self.latent.sample(rng, n);
        Ok((self.source.apply(&z)?, self.target.apply(&z)?))
    }

    /// The same pair seen from `ν`; its optimal map is the inverse map.
    pub fn reversed(&self, seed: u64) -> Result<Self> {
        Self::new(self.latent.clone(), self.target.clone(), self.source.clone(), seed)
    }

    pub fn source(&self) -> Side<'_> {
        Side {
            pair: self,
            target: false,
        }
    }

    pub fn target(&self) -> Side<'_> {
        Side {
            pair: self,
            target: true,
        }
    }
}

/// One marginal of a [`GroundTruthPair`].
#[derive(Clone, Copy)]
pub struct Side<'a> {
    pair: &'a GroundTruthPair,
    target: bool,
}

impl Sampler for Side<'_> {
    fn dim(&self) -> usize {
        self.pair.dim()
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> Tensor {
        let z = self.pair.latent.sample(rng, n);
        let map = if self.target {
            &self.pair.target
        } else {
            &self.pair.source
        };
        map.apply(&z).expect("maps are built for the latent dimension")
    }
}

/// `ν := (∇u)_#μ`; the optimal map is `∇u` itself.
pub fn make_pair_brenier(mu: GaussianMixture, u: PointMap, seed: u64) -> Result<GroundTruthPair> {
    if let PointMap::Affine(a) = &u {
        let m = to_na(&a.matrix);
        if (&m - m.transpose()).abs().max() > 1e-12 || m.symmetric_eigenvalues().min() < 0.0 {
            return Err(Error::Shape("affine potential gradient must be symmetric PSD".into()));
        }
    }
    if let PointMap::Gradient(f) = &u {
        f.validate()?;
    }
    GroundTruthPair::new(mu, PointMap::Identity, u, seed)
}

/// `μ := (∇u)_#ν`; the optimal map `μ → ν` is `(∇u)⁻¹`.
pub fn make_pair_pullback(nu: GaussianMixture, u: PointMap, seed: u64) -> Result<GroundTruthPair> {
    make_pair_brenier(nu, u, seed)?.reversed(seed)
}

fn sqrt_psd(m: &DMatrix<f64>, inverse: bool) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 0.0 {
            return Err(Error::Shape("matrix is not positive semidefinite".into()));
        }
        *v = if inverse { 1.0 / v.sqrt() } else { v.sqrt() };
        if !v.is_finite() {
            return Err(Error::Shape("matrix is singular".into()));
        }
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// Closed-form optimal map between two Gaussians.
pub fn gaussian_ot_map(mu: &Gaussian, nu: &Gaussian) -> Result<AffineMap> {
    if mu.dim() != nu.dim() {
        return Err(Error::Shape("Gaussians differ in dimension".into()));
    }
    let s1 = mu.cov_matrix();
    let s2 = nu.cov_matrix();
    let r = sqrt_psd(&s1, false)?;
    let ri = sqrt_psd(&s1, true)?;
    let mid = sqrt_psd(&(&r * s2 * &r), false)?;
    let a = &ri * mid * &ri;
    let a = (&a + a.transpose()) * 0.5;
    let m1 = DVector::from_column_slice(&mu.mean);
    let m2 = DVector::from_column_slice(&nu.mean);
    let b = m2 - &a * m1;
    AffineMap::new(from_na(&a), b.as_slice().to_vec())
}

/// `½ W₂²` between two Gaussians.
pub fn gaussian_half_w2(mu: &Gaussian, nu: &Gaussian) -> Result<f64> {
    let s1 = mu.cov_matrix();
    let s2 = nu.cov_matrix();
    let r = sqrt_psd(&s1, false)?;
    let cross = sqrt_psd(&(&r * &s2 * &r), false)?;
    let dm = DVector::from_column_slice(&mu.mean) - DVector::from_column_slice(&nu.mean);
    Ok(0.5 * (dm.norm_squared() + s1.trace() + s2.trace() - 2.0 * cross.trace()))
}

/// Trace of the sample covariance.
pub fn total_variance(x: &Tensor) -> f64 {
    let n = x.rows() as f64;
    let mut total = 0.0;
    for c in 0..x.cols() {
        let mean = (0..x.rows()).map(|r| x.get(r, c)).sum::<f64>() / n;
        total += (0..x.rows()).map(|r| (x.get(r, c) - mean).powi(2)).sum::<f64>() / n;
    }
    total
}
