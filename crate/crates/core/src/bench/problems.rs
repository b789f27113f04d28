use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mixture::GaussianMixture;
use super::pair::{from_na, make_pair_brenier, make_pair_pullback, AffineMap, GroundTruthPair, PointMap};
use crate::error::Result;
use crate::icnn::{IcnnParams, IcnnSpec};

/// Symmetric matrix with eigenvalues uniform in `[lo, hi]` and a random basis.
pub fn random_spd<R: Rng + ?Sized>(d: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let eig = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    let s = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// A `d`-dimensional one-to-one problem: `μ` a random three-component
/// mixture, `ν = (∇u)_#μ` for a random convex `u`.
pub fn pair_problem(d: usize, seed: u64) -> Result<GroundTruthPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = GaussianMixture::random(d, 3, &mut rng)?;
    let width = (2 * d).max(16);
    let u = IcnnParams::random(&IcnnSpec::new(d, vec![width, width])?, &mut rng, 1.0);
    make_pair_brenier(mu, PointMap::Gradient(u), seed)
}

/// Sources sharing one reference `ν`.
#[derive(Clone, Debug)]
pub struct MultiProblem {
    pub reference: GaussianMixture,
    pub train: Vec<GroundTruthPair>,
    pub test: Vec<GroundTruthPair>,
}

/// Reference `ν` is a random three-component mixture; each source is
/// `μᵢ = (∇uᵢ)_#ν` for an affine `∇uᵢ(y) = Sᵢy + cᵢ` with `Sᵢ` symmetric,
/// eigenvalues in `[0.5, 2]`, and `cᵢ ∈ [−2, 2]ᵈ`. The optimal map
/// `μᵢ → ν` is `(∇uᵢ)⁻¹`.
pub fn multi_problem(d: usize, n_train: usize, n_test: usize, seed: u64) -> Result<MultiProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = GaussianMixture::random(d, 3, &mut rng)?;
    let draw = |rng: &mut ChaCha8Rng| -> Result<GroundTruthPair> {
        let s = random_spd(d, 0.5, 2.0, rng);
        let c = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u = AffineMap::new(from_na(&s), c)?;
        make_pair_pullback(reference.clone(), PointMap::Affine(u), seed)
    };
    let train = (0..n_train).map(|_| draw(&mut rng)).collect::<Result<_>>()?;
    let test = (0..n_test).map(|_| draw(&mut rng)).collect::<Result<_>>()?;
    Ok(MultiProblem { reference, train, test })
}
