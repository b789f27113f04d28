use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pair::{GroundTruthPair, TransportMap};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Default number of fresh samples per metric.
pub const N_EVAL: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub uvp_fwd: f64,
    pub uvp_inv: f64,
    pub cs_fwd: f64,
    pub cs_inv: f64,
    pub n_eval: usize,
    pub seed: u64,
    pub wall_time_s: f64,
}

fn predictions(map: &dyn TransportMap, pair: &GroundTruthPair, n_eval: usize, seed: u64) -> Result<[Tensor; 3]> {
    if n_eval == 0 {
        return Err(Error::Config("n_eval must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = pair.sample_pairs(&mut rng, n_eval)?;
    let pred = map.apply(&x)?;
    if pred.shape() != y.shape() {
        return Err(Error::Shape(format!(
            "map returned {:?} for input {:?}",
            pred.shape(),
            x.shape()
        )));
    }
    if !pred.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            detail: "map produced non-finite points".into(),
        });
    }
    Ok([x, y, pred])
}

/// `100 · ‖T̂ − T*‖²_{L²(μ)} / Var(ν)`.
pub fn l2_uvp(map: &dyn TransportMap, pair: &GroundTruthPair, n_eval: usize, seed: u64) -> Result<f64> {
    let [_, y, pred] = predictions(map, pair, n_eval, seed)?;
    let err: f64 = pred.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(100.0 * err / n_eval as f64 / pair.target_variance())
}

/// Cosine between the displacements `T̂ − id` and `T* − id` in `L²(μ)`.
///
/// Zero when either displacement vanishes.
pub fn cos_sim(map: &dyn TransportMap, pair: &GroundTruthPair, n_eval: usize, seed: u64) -> Result<f64> {
    let [x, y, pred] = predictions(map, pair, n_eval, seed)?;
    let (mut dot, mut nh, mut nt) = (0.0, 0.0, 0.0);
    for ((xi, yi), pi) in x.data().iter().zip(y.data()).zip(pred.data()) {
        let a = pi - xi;
        let b = yi - xi;
        dot += a * b;
        nh += a * a;
        nt += b * b;
    }
    if nh == 0.0 || nt == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nh.sqrt() * nt.sqrt())).clamp(-1.0, 1.0))
}

/// Forward and inverse metrics; the inverse is scored on the reversed pair.
pub fn evaluate(
    fwd: &dyn TransportMap,
    inv: &dyn TransportMap,
    pair: &GroundTruthPair,
    n_eval: usize,
    seed: u64,
) -> Result<EvalReport> {
    let start = Instant::now();
    let rev = pair.reversed(seed)?;
    Ok(EvalReport {
        uvp_fwd: l2_uvp(fwd, pair, n_eval, seed)?,
        uvp_inv: l2_uvp(inv, &rev, n_eval, seed)?,
        cs_fwd: cos_sim(fwd, pair, n_eval, seed)?,
        cs_inv: cos_sim(inv, &rev, n_eval, seed)?,
        n_eval,
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
