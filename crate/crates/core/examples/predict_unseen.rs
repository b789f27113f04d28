//! Multiple-to-one HOTET: train on a family of mixtures, then predict maps
//! for mixtures never seen in training. The same run with the embedding
//! replaced by a constant context shows what the embedding contributes.
//!
//! ```text
//! cargo run --release --example predict_unseen -- 250
//! ```

use hotet::bench::{l2_uvp, multi_problem, GroundTruthPair, N_EVAL};
use hotet::embedder::EmpiricalDistribution;
use hotet::icnn::IcnnSpec;
use hotet::sampler::Sampler;
use hotet::solvers::SolverKind;
use hotet::trainer::{ablate_embedding, predict, train_multi, HotetModel, ModelSpec, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_uvp(model: &HotetModel, pairs: &[GroundTruthPair]) -> hotet::Result<f64> {
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let pts = p.source().sample(&mut ChaCha8Rng::seed_from_u64(100 + i as u64), 512);
        let maps = predict(model, &EmpiricalDistribution::uniform(pts)?, 128)?;
        total += l2_uvp(&maps.forward, p, N_EVAL, 5)?;
    }
    Ok(total / pairs.len() as f64)
}

fn main() -> hotet::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(250);
    let problem = multi_problem(2, 50, 10, 3)?;
    let sides: Vec<_> = problem.train.iter().map(|p| p.source()).collect();
    let sources: Vec<&dyn Sampler> = sides.iter().map(|s| s as &dyn Sampler).collect();

    let spec = ModelSpec {
        icnn: IcnnSpec::new(2, vec![32, 32])?,
        ..ModelSpec::for_dim(2)
    };
    let cfg = TrainConfig {
        iterations,
        batch_size: 256,
        embed_points: 128,
        dist_batch: 8,
        solver: SolverKind::Mmv2,
        ..TrainConfig::default()
    };
    let model = HotetModel::init(&spec, 0)?;
    for (name, init) in [("full", model.clone()), ("no embedding", ablate_embedding(&model, 1))] {
        let start = std::time::Instant::now();
        let (trained, _) = train_multi(init, &sources, &problem.reference, &cfg)?;
        println!(
            "{name:>12}: train uvp {:.2}%  test uvp {:.2}%  ({:.0}s)",
            mean_uvp(&trained, &problem.train)?,
            mean_uvp(&trained, &problem.test)?,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
