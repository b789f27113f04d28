//! One-to-one HOTET on a Brenier-constructed pair in the plane.
//!
//! ```text
//! cargo run --release --example hotet_pair -- 3000
//! ```

use hotet::bench::{evaluate, make_pair_brenier, GaussianMixture, PointMap, N_EVAL};
use hotet::icnn::{IcnnParams, IcnnSpec};
use hotet::solvers::SolverKind;
use hotet::trainer::{HotetModel, ModelSpec, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hotet::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mu = GaussianMixture::random(2, 3, &mut rng)?;
    let u = IcnnParams::random(&IcnnSpec::new(2, vec![16, 16])?, &mut rng, 1.0);
    let pair = make_pair_brenier(mu, PointMap::Gradient(u), 1)?;

    let spec = ModelSpec::for_dim(2);
    let model = HotetModel::init(&spec, 0)?;
    let cfg = TrainConfig {
        iterations,
        batch_size: 256,
        embed_points: 128,
        solver: SolverKind::Mmb,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, cfg)?;
    let probe_mu = pair.latent().sample_empirical(512, 11)?;
    let start = std::time::Instant::now();
    for t in 0..iterations {
        let rec = trainer.step_pair(&pair.source(), &pair.target())?;
        if t % 250 == 0 || t + 1 == iterations {
            let nu_pts = hotet::sampler::Sampler::sample(&pair.target(), &mut ChaCha8Rng::seed_from_u64(12), 512);
            let probe_nu = hotet::embedder::EmpiricalDistribution::uniform(nu_pts)?;
            let maps = trainer.model.pair_maps(&probe_mu, &probe_nu, 128)?;
            let r = evaluate(&maps.forward, &maps.inverse, &pair, N_EVAL, 3)?;
            println!(
                "iter {t:5}  loss {:+.4} {:+.4}  uvp {:.2}/{:.2}  cs {:.3}/{:.3}  {:.1}s",
                rec.loss_fwd,
                rec.loss_inv,
                r.uvp_fwd,
                r.uvp_inv,
                r.cs_fwd,
                r.cs_inv,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
