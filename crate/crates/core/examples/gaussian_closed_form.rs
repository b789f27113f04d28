//! Raw MM-B potentials fitted between two Gaussians, scored against the
//! closed-form map.
//!
//! ```text
//! cargo run --release --example gaussian_closed_form -- 2000
//! ```

use hotet::bench::{gaussian_ot_map, l2_uvp, Gaussian, GaussianMixture, GroundTruthPair, PointMap, N_EVAL};
use hotet::icnn::{IcnnParams, IcnnSpec};
use hotet::solvers::{RawSolver, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hotet::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let mu = Gaussian::standard(2);
    let nu = Gaussian::new(vec![1.0, 0.0], vec![4.0, 0.0, 0.0, 1.0])?;
    let exact = gaussian_ot_map(&mu, &nu)?;
    let pair = GroundTruthPair::new(
        GaussianMixture::single(mu)?,
        PointMap::Identity,
        PointMap::Affine(exact),
        0,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = IcnnSpec::for_dim(2);
    let f = IcnnParams::random(&spec, &mut rng, 0.1);
    let g = IcnnParams::random(&spec, &mut rng, 0.1);
    let cfg = SolverConfig {
        batch_size: 256,
        lr: 1e-2,
        ..SolverConfig::default()
    };
    let mut solver = RawSolver::new(f, g, cfg)?;
    let start = std::time::Instant::now();
    for t in 0..iterations {
        let rec = solver.step(&pair.source(), &pair.target(), &mut rng, t)?;
        if t % 250 == 0 || t + 1 == iterations {
            let uvp = l2_uvp(&solver.f, &pair, N_EVAL, 1)?;
            println!(
                "iter {t:5}  loss_fwd {:+.4}  loss_inv {:+.4}  uvp {uvp:.3}%  {:.1}s",
                rec.loss_fwd,
                rec.loss_inv,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
