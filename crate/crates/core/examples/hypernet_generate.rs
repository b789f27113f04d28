//! A hypernetwork turning context vectors into valid ICNN potentials.

use hotet::embedder::ContextVector;
use hotet::hypernet::{HypernetParams, HypernetSpec};
use hotet::icnn::IcnnSpec;
use hotet::params::leaves;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hotet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = HypernetSpec::new(16, IcnnSpec::for_dim(2));
    let hyper = HypernetParams::init(&spec, &mut rng)?;
    println!(
        "output length {} = ICNN parameter count {}",
        hyper.output_len(),
        spec.target.param_count()
    );
    for k in 0..4 {
        let z = ContextVector((0..16).map(|_| rng.random_range(-2.0..2.0)).collect());
        let icnn = hyper.generate(&z)?;
        icnn.validate()?;
        let min_a = icnn
            .layers
            .iter()
            .filter_map(|l| l.z_weight.as_ref())
            .flat_map(|a| a.data().iter().copied())
            .fold(f64::INFINITY, f64::min);
        let norm: f64 = leaves(&icnn).iter().map(|t| t.norm().powi(2)).sum::<f64>().sqrt();
        println!(
            "context {k}: |params| {norm:.4}  min z-weight {min_a:.3e}  f(1,1) {:.4}",
            icnn.forward_point(&[1.0, 1.0])?
        );
    }
    Ok(())
}
