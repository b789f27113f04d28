//! Random ICNN potentials: midpoint convexity, monotone gradients and the
//! identity map at zero weights.

use hotet::diffcore::Tensor;
use hotet::icnn::{IcnnParams, IcnnSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hotet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = IcnnSpec::for_dim(4);
    println!("spec {:?}, {} parameters", spec.hidden, spec.param_count());
    let net = IcnnParams::random(&spec, &mut rng, 1.0);
    net.validate()?;

    let (mut gap, mut mono) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let (fx, fy, fm) = (net.forward_point(&x)?, net.forward_point(&y)?, net.forward_point(&m)?);
        gap = gap.min(0.5 * (fx + fy) - fm);
        let t = net.transport_map(&Tensor::from_rows(&[&x, &y]))?;
        let s: f64 = (0..4).map(|c| (t.get(0, c) - t.get(1, c)) * (x[c] - y[c])).sum();
        mono = mono.min(s);
    }
    println!("min midpoint gap      {gap:.3e}");
    println!("min monotonicity      {mono:.3e}");

    let x = Tensor::from_rows(&[[1.0, -2.0, 0.5, 3.0]]);
    let id = IcnnParams::zeros(&spec).transport_map(&x)?;
    println!("zero weights map {:?} to {:?}", x.data(), id.data());
    Ok(())
}
