//! The distribution embedding ignores atom order and atom splitting.

use hotet::diffcore::Tensor;
use hotet::embedder::{EmpiricalDistribution, TransformerParams, TransformerSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> hotet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = TransformerSpec::for_dim(2);
    let net = TransformerParams::init(&spec, &mut rng)?;
    let n = 24;
    let data: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dist = EmpiricalDistribution::uniform(Tensor::new(n, 2, data)?)?;
    let z = net.embed(&dist)?;
    println!("context length {}", z.len());

    let perm: Vec<usize> = (0..n).rev().collect();
    let zp = net.embed(&dist.permuted(&perm)?)?;
    println!("reversed order        max diff {:.2e}", max_diff(&z.0, &zp.0));

    let mut rows: Vec<usize> = (0..n).collect();
    rows.push(0);
    let mut w = dist.weights().to_vec();
    w[0] *= 0.5;
    w.push(w[0]);
    let split = EmpiricalDistribution::new(dist.points().gather_rows(&rows), w)?;
    let zs = net.embed(&split)?;
    println!("first atom split      max diff {:.2e}", max_diff(&z.0, &zs.0));

    let one = EmpiricalDistribution::uniform(Tensor::row(&[0.5, -0.5]))?;
    println!("single atom context length {}", net.embed(&one)?.len());
    Ok(())
}
