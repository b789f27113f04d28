//! Exact discrete optimal transport between two point clouds, checked
//! against random couplings.
//!
//! ```text
//! cargo run --release --example assignment_oracle -- 256
//! ```

use hotet::bench::{discrete_ot_oracle, matching_cost};
use hotet::diffcore::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> hotet::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cloud = |shift: f64| -> hotet::Result<Tensor> {
        let data = (0..2 * n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v + shift
            })
            .collect();
        Ok(Tensor::new(n, 2, data)?)
    };
    let x = cloud(0.0)?;
    let y = cloud(2.0)?;
    let start = std::time::Instant::now();
    let (perm, w2) = discrete_ot_oracle(&x, &y)?;
    println!("n {n}: empirical W2^2 {w2:.5} in {:.3}s", start.elapsed().as_secs_f64());
    let identity: Vec<usize> = (0..n).collect();
    println!("identity coupling     {:.5}", matching_cost(&x, &y, &identity));
    let mut best_random = f64::INFINITY;
    let mut p = identity;
    for _ in 0..1000 {
        p.shuffle(&mut rng);
        best_random = best_random.min(matching_cost(&x, &y, &p));
    }
    println!("best of 1000 random   {best_random:.5}");
    println!("first pairs {:?}", &perm[..perm.len().min(8)]);
    Ok(())
}
