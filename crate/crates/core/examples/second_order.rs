//! Differentiates through an ICNN gradient: the parameter gradient of
//! `⟨∇f(x), c⟩` against central differences.

use hotet::diffcore::{grad_params, Tape, Tensor};
use hotet::icnn::{gradient, IcnnParams, IcnnSpec};
use hotet::params::{leaves, vars};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn objective(net: &IcnnParams, x: &Tensor, c: &Tensor) -> f64 {
    let t = net.transport_map(x).unwrap();
    t.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
}

fn main() -> hotet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = IcnnSpec::new(3, vec![6, 6])?;
    let net = IcnnParams::random(&spec, &mut rng, 1.0);
    let x = Tensor::from_rows(&[[0.3, -1.2, 0.8], [1.5, 0.1, -0.4]]);
    let c = Tensor::from_rows(&[[1.0, 2.0, -1.0], [0.5, -0.5, 0.25]]);

    let tape = Tape::new();
    let f = net.bind_params(&tape);
    let t = gradient(&f, tape.input(x.clone()))?;
    let loss = (t * tape.constant(c.clone())).sum();
    let grads = grad_params(loss, &vars(&f))?;
    println!("tape nodes {}", tape.len());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, name) in hotet::params::names(&net, "f").iter().enumerate() {
        let len = leaves(&net)[k].len();
        let mut num = Vec::with_capacity(len);
        for i in 0..len {
            let mut plus = net.clone();
            let mut minus = net.clone();
            hotet::params::leaves_mut(&mut plus)[k].data_mut()[i] += h;
            hotet::params::leaves_mut(&mut minus)[k].data_mut()[i] -= h;
            num.push((objective(&plus, &x, &c) - objective(&minus, &x, &c)) / (2.0 * h));
        }
        let num = Tensor::new(1, len, num)?;
        let ana = grads[k].reshape(1, len)?;
        let err = ana.max_abs_diff(&num) / ana.norm().max(num.norm()).max(1e-300);
        worst = worst.max(err);
        println!("{name:>16}  |grad| {:9.4}  rel err {err:.2e}", ana.norm());
    }
    println!("worst {worst:.2e}");
    Ok(())
}
