//! Saves a briefly trained model and reloads it bit for bit.

use hotet::bench::pair_problem;
use hotet::cli::Checkpoint;
use hotet::icnn::IcnnSpec;
use hotet::trainer::{empirical, train_pair, HotetModel, ModelSpec, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hotet::Result<()> {
    let pair = pair_problem(2, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mu = empirical(&pair.source(), 2048, &mut rng)?;
    let nu = empirical(&pair.target(), 2048, &mut rng)?;
    let spec = ModelSpec {
        icnn: IcnnSpec::new(2, vec![16, 16])?,
        hyper_hidden: vec![32, 32],
        ..ModelSpec::for_dim(2)
    };
    let cfg = TrainConfig {
        iterations: 20,
        batch_size: 128,
        embed_points: 64,
        ..TrainConfig::default()
    };
    let (model, trace) = train_pair(HotetModel::init(&spec, 0)?, &mu, &nu, &cfg)?;
    println!(
        "{} steps, last loss {:+.4}",
        trace.len(),
        trace.last().map_or(0.0, |r| r.loss_fwd)
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    let ck = Checkpoint {
        model,
        config: Some(cfg),
        seed: 0,
    };
    ck.save(&path)?;
    let bytes = std::fs::read(&path)?;
    let header = bytes.split(|&b| b == b'\n').nth(1).unwrap_or_default();
    println!("{} bytes, header {} bytes", bytes.len(), header.len());
    let back = Checkpoint::load(&path)?;
    println!("identical after reload: {}", back == ck);
    println!("identical bytes: {}", back.to_bytes()? == bytes);
    Ok(())
}
