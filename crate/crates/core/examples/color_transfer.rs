//! Moves the palette of a warm synthetic image onto a cool one and writes
//! both PNGs plus the recolored result.
//!
//! ```text
//! cargo run --release --example color_transfer -- /tmp/colors 300
//! ```

use std::path::PathBuf;

use hotet::cli::{transfer, ImageDistribution, RgbImage};
use hotet::trainer::{train_pair, HotetModel, ModelSpec, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WARM: [[f64; 3]; 3] = [[0.9, 0.5, 0.2], [0.7, 0.3, 0.1], [0.95, 0.8, 0.4]];
const COOL: [[f64; 3]; 3] = [[0.1, 0.3, 0.7], [0.2, 0.6, 0.8], [0.05, 0.15, 0.4]];

fn main() -> hotet::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "color-out".into()));
    let iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    std::fs::create_dir_all(&dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let warm = RgbImage::synthetic(256, 256, &WARM, 1)?;
    let cool = RgbImage::synthetic(256, 256, &COOL, 2)?;
    warm.save(&dir.join("warm.png"))?;
    cool.save(&dir.join("cool.png"))?;
    let src = ImageDistribution::new(dir.join("warm.png"), warm, 1 << 14, &mut rng)?;
    let tgt = ImageDistribution::new(dir.join("cool.png"), cool, 1 << 14, &mut rng)?;

    let cfg = TrainConfig {
        iterations,
        batch_size: 512,
        embed_points: 128,
        ..TrainConfig::default()
    };
    let (model, _) = train_pair(
        HotetModel::init(&ModelSpec::for_dim(3), 0)?,
        &src.samples,
        &tgt.samples,
        &cfg,
    )?;
    let f = model.forward_potential(&src.samples, cfg.embed_points)?;
    let out = transfer(&f, &src.image)?;
    out.save(&dir.join("warm_to_cool.png"))?;

    let fmt = |m: [f64; 3]| format!("[{:.3} {:.3} {:.3}]", m[0], m[1], m[2]);
    println!("source mean  {}", fmt(src.image.mean()));
    println!("target mean  {}", fmt(tgt.image.mean()));
    println!("result mean  {}", fmt(out.mean()));
    println!("images in {}", dir.display());
    Ok(())
}
