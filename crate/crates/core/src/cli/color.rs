//! PNG images as color distributions in `[0, 1]³`.

use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageReader};
use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bench::TransportMap;
use crate::diffcore::Tensor;
use crate::embedder::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Rows pushed through a map at once.
const CHUNK: usize = 8192;

#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// `(width·height) × 3`, row-major over pixels, channels R, G, B.
    pub pixels: Tensor,
}

pub fn decode_channel(v: u8) -> f64 {
    f64::from(v) / 255.0
}

/// Clamps to `[0, 1]` and rounds to 8 bits.
pub fn encode_channel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl RgbImage {
    pub fn from_rgb8(width: u32, height: u32, raw: &[u8]) -> Result<Self> {
        let n = width as usize * height as usize;
        if raw.len() != 3 * n || n == 0 {
            return Err(Error::Image(format!(
                "{} bytes do not make a {width}×{height} RGB image",
                raw.len()
            )));
        }
        let data = raw.iter().map(|&v| decode_channel(v)).collect();
        Ok(Self {
            width,
            height,
            pixels: Tensor::new(n, 3, data)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = ImageReader::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .with_guessed_format()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .decode()
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        Self::from_dynamic(img, path)
    }

    fn from_dynamic(img: DynamicImage, path: &Path) -> Result<Self> {
        match img.color() {
            ColorType::Rgb8 | ColorType::Rgb16 | ColorType::Rgb32F => {}
            ColorType::Rgba8 | ColorType::Rgba16 | ColorType::Rgba32F => {
                log::warn!("{}: dropping the alpha channel", path.display());
            }
            other => {
                return Err(Error::Image(format!(
                    "{}: expected 3 color channels, found {other:?}",
                    path.display()
                )))
            }
        }
        let rgb = img.to_rgb8();
        Self::from_rgb8(rgb.width(), rgb.height(), rgb.as_raw())
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.data().iter().map(|&v| encode_channel(v)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.to_rgb8())
            .ok_or_else(|| Error::Image("pixel buffer does not match the image size".into()))?;
        let mut bytes = Vec::new();
        DynamicImage::ImageRgb8(buf)
            .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        super::checkpoint::write_atomic(path, &bytes)
    }

    pub fn len(&self) -> usize {
        self.pixels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A procedural test image: soft regions colored from `palette` with
    /// shading and pixel noise, quantized to 8 bits.
    pub fn synthetic(width: u32, height: u32, palette: &[[f64; 3]], seed: u64) -> Result<Self> {
        if palette.is_empty() {
            return Err(Error::Image("empty palette".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<(f64, f64)> = palette.iter().map(|_| (rng.random(), rng.random())).collect();
        let mut raw = Vec::with_capacity(3 * width as usize * height as usize);
        for py in 0..height {
            for px in 0..width {
                let (u, v) = (f64::from(px) / f64::from(width), f64::from(py) / f64::from(height));
                let w: Vec<f64> = centers
                    .iter()
                    .map(|(cx, cy)| (-((u - cx).powi(2) + (v - cy).powi(2)) / 0.02).exp() + 1e-9)
                    .collect();
                let total: f64 = w.iter().sum();
                let shade = 0.85 + 0.3 * (3.0 * u + 2.0 * v).sin() * 0.5;
                for c in 0..3 {
                    let base: f64 = palette.iter().zip(&w).map(|(p, wi)| p[c] * wi).sum::<f64>() / total;
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    raw.push(encode_channel(base * shade + 0.04 * noise));
                }
            }
        }
        Self::from_rgb8(width, height, &raw)
    }

    /// Per-channel mean.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for r in 0..self.len() {
            for (c, v) in self.pixels.row_slice(r).iter().enumerate() {
                m[c] += v;
            }
        }
        m.map(|v| v / self.len() as f64)
    }
}

/// An image's pixels as a uniform distribution over at most `count` of them.
#[derive(Clone, Debug)]
pub struct ImageDistribution {
    pub source: PathBuf,
    pub image: RgbImage,
    pub samples: EmpiricalDistribution,
}

impl ImageDistribution {
    pub fn new(source: PathBuf, image: RgbImage, count: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let n = image.len();
        let idx: Vec<usize> = if count >= n {
            (0..n).collect()
        } else {
            let mut v = sample(rng, n, count).into_vec();
            v.sort_unstable();
            v
        };
        let samples = EmpiricalDistribution::uniform(image.pixels.gather_rows(&idx))?;
        Ok(Self { source, image, samples })
    }

    pub fn load(path: &Path, count: usize, rng: &mut dyn RngCore) -> Result<Self> {
        Self::new(path.to_path_buf(), RgbImage::load(path)?, count, rng)
    }
}

/// Applies `map` to every pixel and clamps the result into the color cube.
pub fn transfer(map: &dyn TransportMap, img: &RgbImage) -> Result<RgbImage> {
    let n = img.len();
    let mut out = Vec::with_capacity(3 * n);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let chunk = img.pixels.gather_rows(&(start..end).collect::<Vec<_>>());
        let moved = map.apply(&chunk)?;
        if moved.shape() != chunk.shape() {
            return Err(Error::Shape(format!("color map returned {:?}", moved.shape())));
        }
        if !moved.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                detail: "color map produced non-finite values".into(),
            });
        }
        out.extend(moved.data().iter().map(|v| v.clamp(0.0, 1.0)));
        start = end;
    }
    Ok(RgbImage {
        width: img.width,
        height: img.height,
        pixels: Tensor::new(n, 3, out)?,
    })
}
