//! TOML run configuration. Every field has a default, so an empty file is a
//! valid configuration.
//!
//! ```toml
//! seed = 1
//!
//! [train]
//! iterations = 2000
//! batch_size = 256
//!
//! [model]
//! icnn_hidden = [32, 32]
//!
//! [benchmark]
//! dims = [2, 4]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::N_EVAL;
use crate::embedder::TransformerSpec;
use crate::error::{Error, Result};
use crate::icnn::IcnnSpec;
use crate::solvers::SolverKind;
use crate::trainer::{ModelSpec, TrainConfig, FINETUNE_STEPS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// ICNN hidden widths; `[max(64, 2d); 2]` when absent.
    pub icnn_hidden: Option<Vec<usize>>,
    pub blocks: Option<usize>,
    pub heads: Option<usize>,
    pub head_dim: Option<usize>,
    pub ffn_hidden: Option<usize>,
    pub ctx_dim: Option<usize>,
    pub hyper_hidden: Option<Vec<usize>>,
    pub init_variance: Option<f64>,
}

impl ModelConfig {
    pub fn spec(&self, d: usize) -> Result<ModelSpec> {
        let base = ModelSpec::for_dim(d);
        let t = TransformerSpec::for_dim(d);
        let spec = ModelSpec {
            icnn: match &self.icnn_hidden {
                Some(h) => IcnnSpec::new(d, h.clone())?,
                None => base.icnn,
            },
            transformer: TransformerSpec {
                input_dim: d,
                blocks: self.blocks.unwrap_or(t.blocks),
                heads: self.heads.unwrap_or(t.heads),
                head_dim: self.head_dim.unwrap_or(t.head_dim),
                ffn_hidden: self.ffn_hidden.unwrap_or(t.ffn_hidden),
                ctx_dim: self.ctx_dim.unwrap_or(t.ctx_dim),
            },
            hyper_hidden: self.hyper_hidden.clone().unwrap_or(base.hyper_hidden),
            init_variance: self.init_variance.unwrap_or(base.init_variance),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dims: Vec<usize>,
    /// Iterations for the raw MM-B baseline; the HOTET run uses `[train]`.
    pub baseline_iterations: usize,
    pub n_eval: usize,
    /// Also write an SVG of the loss traces.
    pub plot: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 4, 8, 16, 32, 64],
            baseline_iterations: 5000,
            n_eval: N_EVAL,
            plot: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiConfig {
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Atoms per distribution handed to the embedding at prediction time.
    pub points: usize,
    /// Solver for multiple-to-one training.
    pub solver: SolverKind,
}

impl Default for MultiConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n_train: 50,
            n_test: 10,
            points: 512,
            solver: SolverKind::Mmv2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorConfig {
    /// Pixels drawn from each image for training.
    pub subsample: usize,
    pub finetune_steps: usize,
}

impl Default for ColorConfig {
    fn default() -> Self {
        Self {
            subsample: 1 << 14,
            finetune_steps: FINETUNE_STEPS,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub benchmark: BenchmarkConfig,
    pub multi: MultiConfig,
    pub color: ColorConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Loads `path` when given, defaults otherwise; a `--seed` flag wins over
    /// the file.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed.or(cfg.seed) {
            cfg.seed = Some(s);
            cfg.train.seed = s;
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.benchmark.dims.is_empty() || self.benchmark.dims.contains(&0) {
            return Err(Error::Config("benchmark dims must be positive".into()));
        }
        if self.benchmark.n_eval == 0 || self.multi.points == 0 || self.color.subsample == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if self.multi.dim == 0 || self.multi.n_train == 0 {
            return Err(Error::Config(
                "multi mode needs d ≥ 1 and at least one training source".into(),
            ));
        }
        self.model.spec(self.multi.dim).map(|_| ())
    }
}
