//! Set transformer that turns a weighted point cloud into a context vector.
//!
//! There is no positional encoding: attention over keys is symmetric in the
//! atoms, and the output is pooled with the atom weights, so the embedding is
//! a function of the distribution and not of how its atoms are listed.
//!
//! Atom weights enter attention as key weights. With `N` atoms of mass `mⱼ`,
//! each head computes `D⁻¹ exp(QKᵀ/√p) diag(N m) V`, where `D` normalizes the
//! rows. Uniform weights make `diag(N m)` the identity and recover ordinary
//! softmax attention. Atoms of mass zero are removed from the key set.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{join, ParamTree};

const LAYER_NORM_EPS: f64 = 1e-5;
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Weighted atoms in `ℝᵈ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    points: Tensor,
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(points: Tensor, weights: Vec<f64>) -> Result<Self> {
        let n = points.rows();
        if n == 0 || points.cols() == 0 {
            return Err(Error::Distribution(
                "needs at least one point of positive dimension".into(),
            ));
        }
        if weights.len() != n {
            return Err(Error::Distribution(format!("{} weights for {n} points", weights.len())));
        }
        if !points.is_finite() {
            return Err(Error::Distribution("non-finite coordinates".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Distribution(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::Distribution("all weights are zero".into()));
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Distribution(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    /// Equal mass `1/n` on each row of `points`.
    pub fn uniform(points: Tensor) -> Result<Self> {
        let n = points.rows();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// Like [`new`](Self::new), but rescales nonnegative weights to sum to 1.
    pub fn normalized(points: Tensor, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Distribution(format!("weights sum to {total}")));
        }
        Self::new(points, weights.iter().map(|w| w / total).collect())
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == self.weights[0])
    }

    /// `b` rows drawn with replacement according to the weights.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, b: usize) -> Tensor {
        let idx: Vec<usize> = if self.is_uniform() {
            (0..b).map(|_| rng.random_range(0..self.len())).collect()
        } else {
            let cdf: Vec<f64> = self
                .weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect();
            let total = *cdf.last().unwrap();
            (0..b)
                .map(|_| {
                    let u = rng.random::<f64>() * total;
                    cdf.partition_point(|&c| c <= u).min(self.len() - 1)
                })
                .collect()
        };
        self.points.gather_rows(&idx)
    }

    /// Weighted mean of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (i, w) in self.weights.iter().enumerate() {
            for (mj, x) in m.iter_mut().zip(self.points.row_slice(i)) {
                *mj += w * x;
            }
        }
        m
    }

    /// Reorders atoms: row `k` of the result is row `perm[k]` of `self`.
    /// At most `m` atoms chosen without regard to storage order: atoms are
    /// sorted lexicographically and taken at evenly spaced ranks, weights
    /// renormalized. Returns a copy when `m ≥ len`.
    pub fn thinned(&self, m: usize) -> Result<Self> {
        let n = self.len();
        if m == 0 {
            return Err(Error::Distribution("cannot thin to zero atoms".into()));
        }
        if m >= n {
            return Ok(self.clone());
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let pa = self.points.row_slice(a);
            let pb = self.points.row_slice(b);
            pa.iter()
                .zip(pb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| self.weights[a].total_cmp(&self.weights[b]))
        });
        let picked: Vec<usize> = (0..m).map(|k| order[(2 * k + 1) * n / (2 * m)]).collect();
        let points = self.points.gather_rows(&picked);
        let weights: Vec<f64> = picked.iter().map(|&i| self.weights[i]).collect();
        if weights.iter().all(|&w| w == 0.0) {
            return Self::uniform(points);
        }
        Self::normalized(points, weights)
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(
            self.points.gather_rows(perm),
            perm.iter().map(|&i| self.weights[i]).collect(),
        )
    }
}

/// Transformer widths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub input_dim: usize,
    pub blocks: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn_hidden: usize,
    pub ctx_dim: usize,
}

impl TransformerSpec {
    /// Three blocks, four heads of width 16, 128-dimensional context.
    pub fn for_dim(d: usize) -> Self {
        Self {
            input_dim: d,
            blocks: 3,
            heads: 4,
            head_dim: 16,
            ffn_hidden: 128,
            ctx_dim: 128,
        }
    }

    pub fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.blocks == 0
            || self.heads == 0
            || self.head_dim == 0
            || self.ffn_hidden == 0
            || self.ctx_dim == 0
        {
            return Err(Error::Config(format!("degenerate transformer spec {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub norm1_gain: T,
    pub norm1_bias: T,
    pub query: T,
    pub query_bias: T,
    pub key: T,
    pub key_bias: T,
    pub value: T,
    pub value_bias: T,
    pub out: T,
    pub out_bias: T,
    pub norm2_gain: T,
    pub norm2_bias: T,
    pub ffn_in: T,
    pub ffn_in_bias: T,
    /// Width `hd`, or `d_ctx` on the final block.
    pub ffn_out: T,
    pub ffn_out_bias: T,
}

impl<T> Block<T> {
    fn fields(&self) -> [(&'static str, &T); 16] {
        [
            ("norm1_gain", &self.norm1_gain),
            ("norm1_bias", &self.norm1_bias),
            ("query", &self.query),
            ("query_bias", &self.query_bias),
            ("key", &self.key),
            ("key_bias", &self.key_bias),
            ("value", &self.value),
            ("value_bias", &self.value_bias),
            ("out", &self.out),
            ("out_bias", &self.out_bias),
            ("norm2_gain", &self.norm2_gain),
            ("norm2_bias", &self.norm2_bias),
            ("ffn_in", &self.ffn_in),
            ("ffn_in_bias", &self.ffn_in_bias),
            ("ffn_out", &self.ffn_out),
            ("ffn_out_bias", &self.ffn_out_bias),
        ]
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut T); 16] {
        [
            ("norm1_gain", &mut self.norm1_gain),
            ("norm1_bias", &mut self.norm1_bias),
            ("query", &mut self.query),
            ("query_bias", &mut self.query_bias),
            ("key", &mut self.key),
            ("key_bias", &mut self.key_bias),
            ("value", &mut self.value),
            ("value_bias", &mut self.value_bias),
            ("out", &mut self.out),
            ("out_bias", &mut self.out_bias),
            ("norm2_gain", &mut self.norm2_gain),
            ("norm2_bias", &mut self.norm2_bias),
            ("ffn_in", &mut self.ffn_in),
            ("ffn_in_bias", &mut self.ffn_in_bias),
            ("ffn_out", &mut self.ffn_out),
            ("ffn_out_bias", &mut self.ffn_out_bias),
        ]
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Block<U> {
        Block {
            norm1_gain: f(&self.norm1_gain),
            norm1_bias: f(&self.norm1_bias),
            query: f(&self.query),
            query_bias: f(&self.query_bias),
            key: f(&self.key),
            key_bias: f(&self.key_bias),
            value: f(&self.value),
            value_bias: f(&self.value_bias),
            out: f(&self.out),
            out_bias: f(&self.out_bias),
            norm2_gain: f(&self.norm2_gain),
            norm2_bias: f(&self.norm2_bias),
            ffn_in: f(&self.ffn_in),
            ffn_in_bias: f(&self.ffn_in_bias),
            ffn_out: f(&self.ffn_out),
            ffn_out_bias: f(&self.ffn_out_bias),
        }
    }
}

/// Embedding network weights, generic over the leaf type.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformer<T> {
    spec: TransformerSpec,
    /// Affine lift `d → hd` applied before the first block.
    pub lift: T,
    pub lift_bias: T,
    pub blocks: Vec<Block<T>>,
}

pub type TransformerParams = Transformer<Tensor>;

impl<T> Transformer<T> {
    pub fn spec(&self) -> &TransformerSpec {
        &self.spec
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Transformer<U> {
        Transformer {
            spec: self.spec.clone(),
            lift: f(&self.lift),
            lift_bias: f(&self.lift_bias),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
        }
    }
}

impl<T> ParamTree<T> for Transformer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(join(prefix, "lift"), &self.lift);
        f(join(prefix, "lift_bias"), &self.lift_bias);
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in b.fields() {
                f(join(prefix, &format!("block{i}.{name}")), t);
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        f(join(prefix, "lift"), &mut self.lift);
        f(join(prefix, "lift_bias"), &mut self.lift_bias);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, t) in b.fields_mut() {
                f(join(prefix, &format!("block{i}.{name}")), t);
            }
        }
    }
}

/// Fixed-width summary of a distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextVector(pub Vec<f64>);

impl ContextVector {
    pub fn as_tensor(&self) -> Tensor {
        Tensor::row(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn linear_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let sd = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            sd * v
        })
        .collect::<Vec<f64>>();
    Tensor::from_raw(rows, cols, data)
}

impl TransformerParams {
    /// Linear layers drawn with variance `1/fan_in`, zero biases, unit norm
    /// gains.
    pub fn init<R: Rng + ?Sized>(spec: &TransformerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let hd = spec.model_dim();
        let mut blocks = Vec::with_capacity(spec.blocks);
        for i in 0..spec.blocks {
            let out = if i + 1 == spec.blocks { spec.ctx_dim } else { hd };
            blocks.push(Block {
                norm1_gain: Tensor::full(1, hd, 1.0),
                norm1_bias: Tensor::zeros(1, hd),
                query: linear_init(rng, hd, hd),
                query_bias: Tensor::zeros(1, hd),
                key: linear_init(rng, hd, hd),
                key_bias: Tensor::zeros(1, hd),
                value: linear_init(rng, hd, hd),
                value_bias: Tensor::zeros(1, hd),
                out: linear_init(rng, hd, hd),
                out_bias: Tensor::zeros(1, hd),
                norm2_gain: Tensor::full(1, hd, 1.0),
                norm2_bias: Tensor::zeros(1, hd),
                ffn_in: linear_init(rng, spec.ffn_hidden, hd),
                ffn_in_bias: Tensor::zeros(1, spec.ffn_hidden),
                ffn_out: linear_init(rng, out, spec.ffn_hidden),
                ffn_out_bias: Tensor::zeros(1, out),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            lift: linear_init(rng, hd, spec.input_dim),
            lift_bias: Tensor::zeros(1, hd),
            blocks,
        })
    }

    pub fn bind_params<'t>(&self, tape: &'t Tape) -> Transformer<Var<'t>> {
        self.map(&mut |t| tape.param(t.clone()))
    }

    pub fn bind_constant<'t>(&self, tape: &'t Tape) -> Transformer<Var<'t>> {
        self.map(&mut |t| tape.constant(t.clone()))
    }

    /// Context vector of `dist`.
    pub fn embed(&self, dist: &EmpiricalDistribution) -> Result<ContextVector> {
        let tape = Tape::new();
        let w = self.bind_constant(&tape);
        let z = embed(&w, dist)?;
        tape.check_finite()?;
        Ok(ContextVector(z.value().data().to_vec()))
    }
}

/// Attention key weights: indices of atoms with positive mass and their
/// factors `N mⱼ`.
pub struct KeyWeights {
    active: Vec<usize>,
    factors: Tensor,
}

impl KeyWeights {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(Error::Distribution(format!("negative or non-finite weight {w}")));
        }
        let n = weights.len() as f64;
        let active: Vec<usize> = (0..weights.len()).filter(|&j| weights[j] > 0.0).collect();
        if active.is_empty() {
            return Err(Error::Distribution("all weights are zero".into()));
        }
        let factors = Tensor::row(&active.iter().map(|&j| n * weights[j]).collect::<Vec<_>>());
        Ok(Self { active, factors })
    }
}

fn layer_norm<'t>(x: Var<'t>, gain: Var<'t>, bias: Var<'t>) -> Var<'t> {
    let width = x.shape()[1] as f64;
    let centered = x - x.sum_cols().scale(1.0 / width);
    let var = (centered * centered).sum_cols().scale(1.0 / width);
    centered * var.add_scalar(LAYER_NORM_EPS).powf(-0.5) * gain + bias
}

fn affine<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Var<'t> {
    x.matmul_t(w, false, true) + b
}

/// One head of weighted attention: `D⁻¹ exp(q kᵀ/√p) diag(N m) v` over the
/// active keys.
fn weighted_head<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>, keys: &KeyWeights) -> Var<'t> {
    let tape = q.tape();
    let p = q.shape()[1] as f64;
    let scores = q.matmul_t(k, false, true).scale(1.0 / p.sqrt());
    // Row maxima are a constant shift; softmax gradients do not see them.
    let s = scores.value();
    let maxima: Vec<f64> = (0..s.rows())
        .map(|r| s.row_slice(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shift = tape.constant(Tensor::from_raw(maxima.len(), 1, maxima));
    let kernel = (scores - shift).exp() * tape.constant(keys.factors.clone());
    kernel.matmul(v) * kernel.sum_cols().powf(-1.0)
}

/// One pre-norm block: weighted multi-head attention then the feed-forward
/// layer, each with a residual connection. The final block's feed-forward
/// output has width `d_ctx` and replaces the residual stream.
pub fn attention_block<'t>(block: &Block<Var<'t>>, heads: usize, x: Var<'t>, keys: &KeyWeights, last: bool) -> Var<'t> {
    let hd = x.shape()[1];
    let p = hd / heads;
    let u = layer_norm(x, block.norm1_gain, block.norm1_bias);
    let q = affine(u, block.query, block.query_bias);
    let k = affine(u, block.key, block.key_bias).gather_rows(&keys.active);
    let v = affine(u, block.value, block.value_bias).gather_rows(&keys.active);
    let mut concat: Option<Var<'t>> = None;
    for h in 0..heads {
        let head = weighted_head(
            q.slice_cols(h * p, p),
            k.slice_cols(h * p, p),
            v.slice_cols(h * p, p),
            keys,
        )
        .pad_cols(h * p, hd);
        concat = Some(match concat {
            None => head,
            Some(c) => c + head,
        });
    }
    let x = x + affine(concat.unwrap(), block.out, block.out_bias);
    let u = layer_norm(x, block.norm2_gain, block.norm2_bias);
    let ffn = affine(
        affine(u, block.ffn_in, block.ffn_in_bias).relu(),
        block.ffn_out,
        block.ffn_out_bias,
    );
    if last {
        ffn
    } else {
        x + ffn
    }
}

/// Embeds `dist` on the tape of `w`, returning a `1 × d_ctx` node.
pub fn embed<'t>(w: &Transformer<Var<'t>>, dist: &EmpiricalDistribution) -> Result<Var<'t>> {
    embed_points(w, dist.points(), dist.weights())
}

/// Like [`embed`], for raw points and weights (weights need not be
/// normalized, only nonnegative with positive total).
pub fn embed_points<'t>(w: &Transformer<Var<'t>>, points: &Tensor, weights: &[f64]) -> Result<Var<'t>> {
    let spec = w.spec();
    if points.cols() != spec.input_dim {
        return Err(Error::Shape(format!(
            "distribution has dimension {}, embedder expects {}",
            points.cols(),
            spec.input_dim
        )));
    }
    if weights.len() != points.rows() {
        return Err(Error::Distribution("one weight per point required".into()));
    }
    let keys = KeyWeights::new(weights)?;
    let tape = w.lift.tape();
    let mut h = affine(tape.input(points.clone()), w.lift, w.lift_bias);
    for (i, block) in w.blocks.iter().enumerate() {
        h = attention_block(block, spec.heads, h, &keys, i + 1 == w.blocks.len());
    }
    let total: f64 = weights.iter().sum();
    let pool = Tensor::row(&weights.iter().map(|m| m / total).collect::<Vec<_>>());
    Ok(tape.constant(pool).matmul(h))
}
