//! HOTET training: an embedding network `ℰ` and two hypernetworks `ℱ`, `𝒢`
//! trained end to end through generated ICNN potentials.
//!
//! In pair mode the forward potential comes from `ℱ(ℰ(x))` and the inverse
//! one from `𝒢(ℰ(y))`. In multi mode both come from the embedding of the
//! source distribution, so the reference `ν` never needs to be embedded once
//! training is over.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{grad_params, Adam, AdamConfig, Tape, Tensor, Var};
use crate::embedder::{embed_points, EmpiricalDistribution, Transformer, TransformerParams, TransformerSpec};
use crate::error::{Error, Result};
use crate::hypernet::{generate, Hypernet, HypernetParams, HypernetSpec};
use crate::icnn::{IcnnParams, IcnnSpec};
use crate::params::{join, leaves_mut, vars, ParamTree};
use crate::sampler::Sampler;
use crate::solvers::{
    mmb_forward_loss, mmb_inverse_loss, mmv2_inner_loss, mmv2_outer_loss, SolverConfig, SolverKind, TraceRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Pair,
    Multi,
    /// Multi mode with the embedding replaced by a constant context.
    Ablation,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pair" => Ok(Self::Pair),
            "multi" => Ok(Self::Multi),
            "ablation" => Ok(Self::Ablation),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Distributions per iteration (multi mode).
    pub dist_batch: usize,
    /// Points per minibatch.
    pub batch_size: usize,
    /// Minibatch points passed to the embedding network.
    pub embed_points: usize,
    pub lr: f64,
    pub seed: u64,
    pub solver: SolverKind,
    pub inner_iters: usize,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            dist_batch: 8,
            batch_size: 1024,
            embed_points: 256,
            lr: 1e-3,
            seed: 0,
            solver: SolverKind::Mmb,
            inner_iters: 5,
            mode: TrainMode::Pair,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dist_batch == 0 || self.batch_size == 0 || self.embed_points == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        self.solver_config().validate()
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            kind: self.solver,
            batch_size: self.batch_size,
            inner_iters: self.inner_iters,
            lr: self.lr,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Shapes of every component of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub icnn: IcnnSpec,
    pub transformer: TransformerSpec,
    pub hyper_hidden: Vec<usize>,
    pub init_variance: f64,
}

impl ModelSpec {
    pub fn for_dim(d: usize) -> Self {
        Self {
            icnn: IcnnSpec::for_dim(d),
            transformer: TransformerSpec::for_dim(d),
            hyper_hidden: vec![256, 256],
            init_variance: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.icnn.input_dim
    }

    pub fn hypernet(&self) -> HypernetSpec {
        HypernetSpec {
            ctx_dim: self.transformer.ctx_dim,
            hidden: self.hyper_hidden.clone(),
            target: self.icnn.clone(),
            init_variance: self.init_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.icnn.input_dim != self.transformer.input_dim {
            return Err(Error::Config(format!(
                "ICNN is {}-d but the embedder reads {}-d points",
                self.icnn.input_dim, self.transformer.input_dim
            )));
        }
        self.transformer.validate()?;
        self.hypernet().validate()
    }
}

/// Where the hypernetworks get their context from.
#[derive(Clone, Debug, PartialEq)]
pub enum Context<T> {
    Embedder(Transformer<T>),
    /// A single trainable `1 × d_ctx` vector, shared by every distribution.
    Constant(T),
}

impl<T> Context<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Context<U> {
        match self {
            Context::Embedder(w) => Context::Embedder(w.map(f)),
            Context::Constant(c) => Context::Constant(f(c)),
        }
    }
}

impl<T> ParamTree<T> for Context<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        match self {
            Context::Embedder(w) => w.visit(&join(prefix, "embedder"), f),
            Context::Constant(c) => f(join(prefix, "context"), c),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        match self {
            Context::Embedder(w) => w.visit_mut(&join(prefix, "embedder"), f),
            Context::Constant(c) => f(join(prefix, "context"), c),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hotet<T> {
    spec: ModelSpec,
    pub context: Context<T>,
    pub hyper_fwd: Hypernet<T>,
    pub hyper_inv: Hypernet<T>,
    /// How the model was last trained, if at all.
    pub trained: Option<TrainMode>,
}

pub type HotetModel = Hotet<Tensor>;

impl<T> Hotet<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Hotet<U> {
        Hotet {
            spec: self.spec.clone(),
            context: self.context.map(f),
            hyper_fwd: self.hyper_fwd.map(f),
            hyper_inv: self.hyper_inv.map(f),
            trained: self.trained,
        }
    }

    pub fn is_ablated(&self) -> bool {
        matches!(self.context, Context::Constant(_))
    }
}

impl<T> ParamTree<T> for Hotet<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.context.visit(prefix, f);
        self.hyper_fwd.visit(&join(prefix, "hyper_fwd"), f);
        self.hyper_inv.visit(&join(prefix, "hyper_inv"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        self.context.visit_mut(prefix, f);
        self.hyper_fwd.visit_mut(&join(prefix, "hyper_fwd"), f);
        self.hyper_inv.visit_mut(&join(prefix, "hyper_inv"), f);
    }
}

/// Context node for a weighted point set.
pub fn context_of<'t>(m: &Hotet<Var<'t>>, points: &Tensor, weights: &[f64]) -> Result<Var<'t>> {
    match &m.context {
        Context::Embedder(w) => embed_points(w, points, weights),
        Context::Constant(c) => Ok(*c),
    }
}

/// Forward and inverse potentials generated for one distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MapPair {
    pub forward: IcnnParams,
    pub inverse: IcnnParams,
}

impl HotetModel {
    /// Fresh model; every random draw comes from `seed`.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedder = TransformerParams::init(&spec.transformer, &mut rng)?;
        let hyper = spec.hypernet();
        let hyper_fwd = HypernetParams::init(&hyper, &mut rng)?;
        let hyper_inv = HypernetParams::init(&hyper, &mut rng)?;
        Ok(Self {
            spec: spec.clone(),
            context: Context::Embedder(embedder),
            hyper_fwd,
            hyper_inv,
            trained: None,
        })
    }

    /// Reassembles a model from stored parts.
    pub fn from_parts(
        spec: ModelSpec,
        context: Context<Tensor>,
        hyper_fwd: HypernetParams,
        hyper_inv: HypernetParams,
        trained: Option<TrainMode>,
    ) -> Result<Self> {
        spec.validate()?;
        if hyper_fwd.spec() != &spec.hypernet() || hyper_inv.spec() != &spec.hypernet() {
            return Err(Error::Shape("hypernetworks do not match the model spec".into()));
        }
        match &context {
            Context::Embedder(w) if w.spec() != &spec.transformer => {
                return Err(Error::Shape("embedder does not match the model spec".into()))
            }
            Context::Constant(c) if c.shape() != [1, spec.transformer.ctx_dim] => {
                return Err(Error::Shape(format!("constant context has shape {:?}", c.shape())))
            }
            _ => {}
        }
        Ok(Self {
            spec,
            context,
            hyper_fwd,
            hyper_inv,
            trained,
        })
    }

    pub fn bind_params<'t>(&self, tape: &'t Tape) -> Hotet<Var<'t>> {
        self.map(&mut |t| tape.param(t.clone()))
    }

    pub fn bind_constant<'t>(&self, tape: &'t Tape) -> Hotet<Var<'t>> {
        self.map(&mut |t| tape.constant(t.clone()))
    }

    fn check_dim(&self, dist: &EmpiricalDistribution) -> Result<()> {
        if dist.dim() != self.spec.dim() {
            return Err(Error::Shape(format!(
                "distribution is {}-d, model is {}-d",
                dist.dim(),
                self.spec.dim()
            )));
        }
        Ok(())
    }

    /// Context vector of `dist`, thinned to at most `max_points` atoms.
    pub fn context(&self, dist: &EmpiricalDistribution, max_points: usize) -> Result<Tensor> {
        self.check_dim(dist)?;
        let dist = dist.thinned(max_points)?;
        let tape = Tape::new();
        let m = self.bind_constant(&tape);
        let z = context_of(&m, dist.points(), dist.weights())?;
        tape.check_finite()?;
        Ok((*z.value()).clone())
    }

    fn generate_from(&self, hyper: &HypernetParams, ctx: &Tensor) -> Result<IcnnParams> {
        let tape = Tape::new();
        let h = hyper.bind_constant(&tape);
        let net = generate(&h, tape.input(ctx.clone()));
        tape.check_finite()?;
        Ok(net.map(&mut |v| (*v.value()).clone()))
    }

    /// Forward potential `ℱ(ℰ(μ))`.
    pub fn forward_potential(&self, mu: &EmpiricalDistribution, max_points: usize) -> Result<IcnnParams> {
        self.generate_from(&self.hyper_fwd, &self.context(mu, max_points)?)
    }

    /// Inverse potential `𝒢(ℰ(dist))`.
    pub fn inverse_potential(&self, dist: &EmpiricalDistribution, max_points: usize) -> Result<IcnnParams> {
        self.generate_from(&self.hyper_inv, &self.context(dist, max_points)?)
    }

    /// Maps for a pair-mode model: `ℱ(ℰ(μ))` and `𝒢(ℰ(ν))`.
    pub fn pair_maps(
        &self,
        mu: &EmpiricalDistribution,
        nu: &EmpiricalDistribution,
        max_points: usize,
    ) -> Result<MapPair> {
        Ok(MapPair {
            forward: self.forward_potential(mu, max_points)?,
            inverse: self.inverse_potential(nu, max_points)?,
        })
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        crate::params::count(self)
    }
}

/// Zero-shot maps between `μ_new` and the reference of a multi-trained model.
pub fn predict(model: &HotetModel, mu: &EmpiricalDistribution, max_points: usize) -> Result<MapPair> {
    match model.trained {
        Some(TrainMode::Multi | TrainMode::Ablation) => {}
        _ => return Err(Error::Config("prediction needs a model trained in multi mode".into())),
    }
    let ctx = model.context(mu, max_points)?;
    Ok(MapPair {
        forward: model.generate_from(&model.hyper_fwd, &ctx)?,
        inverse: model.generate_from(&model.hyper_inv, &ctx)?,
    })
}

/// Same model with `ℰ` replaced by a trainable constant context drawn from
/// `N(0, 1)` with `seed`.
pub fn ablate_embedding(model: &HotetModel, seed: u64) -> HotetModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.spec.transformer.ctx_dim;
    let data = (0..d)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        })
        .collect();
    let mut out = model.clone();
    out.context = Context::Constant(Tensor::from_raw(1, d, data));
    out
}

/// Batch aggregate `Σᵢ (L_fwd,i + L_inv,i) / (2B)`.
pub fn aggregate_loss(fwd: &[f64], inv: &[f64]) -> f64 {
    let b = fwd.len() as f64;
    fwd.iter().zip(inv).map(|(f, g)| (f + g) / (2.0 * b)).sum()
}

/// Trainer state: the model, one optimizer per component, the random
/// stream and the trace so far.
pub struct Trainer {
    pub model: HotetModel,
    cfg: TrainConfig,
    opt_ctx: Adam,
    opt_fwd: Adam,
    opt_inv: Adam,
    rng: ChaCha8Rng,
    iteration: usize,
    order: Vec<usize>,
    cursor: usize,
    trace: Vec<TraceRecord>,
}

/// The minibatches drawn for one source distribution in one iteration.
struct Draw {
    pair: usize,
    x: Tensor,
    y: Tensor,
    /// Points fed to `ℰ` for the forward side.
    ex: Tensor,
    /// Points fed to `ℰ` for the inverse side.
    ey: Tensor,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn head(t: &Tensor, k: usize) -> Tensor {
    if t.rows() <= k {
        t.clone()
    } else {
        t.gather_rows(&(0..k).collect::<Vec<_>>())
    }
}

fn diverged(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Diff(d) => Error::Divergence {
            iteration,
            detail: d.to_string(),
        },
        other => other,
    }
}

fn update(params: Vec<&mut Tensor>, opt: &mut Adam, grads: &[Tensor]) {
    let mut params = params;
    opt.step(&mut params, grads);
}

impl Trainer {
    pub fn new(model: HotetModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode == TrainMode::Ablation && !model.is_ablated() {
            return Err(Error::Config("ablation mode needs an ablated model".into()));
        }
        Ok(Self {
            opt_ctx: Adam::new(cfg.adam()),
            opt_fwd: Adam::new(cfg.adam()),
            opt_inv: Adam::new(cfg.adam()),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            model,
            cfg,
            iteration: 0,
            order: Vec::new(),
            cursor: 0,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn into_parts(self) -> (HotetModel, Vec<TraceRecord>) {
        (self.model, self.trace)
    }

    /// Next `B` source indices, without replacement within an epoch.
    fn next_sources(&mut self, n: usize) -> Vec<usize> {
        let want = self.cfg.dist_batch.min(n);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            if self.cursor >= self.order.len() {
                self.order = (0..n).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let i = self.order[self.cursor];
            self.cursor += 1;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }

    fn check(&self, sources: &[&dyn Sampler], nu: &dyn Sampler) -> Result<()> {
        let d = self.model.spec.dim();
        if sources.is_empty() {
            return Err(Error::Config("at least one source distribution is required".into()));
        }
        if sources.iter().any(|s| s.dim() != d) || nu.dim() != d {
            return Err(Error::Shape(format!("all distributions must be {d}-d")));
        }
        Ok(())
    }

    /// One pair-mode iteration.
    pub fn step_pair(&mut self, mu: &dyn Sampler, nu: &dyn Sampler) -> Result<TraceRecord> {
        self.check(&[mu], nu)?;
        let b = self.cfg.batch_size;
        let x = mu.sample(&mut self.rng, b);
        let y = nu.sample(&mut self.rng, b);
        let k = self.cfg.embed_points;
        let draw = Draw {
            pair: 0,
            ex: head(&x, k),
            ey: head(&y, k),
            x,
            y,
        };
        let rec = self.run(vec![draw], nu)?;
        Ok(rec[0])
    }

    /// One multi-mode iteration over a batch of sources.
    pub fn step_multi(&mut self, sources: &[&dyn Sampler], nu: &dyn Sampler) -> Result<Vec<TraceRecord>> {
        self.check(sources, nu)?;
        let picked = self.next_sources(sources.len());
        let b = self.cfg.batch_size;
        let k = self.cfg.embed_points;
        let draws = picked
            .into_iter()
            .map(|i| {
                let x = sources[i].sample(&mut self.rng, b);
                let y = nu.sample(&mut self.rng, b);
                let ex = head(&x, k);
                Draw {
                    pair: i,
                    ey: ex.clone(),
                    ex,
                    x,
                    y,
                }
            })
            .collect();
        self.run(draws, nu)
    }

    fn run(&mut self, draws: Vec<Draw>, nu: &dyn Sampler) -> Result<Vec<TraceRecord>> {
        let it = self.iteration;
        let recs = match self.cfg.solver {
            SolverKind::Mmb => self.mmb_step(&draws),
            SolverKind::Mmv2 => self.mmv2_step(&draws, nu),
        }
        .map_err(diverged(it))?;
        self.iteration += 1;
        for r in &recs {
            if !r.loss_fwd.is_finite() || !r.loss_inv.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    detail: "non-finite loss".into(),
                });
            }
        }
        self.trace.extend_from_slice(&recs);
        Ok(recs)
    }

    fn apply(&mut self, grads: Vec<Tensor>, ctx: bool, fwd: bool, inv: bool) {
        let mut grads = grads.into_iter();
        let mut take = |n: usize| -> Vec<Tensor> { grads.by_ref().take(n).collect() };
        if ctx {
            let p = leaves_mut(&mut self.model.context);
            let g = take(p.len());
            update(p, &mut self.opt_ctx, &g);
        }
        if fwd {
            let p = leaves_mut(&mut self.model.hyper_fwd);
            let g = take(p.len());
            update(p, &mut self.opt_fwd, &g);
        }
        if inv {
            let p = leaves_mut(&mut self.model.hyper_inv);
            let g = take(p.len());
            update(p, &mut self.opt_inv, &g);
        }
    }

    fn mmb_step(&mut self, draws: &[Draw]) -> Result<Vec<TraceRecord>> {
        let tape = Tape::new();
        let m = self.model.bind_params(&tape);
        let scale = 1.0 / (2.0 * draws.len() as f64);
        let mut total: Option<Var> = None;
        let mut recs = Vec::with_capacity(draws.len());
        for d in draws {
            let zx = context_of(&m, &d.ex, &uniform(d.ex.rows()))?;
            let zy = if d.ex.bitwise_eq(&d.ey) {
                zx
            } else {
                context_of(&m, &d.ey, &uniform(d.ey.rows()))?
            };
            let f = generate(&m.hyper_fwd, zx);
            let g = generate(&m.hyper_inv, zy);
            let lf = mmb_forward_loss(&f, &d.x, &d.y)?;
            let lg = mmb_inverse_loss(&g, &d.x, &d.y)?;
            recs.push(TraceRecord {
                iteration: self.iteration,
                pair: d.pair,
                loss_fwd: lf.item(),
                loss_inv: lg.item(),
            });
            let term = (lf + lg).scale(scale);
            total = Some(match total {
                Some(t) => t + term,
                None => term,
            });
        }
        let params = vars(&m);
        let grads = grad_params(total.expect("at least one draw"), &params)?;
        self.apply(grads, true, true, true);
        Ok(recs)
    }

    fn mmv2_step(&mut self, draws: &[Draw], nu: &dyn Sampler) -> Result<Vec<TraceRecord>> {
        let nb = draws.len() as f64;
        // Contexts stay fixed while the inverse potentials ascend.
        let ctx_y: Vec<Tensor> = {
            let tape = Tape::new();
            let m = self.model.bind_constant(&tape);
            draws
                .iter()
                .map(|d| Ok((*context_of(&m, &d.ey, &uniform(d.ey.rows()))?.value()).clone()))
                .collect::<Result<_>>()?
        };
        let mut inner = vec![0.0; draws.len()];
        for k in 0..self.cfg.inner_iters {
            let tape = Tape::new();
            let fwd_const = self.model.hyper_fwd.bind_constant(&tape);
            let inv = self.model.hyper_inv.bind_params(&tape);
            let mut total: Option<Var> = None;
            for (i, d) in draws.iter().enumerate() {
                let y = if k == 0 {
                    d.y.clone()
                } else {
                    nu.sample(&mut self.rng, self.cfg.batch_size)
                };
                let z = tape.constant(ctx_y[i].clone());
                let g = generate(&inv, z);
                let f = generate(&fwd_const, z);
                let l = mmv2_inner_loss(&g, &f, &y)?;
                inner[i] = l.item();
                let term = l.scale(-1.0 / nb);
                total = Some(match total {
                    Some(t) => t + term,
                    None => term,
                });
            }
            let grads = grad_params(total.expect("at least one draw"), &vars(&inv))?;
            self.apply(grads, false, false, true);
        }
        let tape = Tape::new();
        let m = self.model.bind_params(&tape);
        let inv_const = self.model.hyper_inv.bind_constant(&tape);
        let mut total: Option<Var> = None;
        let mut recs = Vec::with_capacity(draws.len());
        for (i, d) in draws.iter().enumerate() {
            let zx = context_of(&m, &d.ex, &uniform(d.ex.rows()))?;
            let f = generate(&m.hyper_fwd, zx);
            let g = generate(&inv_const, tape.constant(ctx_y[i].clone()));
            let l = mmv2_outer_loss(&f, &g, &d.x, &d.y)?;
            recs.push(TraceRecord {
                iteration: self.iteration,
                pair: d.pair,
                loss_fwd: l.item(),
                loss_inv: inner[i],
            });
            let term = l.scale(1.0 / nb);
            total = Some(match total {
                Some(t) => t + term,
                None => term,
            });
        }
        let mut params = vars(&m.context);
        params.extend(vars(&m.hyper_fwd));
        let grads = grad_params(total.expect("at least one draw"), &params)?;
        self.apply(grads, true, true, false);
        Ok(recs)
    }
}

/// One-to-one training for `cfg.iterations` steps.
pub fn train_pair(
    model: HotetModel,
    mu: &dyn Sampler,
    nu: &dyn Sampler,
    cfg: &TrainConfig,
) -> Result<(HotetModel, Vec<TraceRecord>)> {
    let mut t = Trainer::new(model, cfg.clone())?;
    for _ in 0..cfg.iterations {
        t.step_pair(mu, nu)?;
    }
    if cfg.iterations > 0 {
        t.model.trained = Some(TrainMode::Pair);
    }
    Ok(t.into_parts())
}

/// Multiple-to-one training against the reference `nu`.
pub fn train_multi(
    model: HotetModel,
    sources: &[&dyn Sampler],
    nu: &dyn Sampler,
    cfg: &TrainConfig,
) -> Result<(HotetModel, Vec<TraceRecord>)> {
    let mode = if model.is_ablated() {
        TrainMode::Ablation
    } else {
        TrainMode::Multi
    };
    let cfg = TrainConfig { mode, ..cfg.clone() };
    let mut t = Trainer::new(model, cfg.clone())?;
    for _ in 0..cfg.iterations {
        t.step_multi(sources, nu)?;
    }
    if cfg.iterations > 0 {
        t.model.trained = Some(mode);
    }
    Ok(t.into_parts())
}

/// Default number of warm-up steps for [`finetune`].
pub const FINETUNE_STEPS: usize = 50;

/// `steps` multi-mode iterations on the single pair `(μ_new, ν)`.
pub fn finetune(
    model: HotetModel,
    mu: &dyn Sampler,
    nu: &dyn Sampler,
    steps: usize,
    cfg: &TrainConfig,
) -> Result<(HotetModel, Vec<TraceRecord>)> {
    let trained = model.trained;
    let cfg = TrainConfig {
        iterations: steps,
        dist_batch: 1,
        mode: if model.is_ablated() {
            TrainMode::Ablation
        } else {
            TrainMode::Multi
        },
        ..cfg.clone()
    };
    let mut t = Trainer::new(model, cfg)?;
    for _ in 0..steps {
        t.step_multi(&[mu], nu)?;
    }
    t.model.trained = trained;
    Ok(t.into_parts())
}

/// Convenience: `n` fresh points from a sampler as an empirical distribution.
pub fn empirical(s: &dyn Sampler, n: usize, rng: &mut dyn RngCore) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::uniform(s.sample(rng, n))
}
