//! Hypernetworks mapping a context vector to a full set of ICNN weights.
//!
//! The trunk is an unconstrained ReLU MLP. Each ICNN parameter block has its
//! own linear output head; heads that feed z-path weights end in a ReLU so the
//! generated network is convex by construction.
//!
//! Every weight is drawn from `N(0, σ²)` with a small variance and each linear
//! map is applied as `x Wᵀ / √fan_in`. With zero head biases a fresh
//! hypernetwork therefore emits near-zero ICNN weights, and the generated
//! transport map starts out close to the identity.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::embedder::ContextVector;
use crate::error::{Error, Result};
use crate::icnn::{Icnn, IcnnParams, IcnnSpec};
use crate::params::{join, ParamTree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetSpec {
    pub ctx_dim: usize,
    pub hidden: Vec<usize>,
    pub target: IcnnSpec,
    /// Variance of the initial weights.
    pub init_variance: f64,
}

impl HypernetSpec {
    /// Two hidden layers of width 256, initial variance 0.1.
    pub fn new(ctx_dim: usize, target: IcnnSpec) -> Self {
        Self {
            ctx_dim,
            hidden: vec![256, 256],
            target,
            init_variance: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ctx_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("degenerate hypernetwork spec {self:?}")));
        }
        if !(self.init_variance >= 0.0) {
            return Err(Error::Config("init variance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    /// `out × in`.
    pub weight: T,
    /// `1 × out`.
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypernet<T> {
    spec: HypernetSpec,
    pub trunk: Vec<Dense<T>>,
    /// One head per block of [`IcnnSpec::groups`], same order.
    pub heads: Vec<Dense<T>>,
}

pub type HypernetParams = Hypernet<Tensor>;

impl<T> Hypernet<T> {
    pub fn spec(&self) -> &HypernetSpec {
        &self.spec
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Hypernet<U> {
        let mut dense = |d: &Dense<T>| Dense {
            weight: f(&d.weight),
            bias: f(&d.bias),
        };
        Hypernet {
            spec: self.spec.clone(),
            trunk: self.trunk.iter().map(&mut dense).collect(),
            heads: self.heads.iter().map(&mut dense).collect(),
        }
    }
}

impl<T> ParamTree<T> for Hypernet<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        for (i, d) in self.trunk.iter().enumerate() {
            f(join(prefix, &format!("trunk{i}.weight")), &d.weight);
            f(join(prefix, &format!("trunk{i}.bias")), &d.bias);
        }
        let groups = self.spec.target.groups();
        for (g, d) in groups.iter().zip(&self.heads) {
            f(join(prefix, &format!("head.{}.weight", g.name)), &d.weight);
            f(join(prefix, &format!("head.{}.bias", g.name)), &d.bias);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        for (i, d) in self.trunk.iter_mut().enumerate() {
            f(join(prefix, &format!("trunk{i}.weight")), &mut d.weight);
            f(join(prefix, &format!("trunk{i}.bias")), &mut d.bias);
        }
        let groups = self.spec.target.groups();
        for (g, d) in groups.iter().zip(self.heads.iter_mut()) {
            f(join(prefix, &format!("head.{}.weight", g.name)), &mut d.weight);
            f(join(prefix, &format!("head.{}.bias", g.name)), &mut d.bias);
        }
    }
}

fn scaled_dense<'t>(x: Var<'t>, d: &Dense<Var<'t>>) -> Var<'t> {
    let fan_in = d.weight.shape()[1] as f64;
    x.matmul_t(d.weight, false, true).scale(1.0 / fan_in.sqrt()) + d.bias
}

/// Generates ICNN weights from a `1 × d_ctx` context node.
pub fn generate<'t>(hyper: &Hypernet<Var<'t>>, z: Var<'t>) -> Icnn<Var<'t>> {
    let mut h = z;
    for d in &hyper.trunk {
        h = scaled_dense(h, d).relu();
    }
    let groups = hyper.spec.target.groups();
    let blocks = groups
        .iter()
        .zip(&hyper.heads)
        .map(|(g, head)| {
            let raw = scaled_dense(h, head).reshape(g.rows, g.cols);
            if g.nonneg {
                raw.relu()
            } else {
                raw
            }
        })
        .collect();
    Icnn::from_groups(hyper.spec.target.clone(), blocks)
}

impl HypernetParams {
    /// Weights i.i.d. `N(0, init_variance)`, all biases zero.
    pub fn init<R: Rng + ?Sized>(spec: &HypernetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let normal = Normal::new(0.0, spec.init_variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let mut draw = |rows: usize, cols: usize| Dense {
            weight: Tensor::from_raw(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect()),
            bias: Tensor::zeros(1, rows),
        };
        let mut trunk = Vec::with_capacity(spec.hidden.len());
        let mut width = spec.ctx_dim;
        for &w in &spec.hidden {
            trunk.push(draw(w, width));
            width = w;
        }
        let heads = spec.target.groups().iter().map(|g| draw(g.len(), width)).collect();
        Ok(Self {
            spec: spec.clone(),
            trunk,
            heads,
        })
    }

    /// Total head output length; equals the target's parameter count.
    pub fn output_len(&self) -> usize {
        self.heads.iter().map(|h| h.bias.cols()).sum()
    }

    pub fn bind_params<'t>(&self, tape: &'t Tape) -> Hypernet<Var<'t>> {
        self.map(&mut |t| tape.param(t.clone()))
    }

    pub fn bind_constant<'t>(&self, tape: &'t Tape) -> Hypernet<Var<'t>> {
        self.map(&mut |t| tape.constant(t.clone()))
    }

    /// ICNN weights for context `z`.
    pub fn generate(&self, z: &ContextVector) -> Result<IcnnParams> {
        if z.len() != self.spec.ctx_dim {
            return Err(Error::Shape(format!(
                "context has {} entries, hypernetwork expects {}",
                z.len(),
                self.spec.ctx_dim
            )));
        }
        if self.output_len() != self.spec.target.param_count() {
            return Err(Error::Shape("head sizes do not match the target ICNN".into()));
        }
        let tape = Tape::new();
        let hyper = self.bind_constant(&tape);
        let generated = generate(&hyper, tape.input(z.as_tensor()));
        tape.check_finite()?;
        Ok(generated.map(&mut |v| (*v.value()).clone()))
    }
}
