//! Input-convex potential networks.
//!
//! A network with hidden widths `w₁..w_{L−1}` computes
//!
//! ```text
//! z₁   = softplus(W₀ x + b₀)
//! zₗ₊₁ = softplus(Aₗ zₗ + Wₗ x + bₗ)
//! f(x) = A_L z_L + W_L x + b_L + ½‖(I + Q) x‖²
//! ```
//!
//! with every `Aₗ ≥ 0`. Softplus is convex, non-decreasing and smooth, so `f`
//! is convex in `x` and can be differentiated twice. The quadratic term makes
//! an all-zero network the identity map `∇f(x) = x`; `Q` lets the quadratic
//! part contract or stretch space without losing convexity.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{grad_input, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{join, ParamTree};

/// Layer widths of an ICNN. The output layer always has width 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcnnSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

/// One reshaped block of generated parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// z-path weights, which must stay nonnegative.
    pub nonneg: bool,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl IcnnSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "ICNN dims must be positive (input {input_dim}, hidden {hidden:?})"
            )));
        }
        Ok(Self { input_dim, hidden })
    }

    /// Two hidden layers of width `max(64, 2d)`.
    pub fn for_dim(d: usize) -> Self {
        let w = (2 * d).max(64);
        Self {
            input_dim: d,
            hidden: vec![w, w],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    fn out_width(&self, layer: usize) -> usize {
        self.hidden.get(layer).copied().unwrap_or(1)
    }

    /// Parameter blocks in canonical order.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let d = self.input_dim;
        let mut out = Vec::new();
        for k in 0..self.num_layers() {
            let w = self.out_width(k);
            if k > 0 {
                out.push(ParamGroup {
                    name: format!("layer{k}.z_weight"),
                    rows: w,
                    cols: self.hidden[k - 1],
                    nonneg: true,
                });
            }
            out.push(ParamGroup {
                name: format!("layer{k}.x_weight"),
                rows: w,
                cols: d,
                nonneg: false,
            });
            out.push(ParamGroup {
                name: format!("layer{k}.bias"),
                rows: 1,
                cols: w,
                nonneg: false,
            });
        }
        out.push(ParamGroup {
            name: "quad".into(),
            rows: d,
            cols: d,
            nonneg: false,
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.groups().iter().map(ParamGroup::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcnnLayer<T> {
    /// `Aₗ`, absent on the first layer.
    pub z_weight: Option<T>,
    /// `Wₗ`, `out × d`.
    pub x_weight: T,
    /// `bₗ`, `1 × out`.
    pub bias: T,
}

/// Weights of an ICNN, generic over the leaf type.
#[derive(Clone, Debug, PartialEq)]
pub struct Icnn<T> {
    spec: IcnnSpec,
    pub layers: Vec<IcnnLayer<T>>,
    /// `Q`, `d × d`.
    pub quad: T,
}

/// Stored ICNN weights (`θ` or `ω`).
pub type IcnnParams = Icnn<Tensor>;

impl<T> Icnn<T> {
    pub fn spec(&self) -> &IcnnSpec {
        &self.spec
    }

    /// Assembles weights from blocks listed in [`IcnnSpec::groups`] order.
    pub fn from_groups(spec: IcnnSpec, blocks: Vec<T>) -> Self {
        assert_eq!(blocks.len(), spec.groups().len(), "ICNN block count");
        let mut it = blocks.into_iter();
        let mut layers = Vec::with_capacity(spec.num_layers());
        for k in 0..spec.num_layers() {
            let z_weight = if k > 0 { it.next() } else { None };
            let x_weight = it.next().unwrap();
            let bias = it.next().unwrap();
            layers.push(IcnnLayer {
                z_weight,
                x_weight,
                bias,
            });
        }
        let quad = it.next().unwrap();
        Self { spec, layers, quad }
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Icnn<U> {
        Icnn {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| IcnnLayer {
                    z_weight: l.z_weight.as_ref().map(&mut *f),
                    x_weight: f(&l.x_weight),
                    bias: f(&l.bias),
                })
                .collect(),
            quad: f(&self.quad),
        }
    }
}

impl<T> ParamTree<T> for Icnn<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        for (k, l) in self.layers.iter().enumerate() {
            if let Some(a) = &l.z_weight {
                f(join(prefix, &format!("layer{k}.z_weight")), a);
            }
            f(join(prefix, &format!("layer{k}.x_weight")), &l.x_weight);
            f(join(prefix, &format!("layer{k}.bias")), &l.bias);
        }
        f(join(prefix, "quad"), &self.quad);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T)) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            if let Some(a) = &mut l.z_weight {
                f(join(prefix, &format!("layer{k}.z_weight")), a);
            }
            f(join(prefix, &format!("layer{k}.x_weight")), &mut l.x_weight);
            f(join(prefix, &format!("layer{k}.bias")), &mut l.bias);
        }
        f(join(prefix, "quad"), &mut self.quad);
    }
}

/// Potential values `f(xᵢ)` for each row of `x`, as an `n × 1` node.
pub fn potential<'t>(net: &Icnn<Var<'t>>, x: Var<'t>) -> Var<'t> {
    let mut z: Option<Var<'t>> = None;
    let last = net.layers.len() - 1;
    for (k, layer) in net.layers.iter().enumerate() {
        let mut pre = x.matmul_t(layer.x_weight, false, true) + layer.bias;
        if let (Some(a), Some(prev)) = (layer.z_weight, z) {
            pre = pre + prev.matmul_t(a, false, true);
        }
        z = Some(if k == last { pre } else { pre.softplus() });
    }
    let lifted = x + x.matmul_t(net.quad, false, true);
    z.unwrap() + (lifted * lifted).sum_cols().scale(0.5)
}

/// `∇ₓ f` for each row of `x`, kept on the tape for further differentiation.
pub fn gradient<'t>(net: &Icnn<Var<'t>>, x: Var<'t>) -> Result<Var<'t>> {
    Ok(grad_input(potential(net, x).sum(), x)?)
}

impl IcnnParams {
    /// All-zero weights: the potential is `½‖x‖²` and the map is the identity.
    pub fn zeros(spec: &IcnnSpec) -> Self {
        let blocks = spec.groups().iter().map(|g| Tensor::zeros(g.rows, g.cols)).collect();
        Self::from_groups(spec.clone(), blocks)
    }

    /// Random weights with entries of standard deviation `scale / √fan_in`;
    /// z-path weights take absolute values.
    pub fn random<R: Rng + ?Sized>(spec: &IcnnSpec, rng: &mut R, scale: f64) -> Self {
        let blocks = spec
            .groups()
            .iter()
            .map(|g| {
                let sd = scale / (g.cols as f64).sqrt();
                let data = (0..g.len())
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(rng);
                        if g.nonneg {
                            (v * sd).abs()
                        } else {
                            v * sd
                        }
                    })
                    .collect();
                Tensor::from_raw(g.rows, g.cols, data)
            })
            .collect();
        Self::from_groups(spec.clone(), blocks)
    }

    /// Checks shapes against the spec and that every z-path weight is ≥ 0.
    pub fn validate(&self) -> Result<()> {
        let groups = self.spec.groups();
        let blocks = crate::params::leaves(self);
        if groups.len() != blocks.len() {
            return Err(Error::Shape("ICNN block count does not match spec".into()));
        }
        for (g, t) in groups.iter().zip(&blocks) {
            if t.shape() != [g.rows, g.cols] {
                return Err(Error::Shape(format!(
                    "{} is {:?}, spec wants [{}, {}]",
                    g.name,
                    t.shape(),
                    g.rows,
                    g.cols
                )));
            }
        }
        for (k, l) in self.layers.iter().enumerate() {
            if let Some(a) = &l.z_weight {
                if let Some((index, &value)) = a.data().iter().enumerate().find(|(_, v)| **v < 0.0) {
                    return Err(Error::NegativeWeight { layer: k, index, value });
                }
            }
        }
        Ok(())
    }

    /// Clamps every z-path weight at zero. Idempotent.
    pub fn project_nonneg(&self) -> Self {
        let mut out = self.clone();
        out.project_nonneg_in_place();
        out
    }

    pub fn project_nonneg_in_place(&mut self) {
        for l in &mut self.layers {
            if let Some(a) = &mut l.z_weight {
                for v in a.data_mut() {
                    *v = v.max(0.0);
                }
            }
        }
    }

    pub fn bind_constant<'t>(&self, tape: &'t Tape) -> Icnn<Var<'t>> {
        self.map(&mut |t| tape.constant(t.clone()))
    }

    pub fn bind_params<'t>(&self, tape: &'t Tape) -> Icnn<Var<'t>> {
        self.map(&mut |t| tape.param(t.clone()))
    }

    fn check_points(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "points have dimension {}, network expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        if !x.is_finite() {
            return Err(Error::Shape("points contain non-finite values".into()));
        }
        Ok(())
    }

    /// Potential values for each row of `x`, as `n × 1`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.validate()?;
        self.check_points(x)?;
        let tape = Tape::new();
        let net = self.bind_constant(&tape);
        let out = potential(&net, tape.input(x.clone()));
        tape.check_finite()?;
        Ok((*out.value()).clone())
    }

    pub fn forward_point(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(&Tensor::row(x))?.item())
    }

    /// The transport map `∇f` applied to each row of `x`.
    pub fn transport_map(&self, x: &Tensor) -> Result<Tensor> {
        self.validate()?;
        self.check_points(x)?;
        let tape = Tape::new();
        let net = self.bind_constant(&tape);
        let g = gradient(&net, tape.input(x.clone()))?;
        tape.check_finite()?;
        Ok((*g.value()).clone())
    }
}

/// Inverse map `∇g` of an inverse potential `g`, row-wise.
pub fn inverse_map(psi: &IcnnParams, y: &Tensor) -> Result<Tensor> {
    psi.transport_map(y)
}
