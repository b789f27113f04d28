//! Dual OT losses over paired minibatches, and a plain trainer for directly
//! parameterized potentials.
//!
//! * **MM-B** replaces the conjugate `f†(y) = maxₓ ⟨x, y⟩ − f(x)` by a maximum
//!   over the minibatch. The selected indices are treated as constants when
//!   differentiating.
//! * **MMv2** plays `min_f max_g  E_μ f(x) + E_ν [⟨∇g(y), y⟩ − f(∇g(y))]`,
//!   alternating several ascent steps on `g` with one descent step on `f`. It
//!   differentiates through `∇g`, so it needs second-order gradients.
//!
//! The forward map is `∇f` (μ → ν) and the inverse map is `∇g` (ν → μ).

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::diffcore::{grad_params, Adam, AdamConfig, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::icnn::{gradient, potential, Icnn, IcnnParams};
use crate::params::{leaves_mut, vars};
use crate::sampler::Sampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Mmb,
    Mmv2,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmb" | "mm-b" => Ok(Self::Mmb),
            "mmv2" => Ok(Self::Mmv2),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub batch_size: usize,
    /// Ascent steps on the inverse potential per descent step (MMv2 only).
    pub inner_iters: usize,
    pub lr: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Mmb,
            batch_size: 1024,
            inner_iters: 5,
            lr: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.inner_iters == 0 {
            return Err(Error::Config("inner iterations must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

fn check_pair(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "paired minibatches differ in size: {} vs {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "paired minibatches differ in dimension: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Shape("empty minibatch".into()));
    }
    Ok(())
}

/// `i(j) = argmaxᵢ ⟨xᵢ, yⱼ⟩ − potᵢ` for every `j`; ties go to the lowest `i`.
pub fn conjugate_argmax(x: &Tensor, potentials: &[f64], y: &Tensor) -> Vec<usize> {
    let inner = y.matmul_t(x, false, true);
    (0..y.rows())
        .map(|j| {
            let row = inner.row_slice(j);
            let mut best = 0;
            let mut best_val = row[0] - potentials[0];
            for (i, (&ip, &p)) in row.iter().zip(potentials).enumerate().skip(1) {
                let v = ip - p;
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            best
        })
        .collect()
}

/// `(1/b) Σⱼ f(xⱼ) − f(x_{i(j)})`.
fn mmb_half<'t>(f: &Icnn<Var<'t>>, x: &Tensor, y: &Tensor) -> Result<Var<'t>> {
    let tape = f.quad.tape();
    let fx = potential(f, tape.input(x.clone()));
    tape.check_finite()?;
    let idx = conjugate_argmax(x, fx.value().data(), y);
    Ok((fx - fx.gather_rows(&idx)).mean())
}

/// Forward part of the symmetrized MM-B loss.
pub fn mmb_forward_loss<'t>(f: &Icnn<Var<'t>>, x: &Tensor, y: &Tensor) -> Result<Var<'t>> {
    check_pair(x, y)?;
    mmb_half(f, x, y)
}

/// Inverse part of the symmetrized MM-B loss: the same form with the roles
/// of the batches exchanged.
pub fn mmb_inverse_loss<'t>(g: &Icnn<Var<'t>>, x: &Tensor, y: &Tensor) -> Result<Var<'t>> {
    check_pair(x, y)?;
    mmb_half(g, y, x)
}

/// Symmetrized MM-B loss `L(θ, ω)`.
pub fn mmb_loss<'t>(f: &Icnn<Var<'t>>, g: &Icnn<Var<'t>>, x: &Tensor, y: &Tensor) -> Result<Var<'t>> {
    Ok(mmb_forward_loss(f, x, y)? + mmb_inverse_loss(g, x, y)?)
}

fn detached<'t>(net: &Icnn<Var<'t>>) -> Icnn<Var<'t>> {
    net.map(&mut |v| v.detach())
}

/// MMv2 inner objective (to maximize over `g`):
/// `(1/b) Σ ⟨∇g(yᵢ), yᵢ⟩ − f(∇g(yᵢ))`. `f` is frozen.
pub fn mmv2_inner_loss<'t>(g: &Icnn<Var<'t>>, f: &Icnn<Var<'t>>, y: &Tensor) -> Result<Var<'t>> {
    if y.rows() == 0 {
        return Err(Error::Shape("empty minibatch".into()));
    }
    let tape = g.quad.tape();
    let yv = tape.input(y.clone());
    let pushed = gradient(g, yv)?;
    let f = detached(f);
    let loss = ((pushed * yv).sum_cols() - potential(&f, pushed)).mean();
    tape.check_finite()?;
    Ok(loss)
}

/// MMv2 outer objective (to minimize over `f`):
/// `(1/b) Σ f(xᵢ) − f(∇g(yᵢ))`. `g` is frozen.
pub fn mmv2_outer_loss<'t>(f: &Icnn<Var<'t>>, g: &Icnn<Var<'t>>, x: &Tensor, y: &Tensor) -> Result<Var<'t>> {
    check_pair(x, y)?;
    let tape = f.quad.tape();
    let g = detached(g);
    let pushed = gradient(&g, tape.input(y.clone()))?.detach();
    let loss = potential(f, tape.input(x.clone())).mean() - potential(f, pushed).mean();
    tape.check_finite()?;
    Ok(loss)
}

/// Minibatch estimate of `∫f dμ + ∫f† dν` with the conjugate taken over `x`.
pub fn dual_objective_estimate(f: &IcnnParams, x: &Tensor, y: &Tensor) -> Result<f64> {
    check_pair(x, y)?;
    let fx = f.forward(x)?;
    let idx = conjugate_argmax(x, fx.data(), y);
    let b = x.rows() as f64;
    let mut total = fx.sum() / b;
    for (j, &i) in idx.iter().enumerate() {
        let ip: f64 = x.row_slice(i).iter().zip(y.row_slice(j)).map(|(a, c)| a * c).sum();
        total += (ip - fx.get(i, 0)) / b;
    }
    Ok(total)
}

/// Numeric value of the symmetrized MM-B loss.
pub fn mmb_loss_value(f: &IcnnParams, g: &IcnnParams, x: &Tensor, y: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    Ok(mmb_loss(&f.bind_constant(&tape), &g.bind_constant(&tape), x, y)?.item())
}

/// One line of a loss trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub pair: usize,
    pub loss_fwd: f64,
    pub loss_inv: f64,
}

/// A pair of potentials trained directly, without hypernetworks.
#[derive(Clone, Debug)]
pub struct RawSolver {
    pub f: IcnnParams,
    pub g: IcnnParams,
    cfg: SolverConfig,
    opt_f: Adam,
    opt_g: Adam,
}

fn step_params(net: &mut IcnnParams, opt: &mut Adam, grads: &[Tensor]) {
    opt.step(&mut leaves_mut(net), grads);
    net.project_nonneg_in_place();
}

fn diverged(iteration: usize, err: Error) -> Error {
    match err {
        Error::Diff(e) => Error::Divergence {
            iteration,
            detail: e.to_string(),
        },
        other => other,
    }
}

impl RawSolver {
    pub fn new(f: IcnnParams, g: IcnnParams, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        f.validate()?;
        g.validate()?;
        if f.spec() != g.spec() {
            return Err(Error::Shape("forward and inverse potentials differ in shape".into()));
        }
        Ok(Self {
            f,
            g,
            cfg,
            opt_f: Adam::new(cfg.adam()),
            opt_g: Adam::new(cfg.adam()),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// One training iteration on fresh minibatches from `mu` and `nu`.
    pub fn step(
        &mut self,
        mu: &dyn Sampler,
        nu: &dyn Sampler,
        rng: &mut dyn RngCore,
        iteration: usize,
    ) -> Result<TraceRecord> {
        let b = self.cfg.batch_size;
        let x = mu.sample(rng, b);
        let y = nu.sample(rng, b);
        let rec = match self.cfg.kind {
            SolverKind::Mmb => {
                let tape = Tape::new();
                let f = self.f.bind_params(&tape);
                let g = self.g.bind_params(&tape);
                let lf = mmb_forward_loss(&f, &x, &y)?;
                let lg = mmb_inverse_loss(&g, &x, &y)?;
                let fv = vars(&f);
                let gv = vars(&g);
                let gf = grad_params(lf, &fv).map_err(|e| diverged(iteration, e.into()))?;
                let gg = grad_params(lg, &gv).map_err(|e| diverged(iteration, e.into()))?;
                step_params(&mut self.f, &mut self.opt_f, &gf);
                step_params(&mut self.g, &mut self.opt_g, &gg);
                TraceRecord {
                    iteration,
                    pair: 0,
                    loss_fwd: lf.item(),
                    loss_inv: lg.item(),
                }
            }
            SolverKind::Mmv2 => {
                let mut inner = 0.0;
                for k in 0..self.cfg.inner_iters {
                    let yk = if k == 0 { y.clone() } else { nu.sample(rng, b) };
                    let tape = Tape::new();
                    let g = self.g.bind_params(&tape);
                    let f = self.f.bind_constant(&tape);
                    let l = mmv2_inner_loss(&g, &f, &yk).map_err(|e| diverged(iteration, e))?;
                    let gv = vars(&g);
                    let grads = grad_params(-l, &gv).map_err(|e| diverged(iteration, e.into()))?;
                    step_params(&mut self.g, &mut self.opt_g, &grads);
                    inner = l.item();
                }
                let tape = Tape::new();
                let f = self.f.bind_params(&tape);
                let g = self.g.bind_constant(&tape);
                let l = mmv2_outer_loss(&f, &g, &x, &y).map_err(|e| diverged(iteration, e))?;
                let fv = vars(&f);
                let grads = grad_params(l, &fv).map_err(|e| diverged(iteration, e.into()))?;
                step_params(&mut self.f, &mut self.opt_f, &grads);
                TraceRecord {
                    iteration,
                    pair: 0,
                    loss_fwd: l.item(),
                    loss_inv: inner,
                }
            }
        };
        if !rec.loss_fwd.is_finite() || !rec.loss_inv.is_finite() {
            return Err(Error::Divergence {
                iteration,
                detail: "non-finite loss".into(),
            });
        }
        Ok(rec)
    }

    /// Runs `iterations` steps and returns the loss trace.
    pub fn train(
        &mut self,
        mu: &dyn Sampler,
        nu: &dyn Sampler,
        rng: &mut dyn RngCore,
        iterations: usize,
    ) -> Result<Vec<TraceRecord>> {
        (0..iterations).map(|t| self.step(mu, nu, rng, t)).collect()
    }
}
