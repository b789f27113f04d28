//! Differentiation engine.
//!
//! A [`Tape`] records matrix operations on [`Tensor`] values. Gradients are
//! built as new tape nodes, so a gradient can be used inside a loss and
//! differentiated again.

mod optim;
mod tape;
mod tensor;

pub use optim::{Adam, AdamConfig};
pub use tape::{LeafKind, Tape, Var};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::{sigmoid, softplus};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("gradient requested of a non-scalar output of shape {0:?}")]
    NonScalar([usize; 2]),
    #[error("variable does not belong to this tape")]
    NotOnTape,
}

/// Gradient of the scalar `output` with respect to the input `x`.
///
/// The result stays on the tape, so it can be differentiated further.
pub fn grad_input<'t>(output: Var<'t>, x: Var<'t>) -> Result<Var<'t>, DiffError> {
    Ok(output.tape().grad(output, &[x])?[0])
}

/// Numeric gradients of the scalar `loss` with respect to `params`.
pub fn grad_params<'t>(loss: Var<'t>, params: &[Var<'t>]) -> Result<Vec<Tensor>, DiffError> {
    let tape = loss.tape();
    let grads = tape.grad(loss, params)?;
    tape.check_finite()?;
    Ok(grads.iter().map(|g| (*g.value()).clone()).collect())
}
