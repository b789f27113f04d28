//! Named parameter collections.
//!
//! Network weights are stored in structures generic over their leaf type:
//! `Tensor` for stored values, [`Var`] once bound to a tape. `ParamTree`
//! walks the leaves in a fixed order with stable names, which is what the
//! optimizer and the checkpoint format rely on.

use crate::diffcore::{Tape, Tensor, Var};

pub trait ParamTree<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut T));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Leaves of `tree` in visiting order.
pub fn leaves<'a, T, P: ParamTree<T> + ?Sized>(tree: &'a P) -> Vec<&'a T> {
    let mut out = Vec::new();
    tree.visit("", &mut |_, t| out.push(t));
    out
}

pub fn leaves_mut<'a, T, P: ParamTree<T> + ?Sized>(tree: &'a mut P) -> Vec<&'a mut T> {
    let mut out = Vec::new();
    tree.visit_mut("", &mut |_, t| out.push(t));
    out
}

pub fn names<T, P: ParamTree<T> + ?Sized>(tree: &P, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    tree.visit(prefix, &mut |n, _| out.push(n));
    out
}

pub fn count<P: ParamTree<Tensor> + ?Sized>(tree: &P) -> usize {
    leaves(tree).iter().map(|t| t.len()).sum()
}

/// Squared L2 distance between two trees with identical layout.
pub fn distance_sq<P: ParamTree<Tensor> + ?Sized>(a: &P, b: &P) -> f64 {
    leaves(a)
        .iter()
        .zip(leaves(b))
        .map(|(x, y)| {
            x.data()
                .iter()
                .zip(y.data())
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
        })
        .sum()
}

/// Binds every leaf of `tree` as a trainable parameter on `tape`.
pub fn bind_params<'t>(tape: &'t Tape, tensors: &[&Tensor]) -> Vec<Var<'t>> {
    tensors.iter().map(|t| tape.param((*t).clone())).collect()
}

/// Tape handles of a bound tree, in visiting order.
pub fn vars<'t, P: ParamTree<Var<'t>> + ?Sized>(tree: &P) -> Vec<Var<'t>> {
    leaves(tree).into_iter().copied().collect()
}
