//! Wengert tape with graph-building reverse mode.
//!
//! Every backward rule is itself expressed with tape operations, so the
//! gradient returned by [`Tape::grad`] is an ordinary [`Var`] that can be fed
//! into further computation and differentiated again. That is what lets a
//! loss contain `∇ₓ f(x)` and still be differentiated with respect to the
//! parameters of `f`.

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::ops;
use std::rc::Rc;

use super::tensor::{broadcast_shape, broadcast_to, sum_to, zip_broadcast, Tensor};
use super::DiffError;

/// What a leaf stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafKind {
    /// Trainable parameter.
    Param,
    /// Data the computation is a function of (points, samples).
    Input,
    /// Value that is never differentiated (masks, frozen statistics).
    Constant,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf(LeafKind),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    Exp(usize),
    Ln(usize),
    Powf(usize, f64),
    Softplus(usize),
    Sigmoid(usize),
    Relu(usize),
    Step(usize),
    SumTo(usize, [usize; 2]),
    BroadcastTo(usize, [usize; 2]),
    GatherRows(usize, Rc<[usize]>),
    ScatterRows(usize, Rc<[usize]>, usize),
    SliceCols(usize, usize, usize),
    PadCols(usize, usize, usize),
    Reshape(usize, [usize; 2]),
    Detach(usize),
}

impl Op {
    fn operands(&self) -> Vec<usize> {
        use Op::*;
        match *self {
            Leaf(_) => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul { a, b, .. } => vec![a, b],
            Neg(a)
            | Scale(a, _)
            | AddScalar(a, _)
            | Exp(a)
            | Ln(a)
            | Powf(a, _)
            | Softplus(a)
            | Sigmoid(a)
            | Relu(a)
            | Step(a)
            | SumTo(a, _)
            | BroadcastTo(a, _)
            | GatherRows(a, _)
            | ScatterRows(a, _, _)
            | SliceCols(a, _, _)
            | PadCols(a, _, _)
            | Reshape(a, _)
            | Detach(a) => vec![a],
        }
    }

    /// Whether the op carries a derivative back to its operands at all.
    fn passes_gradient(&self) -> bool {
        !matches!(self, Op::Leaf(_) | Op::Step(_) | Op::Detach(_))
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn compute(op: &Op, value: &dyn Fn(usize) -> Rc<Tensor>) -> Tensor {
    use Op::*;
    match op {
        Leaf(_) => unreachable!("leaves are bound, not computed"),
        Add(a, b) => zip_broadcast(&value(*a), &value(*b), |x, y| x + y),
        Sub(a, b) => zip_broadcast(&value(*a), &value(*b), |x, y| x - y),
        Mul(a, b) => zip_broadcast(&value(*a), &value(*b), |x, y| x * y),
        Neg(a) => value(*a).map(|x| -x),
        Scale(a, c) => value(*a).map(|x| c * x),
        AddScalar(a, c) => value(*a).map(|x| x + c),
        MatMul { a, b, ta, tb } => value(*a).matmul_t(&value(*b), *ta, *tb),
        Exp(a) => value(*a).map(f64::exp),
        Ln(a) => value(*a).map(f64::ln),
        Powf(a, c) => value(*a).map(|x| x.powf(*c)),
        Softplus(a) => value(*a).map(softplus),
        Sigmoid(a) => value(*a).map(sigmoid),
        Relu(a) => value(*a).map(|x| x.max(0.0)),
        Step(a) => value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 }),
        SumTo(a, s) => sum_to(&value(*a), *s),
        BroadcastTo(a, s) => broadcast_to(&value(*a), *s),
        GatherRows(a, idx) => value(*a).gather_rows(idx),
        ScatterRows(a, idx, n) => {
            let src = value(*a);
            let c = src.cols();
            let mut out = Tensor::zeros(*n, c);
            for (k, &i) in idx.iter().enumerate() {
                let row = src.row_slice(k);
                for (o, v) in out.data_mut()[i * c..(i + 1) * c].iter_mut().zip(row) {
                    *o += v;
                }
            }
            out
        }
        SliceCols(a, start, len) => {
            let src = value(*a);
            let mut data = Vec::with_capacity(src.rows() * len);
            for r in 0..src.rows() {
                data.extend_from_slice(&src.row_slice(r)[*start..start + len]);
            }
            Tensor::from_raw(src.rows(), *len, data)
        }
        PadCols(a, start, total) => {
            let src = value(*a);
            let len = src.cols();
            let mut out = Tensor::zeros(src.rows(), *total);
            for r in 0..src.rows() {
                out.data_mut()[r * total + start..r * total + start + len].copy_from_slice(src.row_slice(r));
            }
            out
        }
        Reshape(a, s) => {
            let src = value(*a);
            Tensor::from_raw(s[0], s[1], src.data().to_vec())
        }
        Detach(a) => (*value(*a)).clone(),
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Append-only record of a computation.
///
/// Nodes are stored in creation order, which is always a topological order.
/// A tape is meant to be built by one thread and dropped after the gradient
/// step that needed it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    poisoned: Cell<Option<usize>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.poisoned.get().is_none() && !value.is_finite() {
            self.poisoned.set(Some(id));
        }
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var { tape: self, id }
    }

    fn record(&self, op: Op) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            compute(&op, &|i| Rc::clone(&nodes[i].value))
        };
        self.push(value, op)
    }

    pub fn leaf(&self, value: Tensor, kind: LeafKind) -> Var<'_> {
        self.push(value, Op::Leaf(kind))
    }

    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, LeafKind::Param)
    }

    pub fn input(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, LeafKind::Input)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, LeafKind::Constant)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// The leaf kind of `v`, or `None` for computed nodes.
    pub fn leaf_kind(&self, v: Var<'_>) -> Option<LeafKind> {
        match self.nodes.borrow()[v.id].op {
            Op::Leaf(k) => Some(k),
            _ => None,
        }
    }

    /// Fails if any value recorded so far is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), DiffError> {
        match self.poisoned.get() {
            None => Ok(()),
            Some(id) => {
                let op = format!("{:?}", self.nodes.borrow()[id].op);
                Err(DiffError::NonFinite(format!(
                    "node {id} ({op}) produced a non-finite value"
                )))
            }
        }
    }

    fn owns(&self, v: Var<'_>) -> bool {
        std::ptr::eq(self, v.tape) && v.id < self.len()
    }

    /// Reverse-mode gradient of the scalar `output` with respect to `wrt`.
    ///
    /// The returned gradients are recorded on this tape, so they can appear
    /// in a later loss and be differentiated again. Variables that `output`
    /// does not depend on get an all-zero constant.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>, DiffError> {
        if !self.owns(output) || wrt.iter().any(|w| !self.owns(*w)) {
            return Err(DiffError::NotOnTape);
        }
        if output.shape() != [1, 1] {
            return Err(DiffError::NonScalar(output.shape()));
        }
        self.check_finite()?;

        let n = output.id + 1;
        let targets: HashSet<usize> = wrt.iter().map(|w| w.id).collect();
        let ops: Vec<Op> = self.nodes.borrow()[..n].iter().map(|nd| nd.op.clone()).collect();

        // Which nodes lie on a path from some `wrt` leaf.
        let mut needs = vec![false; n];
        for (i, op) in ops.iter().enumerate() {
            needs[i] = targets.contains(&i) || (op.passes_gradient() && op.operands().iter().any(|&o| needs[o]));
        }

        let mut adj: Vec<Option<Var<'t>>> = vec![None; n];
        adj[output.id] = Some(self.scalar(1.0));
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !needs[i] || !ops[i].passes_gradient() {
                continue;
            }
            let this = Var { tape: self, id: i };
            for (operand, contrib) in self.vjp(&ops[i], this, g, &needs) {
                adj[operand] = Some(match adj[operand] {
                    None => contrib,
                    Some(prev) => prev + contrib,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|w| match adj.get(w.id).copied().flatten() {
                Some(g) => g,
                None => {
                    let [r, c] = w.shape();
                    self.constant(Tensor::zeros(r, c))
                }
            })
            .collect())
    }

    /// Vector-Jacobian products of one node, for the operands that need them.
    fn vjp<'t>(&'t self, op: &Op, out: Var<'t>, g: Var<'t>, needs: &[bool]) -> Vec<(usize, Var<'t>)> {
        use Op::*;
        let v = |id| Var { tape: self, id };
        let mut res = Vec::with_capacity(2);
        let mut emit = |id: usize, f: &dyn Fn() -> Var<'t>| {
            if needs[id] {
                res.push((id, f()));
            }
        };
        match *op {
            Add(a, b) => {
                emit(a, &|| g.sum_to(v(a).shape()));
                emit(b, &|| g.sum_to(v(b).shape()));
            }
            Sub(a, b) => {
                emit(a, &|| g.sum_to(v(a).shape()));
                emit(b, &|| (-g).sum_to(v(b).shape()));
            }
            Mul(a, b) => {
                emit(a, &|| (g * v(b)).sum_to(v(a).shape()));
                emit(b, &|| (g * v(a)).sum_to(v(b).shape()));
            }
            Neg(a) => emit(a, &|| -g),
            Scale(a, c) => emit(a, &|| g.scale(c)),
            AddScalar(a, _) => emit(a, &|| g),
            MatMul { a, b, ta, tb } => {
                emit(a, &|| {
                    if ta {
                        v(b).matmul_t(g, tb, true)
                    } else {
                        g.matmul_t(v(b), false, !tb)
                    }
                });
                emit(b, &|| {
                    if tb {
                        g.matmul_t(v(a), true, ta)
                    } else {
                        v(a).matmul_t(g, !ta, false)
                    }
                });
            }
            Exp(a) => emit(a, &|| g * out),
            Ln(a) => emit(a, &|| g * v(a).powf(-1.0)),
            Powf(a, c) => emit(a, &|| {
                if c == 1.0 {
                    g
                } else {
                    g * v(a).powf(c - 1.0).scale(c)
                }
            }),
            Softplus(a) => emit(a, &|| g * v(a).sigmoid()),
            Sigmoid(a) => emit(a, &|| g * (out - out * out)),
            Relu(a) => emit(a, &|| g * v(a).step()),
            SumTo(a, _) => emit(a, &|| g.broadcast_to(v(a).shape())),
            BroadcastTo(a, _) => emit(a, &|| g.sum_to(v(a).shape())),
            GatherRows(a, ref idx) => {
                let rows = v(a).shape()[0];
                emit(a, &|| g.scatter_rows(idx, rows))
            }
            ScatterRows(a, ref idx, _) => emit(a, &|| g.gather_rows(idx)),
            SliceCols(a, start, _) => {
                let total = v(a).shape()[1];
                emit(a, &|| g.pad_cols(start, total))
            }
            PadCols(a, start, _) => {
                let len = v(a).shape()[1];
                emit(a, &|| g.slice_cols(start, len))
            }
            Reshape(a, _) => {
                let [r, c] = v(a).shape();
                emit(a, &|| g.reshape(r, c))
            }
            Leaf(_) | Step(_) | Detach(_) => {}
        }
        res
    }

    /// Re-evaluates `output` with some leaves rebound to new values.
    ///
    /// Unbound leaves keep their recorded values. Row selections recorded by
    /// gathers and scatters are replayed as recorded.
    pub fn eval(&self, output: Var<'_>, bindings: &[(Var<'_>, &Tensor)]) -> Result<Tensor, DiffError> {
        if !self.owns(output) || bindings.iter().any(|(l, _)| !self.owns(*l)) {
            return Err(DiffError::NotOnTape);
        }
        let nodes = self.nodes.borrow();
        let mut values: Vec<Rc<Tensor>> = Vec::with_capacity(output.id + 1);
        for (i, node) in nodes[..=output.id].iter().enumerate() {
            let value = match node.op {
                Op::Leaf(_) => match bindings.iter().find(|(l, _)| l.id == i) {
                    Some((_, t)) => {
                        if t.shape() != node.value.shape() {
                            return Err(DiffError::Shape(format!(
                                "leaf {i} bound to {:?}, recorded as {:?}",
                                t.shape(),
                                node.value.shape()
                            )));
                        }
                        Rc::new((*t).clone())
                    }
                    None => Rc::clone(&node.value),
                },
                ref op => {
                    let out = compute(op, &|j| Rc::clone(&values[j]));
                    if !out.is_finite() {
                        return Err(DiffError::NonFinite(format!(
                            "node {i} ({op:?}) produced a non-finite value on replay"
                        )));
                    }
                    Rc::new(out)
                }
            };
            values.push(value);
        }
        Ok((*values[output.id]).clone())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Value of a `1 × 1` node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: Op) -> Var<'t> {
        self.tape.record(op)
    }

    fn binary(self, other: Var<'t>, op: Op, name: &str) -> Var<'t> {
        assert!(std::ptr::eq(self.tape, other.tape), "{name} across tapes");
        assert!(
            broadcast_shape(self.shape(), other.shape()).is_some(),
            "{name}: cannot broadcast {:?} with {:?}",
            self.shape(),
            other.shape()
        );
        self.tape.record(op)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id, c))
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)`, where `op` transposes when the flag is set.
    pub fn matmul_t(self, other: Var<'t>, ta: bool, tb: bool) -> Var<'t> {
        assert!(std::ptr::eq(self.tape, other.tape), "matmul across tapes");
        let [ar, ac] = self.shape();
        let [br, bc] = other.shape();
        let k = if ta { ar } else { ac };
        let k2 = if tb { bc } else { br };
        assert_eq!(k, k2, "matmul: {:?} x {:?} (ta={ta}, tb={tb})", [ar, ac], [br, bc]);
        self.tape.record(Op::MatMul {
            a: self.id,
            b: other.id,
            ta,
            tb,
        })
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.id))
    }

    pub fn powf(self, c: f64) -> Var<'t> {
        self.unary(Op::Powf(self.id, c))
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id))
    }

    /// Heaviside step `1[x > 0]`; its derivative is taken to be zero.
    pub fn step(self) -> Var<'t> {
        self.unary(Op::Step(self.id))
    }

    /// Sum down to a broadcast-compatible `shape`.
    pub fn sum_to(self, shape: [usize; 2]) -> Var<'t> {
        if self.shape() == shape {
            return self;
        }
        self.unary(Op::SumTo(self.id, shape))
    }

    pub fn broadcast_to(self, shape: [usize; 2]) -> Var<'t> {
        if self.shape() == shape {
            return self;
        }
        assert!(
            broadcast_shape(self.shape(), shape) == Some(shape),
            "cannot broadcast {:?} to {shape:?}",
            self.shape()
        );
        self.unary(Op::BroadcastTo(self.id, shape))
    }

    /// Sum of all entries, as `1 × 1`.
    pub fn sum(self) -> Var<'t> {
        self.sum_to([1, 1])
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Column sums, as `1 × cols`.
    pub fn sum_rows(self) -> Var<'t> {
        let c = self.shape()[1];
        self.sum_to([1, c])
    }

    /// Row sums, as `rows × 1`.
    pub fn sum_cols(self) -> Var<'t> {
        let r = self.shape()[0];
        self.sum_to([r, 1])
    }

    pub fn gather_rows(self, idx: &[usize]) -> Var<'t> {
        let rows = self.shape()[0];
        assert!(idx.iter().all(|&i| i < rows), "gather index out of range");
        self.unary(Op::GatherRows(self.id, idx.into()))
    }

    /// Adds row `k` of `self` into row `idx[k]` of a zero `rows × cols` result.
    pub fn scatter_rows(self, idx: &[usize], rows: usize) -> Var<'t> {
        assert_eq!(idx.len(), self.shape()[0], "scatter index length");
        assert!(idx.iter().all(|&i| i < rows), "scatter index out of range");
        self.unary(Op::ScatterRows(self.id, idx.into(), rows))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        assert!(start + len <= self.shape()[1], "column slice out of range");
        self.unary(Op::SliceCols(self.id, start, len))
    }

    /// Places `self` at column `start` of a zero matrix with `total` columns.
    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        assert!(start + self.shape()[1] <= total, "column pad out of range");
        self.unary(Op::PadCols(self.id, start, total))
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t> {
        if self.shape() == [rows, cols] {
            return self;
        }
        let [r, c] = self.shape();
        assert_eq!(r * c, rows * cols, "reshape {:?} into [{rows}, {cols}]", [r, c]);
        self.unary(Op::Reshape(self.id, [rows, cols]))
    }

    /// Same value, but gradients stop here.
    pub fn detach(self) -> Var<'t> {
        self.unary(Op::Detach(self.id))
    }
}

impl<'t> ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Add(self.id, rhs.id), "add")
    }
}

impl<'t> ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Sub(self.id, rhs.id), "sub")
    }
}

impl<'t> ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, Op::Mul(self.id, rhs.id), "mul")
    }
}

impl<'t> ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.id))
    }
}
