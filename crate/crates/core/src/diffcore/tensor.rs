//! Dense row-major matrices of `f64`.
//!
//! Everything the networks in this crate need fits in two dimensions: a batch
//! of points is `n × d`, a bias is `1 × k`, a scalar is `1 × 1`.

use std::fmt;

use super::DiffError;

/// A dense row-major `rows × cols` matrix.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    /// Builds a tensor, checking that `data` has `rows * cols` finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        if data.len() != rows * cols {
            return Err(DiffError::Shape(format!(
                "{} values do not fill a {rows}x{cols} tensor",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite(format!(
                "entry {pos} of a {rows}x{cols} tensor is {}",
                data[pos]
            )));
        }
        Ok(Self {
            shape: [rows, cols],
            data,
        })
    }

    /// Unchecked constructor for internal kernels; length must already match.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            shape: [rows, cols],
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_raw(1, 1, vec![value])
    }

    /// A `1 × n` row vector.
    pub fn row(values: &[f64]) -> Self {
        Self::from_raw(1, values.len(), values.to_vec())
    }

    /// Builds a tensor from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::from_raw(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[r * c..(r + 1) * c]
    }

    /// The single value of a `1 × 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape, [1, 1], "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.shape[0], self.shape[1], self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn transpose(&self) -> Self {
        let [r, c] = self.shape;
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Self::from_raw(c, r, out)
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Self, DiffError> {
        if rows * cols != self.len() {
            return Err(DiffError::Shape(format!(
                "cannot reshape {:?} into [{rows}, {cols}]",
                self.shape
            )));
        }
        Ok(Self::from_raw(rows, cols, self.data.clone()))
    }

    /// Rows selected by `idx`, in order.
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let c = self.shape[1];
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(self.row_slice(i));
        }
        Self::from_raw(idx.len(), c, out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `op(self) · op(other)` where `op` optionally transposes.
    pub fn matmul_t(&self, other: &Tensor, ta: bool, tb: bool) -> Self {
        let [ar, ac] = self.shape;
        let [br, bc] = other.shape;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        assert_eq!(
            k,
            k2,
            "matmul inner dimensions differ: {:?}{} x {:?}{}",
            self.shape,
            if ta { "ᵀ" } else { "" },
            other.shape,
            if tb { "ᵀ" } else { "" }
        );
        let mut out = vec![0.0; m * n];
        if m > 0 && n > 0 && k > 0 {
            // Row-major strides, swapped for transposed operands.
            let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
            let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
            // SAFETY: pointers and strides describe the live buffers above,
            // and `out` is a fresh m×n row-major allocation.
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    k,
                    n,
                    1.0,
                    self.data.as_ptr(),
                    rsa,
                    csa,
                    other.data.as_ptr(),
                    rsb,
                    csb,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Self::from_raw(m, n, out)
    }

    pub fn matmul(&self, other: &Tensor) -> Self {
        self.matmul_t(other, false, false)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Byte-exact equality (distinguishes `0.0` from `-0.0`).
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Shape produced by broadcasting two operands, where each extent must match
/// or be 1.
pub(crate) fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> Option<[usize; 2]> {
    let dim = |x: usize, y: usize| {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    Some([dim(a[0], b[0])?, dim(a[1], b[1])?])
}

/// Elementwise combination with broadcasting.
pub(crate) fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let shape = broadcast_shape(a.shape, b.shape)
        .unwrap_or_else(|| panic!("cannot broadcast {:?} with {:?}", a.shape, b.shape));
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_raw(shape[0], shape[1], data);
    }
    let [r, c] = shape;
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if a.shape[0] == 1 { 0 } else { i };
        let ib = if b.shape[0] == 1 { 0 } else { i };
        for j in 0..c {
            let ja = if a.shape[1] == 1 { 0 } else { j };
            let jb = if b.shape[1] == 1 { 0 } else { j };
            data.push(f(a.get(ia, ja), b.get(ib, jb)));
        }
    }
    Tensor::from_raw(r, c, data)
}

/// Sums `t` down to `shape`, which must broadcast up to `t`'s shape.
pub(crate) fn sum_to(t: &Tensor, shape: [usize; 2]) -> Tensor {
    if t.shape == shape {
        return t.clone();
    }
    let [r, c] = t.shape;
    assert!(
        (shape[0] == r || shape[0] == 1) && (shape[1] == c || shape[1] == 1),
        "cannot sum {:?} down to {shape:?}",
        t.shape
    );
    let mut out = Tensor::zeros(shape[0], shape[1]);
    for i in 0..r {
        let oi = if shape[0] == 1 { 0 } else { i };
        for j in 0..c {
            let oj = if shape[1] == 1 { 0 } else { j };
            out.data[oi * shape[1] + oj] += t.data[i * c + j];
        }
    }
    out
}

pub(crate) fn broadcast_to(t: &Tensor, shape: [usize; 2]) -> Tensor {
    zip_broadcast(t, &Tensor::zeros(shape[0], shape[1]), |x, _| x)
}
