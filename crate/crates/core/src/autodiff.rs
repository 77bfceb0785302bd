//! Minimal reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a `1×1` node walks the tape in reverse and returns the
//! gradient of that node with respect to every recorded node that depends on a
//! parameter leaf. The tape is meant to be rebuilt for each forward pass.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Single-row matrix.
    pub fn row(values: &[T]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `1×1` matrix.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self · other`. Each output row depends only on the matching input row,
    /// accumulated in a fixed order, so batched and single-row products agree
    /// bit for bit.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        T::gemm(n, k, m, &self.data, (k as isize, 1), &other.data, (m as isize, 1), &mut out);
        Self {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `self · otherᵀ`.
    fn matmul_bt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols);
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![T::zero(); n * m];
        T::gemm(n, k, m, &self.data, (k as isize, 1), &other.data, (1, k as isize), &mut out);
        Self {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `selfᵀ · other`.
    fn matmul_at(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); k * m];
        T::gemm(k, n, m, &self.data, (1, k as isize), &other.data, (m as isize, 1), &mut out);
        Self {
            rows: k,
            cols: m,
            data: out,
        }
    }

    /// Adds `bias` (a `1×cols` row) to every row.
    pub fn add_row_broadcast(&self, bias: &Self) -> Self {
        assert_eq!(bias.rows, 1);
        assert_eq!(bias.cols, self.cols);
        let mut out = self.clone();
        for r in 0..self.rows {
            for (o, &b) in out.data[r * self.cols..(r + 1) * self.cols]
                .iter_mut()
                .zip(&bias.data)
            {
                *o += b;
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn concat_cols(parts: &[&Self]) -> Self {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                assert_eq!(p.rows, rows, "concat_cols row count");
                data.extend_from_slice(p.row_slice(r));
            }
        }
        Self { rows, cols, data }
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.cols);
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row_slice(r)[start..end]);
        }
        Self {
            rows: self.rows,
            cols: width,
            data,
        }
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MulBroadcast(Var, Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, T, T),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    GroupSum(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`, or `None` when `v` does not influence the loss
    /// through any parameter path.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zeros of the given shape when absent.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix<T> {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

/// Operation recorder for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::ShapeMismatch {
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let out = av.matmul(bv);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a + bias` where `bias` is a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::ShapeMismatch {
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let out = av.add_row_broadcast(bv);
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(out, Op::AddRow(a, bias), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self
            .value(a)
            .zip_map(self.value(b), |x, y| if x <= y { x } else { y });
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Min(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x + c);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    /// Multiplies every element of `a` by the `1×1` node `s`.
    pub fn mul_broadcast(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                left: self.value(a).shape(),
                right: self.value(s).shape(),
            });
        }
        let sv = self.scalar_value(s);
        let out = self.value(a).map(|x| x * sv);
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(out, Op::MulBroadcast(a, s), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { T::zero() });
        let ng = self.ng(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        let ng = self.ng(a);
        self.push(out, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.exp());
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.ln());
        let ng = self.ng(a);
        self.push(out, Op::Ln(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let ng = self.ng(a);
        self.push(out, Op::Square(a), ng)
    }

    /// Stable `ln(1 + exp(a))`.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        let ng = self.ng(a);
        self.push(out, Op::Softplus(a), ng)
    }

    /// Hard clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let out = self.value(a).map(|x| x.max(lo).min(hi));
        let ng = self.ng(a);
        self.push(out, Op::Clamp(a, lo, hi), ng)
    }

    /// Sum of all elements, as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        let ng = self.ng(a);
        self.push(Matrix::scalar(s), Op::Sum(a), ng)
    }

    /// Mean of all elements, as a `1×1` node.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = T::from_usize(v.len().max(1)).unwrap();
        let s: T = v.data().iter().copied().sum();
        let ng = self.ng(a);
        self.push(Matrix::scalar(s / n), Op::Mean(a), ng)
    }

    /// Per-row sum: `n×m → n×1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data: Vec<T> = (0..v.rows())
            .map(|r| v.row_slice(r).iter().copied().sum())
            .collect();
        let out = Matrix {
            rows: v.rows(),
            cols: 1,
            data,
        };
        let ng = self.ng(a);
        self.push(out, Op::RowSum(a), ng)
    }

    /// Sums consecutive row groups. `offsets` has one more entry than there
    /// are groups; group `g` covers rows `offsets[g]..offsets[g + 1]`.
    pub fn group_sum(&mut self, a: Var, offsets: Vec<usize>) -> Result<Var> {
        let v = self.value(a);
        let valid = offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == v.rows()
            && offsets.windows(2).all(|w| w[0] <= w[1]);
        if !valid {
            return Err(Error::InvalidArgument(
                "group_sum offsets must partition the rows".into(),
            ));
        }
        let cols = v.cols();
        let groups = offsets.len() - 1;
        let mut data = vec![T::zero(); groups * cols];
        for g in 0..groups {
            for r in offsets[g]..offsets[g + 1] {
                for (o, &x) in data[g * cols..(g + 1) * cols]
                    .iter_mut()
                    .zip(v.row_slice(r))
                {
                    *o += x;
                }
            }
        }
        let out = Matrix {
            rows: groups,
            cols,
            data,
        };
        let ng = self.ng(a);
        Ok(self.push(out, Op::GroupSum(a, offsets), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::InvalidArgument(
                "concat_cols requires equal row counts".into(),
            ));
        }
        let mats: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::concat_cols(&mats);
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        if start > end || end > self.value(a).cols() {
            return Err(Error::InvalidArgument(format!(
                "column slice {start}..{end} out of range"
            )));
        }
        let out = self.value(a).slice_cols(start, end);
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start, end), ng))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if !node.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<T>>], v: Var, delta: Matrix<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Matrix<T>,
        g: &Matrix<T>,
        grads: &mut [Option<Matrix<T>>],
    ) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(a) {
                    self.accumulate(grads, a, g.matmul_bt(self.value(b)));
                }
                if self.ng(b) {
                    self.accumulate(grads, b, self.value(a).matmul_at(g));
                }
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, a, g.clone());
                if self.ng(bias) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in db.data.iter_mut().zip(g.row_slice(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(grads, bias, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.ng(a) {
                    self.accumulate(grads, a, g.zip_map(self.value(b), |x, y| x * y));
                }
                if self.ng(b) {
                    self.accumulate(grads, b, g.zip_map(self.value(a), |x, y| x * y));
                }
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let mut ga = Matrix::zeros(g.rows(), g.cols());
                let mut gb = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.len() {
                    if av.data[i] <= bv.data[i] {
                        ga.data[i] = g.data[i];
                    } else {
                        gb.data[i] = g.data[i];
                    }
                }
                self.accumulate(grads, a, ga);
                self.accumulate(grads, b, gb);
            }
            Op::Scale(a, c) => self.accumulate(grads, a, g.map(|x| x * c)),
            Op::AddScalar(a) => self.accumulate(grads, a, g.clone()),
            Op::MulBroadcast(a, s) => {
                let sv = self.scalar_value(s);
                if self.ng(a) {
                    self.accumulate(grads, a, g.map(|x| x * sv));
                }
                if self.ng(s) {
                    let ds: T = g
                        .data
                        .iter()
                        .zip(&self.value(a).data)
                        .map(|(&x, &y)| x * y)
                        .sum();
                    self.accumulate(grads, s, Matrix::scalar(ds));
                }
            }
            Op::Relu(a) => {
                let d = g.zip_map(self.value(a), |x, y| if y > T::zero() { x } else { T::zero() });
                self.accumulate(grads, a, d);
            }
            Op::Tanh(a) => {
                let d = g.zip_map(out, |x, y| x * (T::one() - y * y));
                self.accumulate(grads, a, d);
            }
            Op::Exp(a) => self.accumulate(grads, a, g.zip_map(out, |x, y| x * y)),
            Op::Ln(a) => {
                let d = g.zip_map(self.value(a), |x, y| x / y);
                self.accumulate(grads, a, d);
            }
            Op::Square(a) => {
                let two = T::one() + T::one();
                let d = g.zip_map(self.value(a), |x, y| two * x * y);
                self.accumulate(grads, a, d);
            }
            Op::Softplus(a) => {
                let d = g.zip_map(self.value(a), |x, y| x * sigmoid(y));
                self.accumulate(grads, a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let d = g.zip_map(self.value(a), |x, y| {
                    if y >= lo && y <= hi {
                        x
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, a, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(grads, a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(a).shape();
                let n = T::from_usize((r * c).max(1)).unwrap();
                self.accumulate(grads, a, Matrix::filled(r, c, g.item() / n));
            }
            Op::RowSum(a) => {
                let (r, c) = self.value(a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.data[i];
                    for x in &mut d.data[i * c..(i + 1) * c] {
                        *x = gi;
                    }
                }
                self.accumulate(grads, a, d);
            }
            Op::GroupSum(a, ref offsets) => {
                let (r, c) = self.value(a).shape();
                let mut d = Matrix::zeros(r, c);
                for gi in 0..offsets.len() - 1 {
                    let src = g.row_slice(gi);
                    for row in offsets[gi]..offsets[gi + 1] {
                        d.data[row * c..(row + 1) * c].copy_from_slice(src);
                    }
                }
                self.accumulate(grads, a, d);
            }
            Op::ConcatCols(ref parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.ng(p) {
                        self.accumulate(grads, p, g.slice_cols(start, start + w));
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                if self.ng(a) {
                    let (r, c) = self.value(a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d.data[i * c + start..i * c + end].copy_from_slice(g.row_slice(i));
                    }
                    self.accumulate(grads, a, d);
                }
            }
        }
    }
}
