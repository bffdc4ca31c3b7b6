use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{gemm_into, Real, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    MatMulT,
    Add,
    AddRow,
    Sub,
    Mul,
    Div,
    Scale,
    ScaleBy,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    Relu,
    Exp,
    Log,
    Abs,
    SoftmaxRows,
    SegmentSoftmax,
    SegmentNormalize,
    SegmentSum,
    Gather,
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    ScaleBy(usize, usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Abs(usize),
    SoftmaxRows(usize),
    SegmentSoftmax(usize, Arc<[usize]>),
    SegmentNormalize(usize, Arc<[usize]>, T),
    SegmentSum(usize, Arc<[usize]>),
    Gather(usize, Arc<[usize]>),
    Sum(usize),
    Mean(usize),
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatMulT(..) => OpKind::MatMulT,
            Op::Add(..) => OpKind::Add,
            Op::AddRow(..) => OpKind::AddRow,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Scale(..) => OpKind::Scale,
            Op::ScaleBy(..) => OpKind::ScaleBy,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::ConcatRows(..) => OpKind::ConcatRows,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::SliceRows(..) => OpKind::SliceRows,
            Op::Relu(..) => OpKind::Relu,
            Op::Exp(..) => OpKind::Exp,
            Op::Log(..) => OpKind::Log,
            Op::Abs(..) => OpKind::Abs,
            Op::SoftmaxRows(..) => OpKind::SoftmaxRows,
            Op::SegmentSoftmax(..) => OpKind::SegmentSoftmax,
            Op::SegmentNormalize(..) => OpKind::SegmentNormalize,
            Op::SegmentSum(..) => OpKind::SegmentSum,
            Op::Gather(..) => OpKind::Gather,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients of the leaves that required them, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when `v` did not reach the loss.
    pub fn get_or_zeros(&self, v: Var, shape: [usize; 2]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape[0], shape[1]))
    }
}

/// Records operations in execution order for reverse-mode differentiation.
///
/// Each tape is single-owner; values are immutable once recorded.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

fn mismatch(op: &'static str, a: &Tensor<impl Real>, b: &Tensor<impl Real>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

/// `[start, end)` row ranges of each run of equal ids.
fn segment_ranges(ids: &[usize], op: &'static str) -> Result<Vec<(usize, usize)>, TensorError> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=ids.len() {
        if i == ids.len() || ids[i] != ids[start] {
            if i < ids.len() && ids[i] < ids[start] {
                return Err(TensorError::UnsortedSegments(op));
            }
            out.push((start, i));
            start = i;
        }
    }
    Ok(out)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Negates the adjoint of every op of `kind`. Used to prove that the
    /// gradient checks catch a broken backward pass.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: Option<OpKind>) {
        self.fault = kind;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(TensorError::DetachedTensor);
        }
        Ok(v.idx)
    }

    fn node(&self, v: Var) -> Result<(usize, &Node<T>), TensorError> {
        let i = self.idx(v)?;
        Ok((i, &self.nodes[i]))
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>, TensorError> {
        Ok(&self.node(v)?.1.value)
    }

    pub fn shape(&self, v: Var) -> Result<[usize; 2], TensorError> {
        Ok(self.value(v)?.shape())
    }

    fn unary(&mut self, a: Var, op: impl FnOnce(usize) -> Op<T>, f: impl Fn(T) -> T) -> Result<Var, TensorError> {
        let (i, n) = self.node(a)?;
        let value = n.value.map(f);
        let needs = n.needs_grad;
        Ok(self.push(value, op(i), needs))
    }

    fn zip(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        op: impl FnOnce(usize, usize) -> Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let (j, nb) = self.node(b)?;
        if na.value.shape() != nb.value.shape() {
            return Err(mismatch(name, &na.value, &nb.value));
        }
        let data = na.value.data().iter().zip(nb.value.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(na.value.rows(), na.value.cols(), data)?;
        let needs = na.needs_grad || nb.needs_grad;
        Ok(self.push(value, op(i, j), needs))
    }

    /// `a · b` for `a: m×k`, `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let (j, nb) = self.node(b)?;
        if na.value.cols() != nb.value.rows() {
            return Err(mismatch("matmul", &na.value, &nb.value));
        }
        let mut out = Tensor::zeros(na.value.rows(), nb.value.cols());
        gemm_into(&na.value, false, &nb.value, false, T::zero(), out.data_mut());
        let needs = na.needs_grad || nb.needs_grad;
        Ok(self.push(out, Op::MatMul(i, j), needs))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let (j, nb) = self.node(b)?;
        if na.value.cols() != nb.value.cols() {
            return Err(mismatch("matmul_t", &na.value, &nb.value));
        }
        let mut out = Tensor::zeros(na.value.rows(), nb.value.rows());
        gemm_into(&na.value, false, &nb.value, true, T::zero(), out.data_mut());
        let needs = na.needs_grad || nb.needs_grad;
        Ok(self.push(out, Op::MatMulT(i, j), needs))
    }

    /// Elementwise sum; a `1×n` right operand is broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a)?;
        let sb = self.shape(b)?;
        if sa != sb && sb[0] == 1 && sb[1] == sa[1] {
            let (i, na) = self.node(a)?;
            let (j, nb) = self.node(b)?;
            let cols = sa[1];
            let mut out = na.value.clone();
            if cols > 0 {
                for row in out.data_mut().chunks_mut(cols) {
                    for (x, &y) in row.iter_mut().zip(nb.value.data()) {
                        *x += y;
                    }
                }
            }
            let needs = na.needs_grad || nb.needs_grad;
            return Ok(self.push(out, Op::AddRow(i, j), needs));
        }
        self.zip(a, b, "add", Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "sub", Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "mul", Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip(a, b, "div", Op::Div, |x, y| x / y)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, TensorError> {
        self.unary(a, |i| Op::Scale(i, c), |x| x * c)
    }

    /// Multiplies by the value of a `1×1` variable.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let (j, ns) = self.node(s)?;
        if ns.value.shape() != [1, 1] {
            return Err(mismatch("scale_by", &na.value, &ns.value));
        }
        let c = ns.value.item();
        let value = na.value.map(|x| x * c);
        let needs = na.needs_grad || ns.needs_grad;
        Ok(self.push(value, Op::ScaleBy(i, j), needs))
    }

    /// Concatenates along columns (the last axis).
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let idx = parts.iter().map(|&v| self.idx(v)).collect::<Result<Vec<_>, _>>()?;
        let first = &self.nodes[*idx.first().ok_or(TensorError::ShapeMismatch {
            op: "concat_cols",
            lhs: [0, 0],
            rhs: [0, 0],
        })?]
        .value;
        let rows = first.rows();
        for &i in &idx {
            if self.nodes[i].value.rows() != rows {
                return Err(mismatch("concat_cols", first, &self.nodes[i].value));
            }
        }
        let cols: usize = idx.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &idx {
                data.extend_from_slice(self.nodes[i].value.row_slice(r));
            }
        }
        let needs = idx.iter().any(|&i| self.nodes[i].needs_grad);
        let value = Tensor::new(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatCols(idx), needs))
    }

    /// Stacks along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let idx = parts.iter().map(|&v| self.idx(v)).collect::<Result<Vec<_>, _>>()?;
        let first = &self.nodes[*idx.first().ok_or(TensorError::ShapeMismatch {
            op: "concat_rows",
            lhs: [0, 0],
            rhs: [0, 0],
        })?]
        .value;
        let cols = first.cols();
        for &i in &idx {
            if self.nodes[i].value.cols() != cols {
                return Err(mismatch("concat_rows", first, &self.nodes[i].value));
            }
        }
        let mut data = Vec::new();
        for &i in &idx {
            data.extend_from_slice(self.nodes[i].value.data());
        }
        let rows = data.len().checked_div(cols).unwrap_or_else(|| idx.iter().map(|&i| self.nodes[i].value.rows()).sum());
        let needs = idx.iter().any(|&i| self.nodes[i].needs_grad);
        let value = Tensor::new(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(idx), needs))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        if start + len > na.value.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                lhs: na.value.shape(),
                rhs: [start, len],
            });
        }
        let mut data = Vec::with_capacity(na.value.rows() * len);
        for r in 0..na.value.rows() {
            data.extend_from_slice(&na.value.row_slice(r)[start..start + len]);
        }
        let value = Tensor::new(na.value.rows(), len, data)?;
        let needs = na.needs_grad;
        Ok(self.push(value, Op::SliceCols(i, start), needs))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        if start + len > na.value.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "slice_rows",
                lhs: na.value.shape(),
                rhs: [start, len],
            });
        }
        let cols = na.value.cols();
        let data = na.value.data()[start * cols..(start + len) * cols].to_vec();
        let value = Tensor::new(len, cols, data)?;
        let needs = na.needs_grad;
        Ok(self.push(value, Op::SliceRows(i, start), needs))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(a, Op::Relu, |x| x.max(T::zero()))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(a, Op::Exp, T::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(a, Op::Log, T::ln)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(a, Op::Abs, T::abs)
    }

    /// Softmax of each row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let mut value = na.value.clone();
        let cols = value.cols();
        if cols > 0 {
            for row in value.data_mut().chunks_mut(cols) {
                softmax_in_place(row, 1);
            }
        }
        let needs = na.needs_grad;
        Ok(self.push(value, Op::SoftmaxRows(i), needs))
    }

    /// Softmax down each column within runs of equal `segments` ids.
    /// Ids must be sorted so that each segment is contiguous.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<[usize]>) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        check_ids("segment_softmax", &segments, na.value.rows())?;
        let ranges = segment_ranges(&segments, "segment_softmax")?;
        let mut value = na.value.clone();
        let cols = value.cols();
        for (s, e) in ranges {
            for c in 0..cols {
                softmax_in_place(&mut value.data_mut()[s * cols + c..(e - 1) * cols + c + 1], cols);
            }
        }
        let needs = na.needs_grad;
        Ok(self.push(value, Op::SegmentSoftmax(i, segments), needs))
    }

    /// Divides each column by its sum within runs of equal `segments` ids.
    /// A sum smaller than `eps` in magnitude is replaced by `eps`.
    pub fn segment_normalize(&mut self, a: Var, segments: Arc<[usize]>, eps: T) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        check_ids("segment_normalize", &segments, na.value.rows())?;
        let ranges = segment_ranges(&segments, "segment_normalize")?;
        let mut value = na.value.clone();
        let cols = value.cols();
        for (s, e) in ranges {
            for c in 0..cols {
                let col = || (s..e).map(|r| r * cols + c);
                let total: T = col().map(|k| value.data()[k]).sum();
                let denom = guarded(total, eps);
                for k in col() {
                    value.data_mut()[k] = value.data()[k] / denom;
                }
            }
        }
        let needs = na.needs_grad;
        Ok(self.push(value, Op::SegmentNormalize(i, segments, eps), needs))
    }

    /// Scatter-add of row `r` into output row `segments[r]`; output has
    /// `num_segments` rows. Ids need not be sorted.
    pub fn segment_sum(&mut self, a: Var, segments: Arc<[usize]>, num_segments: usize) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        check_ids("segment_sum", &segments, na.value.rows())?;
        let cols = na.value.cols();
        let mut value = Tensor::zeros(num_segments, cols);
        for (r, &s) in segments.iter().enumerate() {
            if s >= num_segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    len: num_segments,
                });
            }
            let src = na.value.row_slice(r);
            for (x, &y) in value.data_mut()[s * cols..(s + 1) * cols].iter_mut().zip(src) {
                *x += y;
            }
        }
        let needs = na.needs_grad;
        Ok(self.push(value, Op::SegmentSum(i, segments), needs))
    }

    /// Row gather: output row `k` is row `indices[k]` of `a`.
    pub fn gather(&mut self, a: Var, indices: Arc<[usize]>) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let rows = na.value.rows();
        let cols = na.value.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &k in indices.iter() {
            if k >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: k,
                    len: rows,
                });
            }
            data.extend_from_slice(na.value.row_slice(k));
        }
        let value = Tensor::new(indices.len(), cols, data)?;
        let needs = na.needs_grad;
        Ok(self.push(value, Op::Gather(i, indices), needs))
    }

    /// Embedding lookup: a row gather from a table.
    pub fn embedding_lookup(&mut self, table: Var, indices: Arc<[usize]>) -> Result<Var, TensorError> {
        self.gather(table, indices)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let value = Tensor::scalar(na.value.data().iter().copied().sum());
        let needs = na.needs_grad;
        Ok(self.push(value, Op::Sum(i), needs))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let (i, na) = self.node(a)?;
        let n = T::from_usize(na.value.len().max(1)).unwrap();
        let value = Tensor::scalar(na.value.data().iter().copied().sum::<T>() / n);
        let needs = na.needs_grad;
        Ok(self.push(value, Op::Mean(i), needs))
    }

    /// Reverse sweep from a `1×1` loss, in exact reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let (l, nl) = self.node(loss)?;
        if nl.value.shape() != [1, 1] {
            return Err(TensorError::NotScalar(nl.value.shape()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; l + 1];
        grads[l] = Some(vec![T::one()]);
        let mut out: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for i in (0..=l).rev() {
            let Some(mut g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                out[i] = Some(Tensor::new(node.value.rows(), node.value.cols(), g)?);
                continue;
            }
            if self.fault == Some(node.op.kind()) {
                for x in &mut g {
                    *x = -*x;
                }
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(Gradients { tape: self.id, grads: out })
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |k: usize| &nodes[k].value;
        let wants = |k: usize| nodes[k].needs_grad;
        let out = &nodes[i].value;
        let cols = out.cols();
        let gt = |g: &[T]| Tensor::new(out.rows(), out.cols(), g.to_vec()).unwrap();

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let gm = gt(g);
                if wants(*a) {
                    gemm_into(&gm, false, val(*b), true, T::one(), slot(grads, *a, val(*a).len()));
                }
                if wants(*b) {
                    gemm_into(val(*a), true, &gm, false, T::one(), slot(grads, *b, val(*b).len()));
                }
            }
            Op::MatMulT(a, b) => {
                let gm = gt(g);
                if wants(*a) {
                    gemm_into(&gm, false, val(*b), false, T::one(), slot(grads, *a, val(*a).len()));
                }
                if wants(*b) {
                    gemm_into(&gm, true, val(*a), false, T::one(), slot(grads, *b, val(*b).len()));
                }
            }
            Op::Add(a, b) => {
                for k in [*a, *b] {
                    if wants(k) {
                        axpy(slot(grads, k, g.len()), g, T::one());
                    }
                }
            }
            Op::AddRow(a, b) => {
                if wants(*a) {
                    axpy(slot(grads, *a, g.len()), g, T::one());
                }
                if wants(*b) && cols > 0 {
                    let gb = slot(grads, *b, cols);
                    for row in g.chunks(cols) {
                        axpy(gb, row, T::one());
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    axpy(slot(grads, *a, g.len()), g, T::one());
                }
                if wants(*b) {
                    axpy(slot(grads, *b, g.len()), g, -T::one());
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let (ga, vb) = (slot(grads, *a, g.len()), val(*b).data());
                    for k in 0..g.len() {
                        ga[k] += g[k] * vb[k];
                    }
                }
                if wants(*b) {
                    let (gb, va) = (slot(grads, *b, g.len()), val(*a).data());
                    for k in 0..g.len() {
                        gb[k] += g[k] * va[k];
                    }
                }
            }
            Op::Div(a, b) => {
                let vb = val(*b).data();
                if wants(*a) {
                    let ga = slot(grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] / vb[k];
                    }
                }
                if wants(*b) {
                    let y = out.data();
                    let gb = slot(grads, *b, g.len());
                    for k in 0..g.len() {
                        gb[k] -= g[k] * y[k] / vb[k];
                    }
                }
            }
            Op::Scale(a, c) => axpy(slot(grads, *a, g.len()), g, *c),
            Op::ScaleBy(a, s) => {
                let va = val(*a).data();
                if wants(*a) {
                    axpy(slot(grads, *a, g.len()), g, val(*s).item());
                }
                if wants(*s) {
                    let d: T = g.iter().zip(va).map(|(&x, &y)| x * y).sum();
                    slot(grads, *s, 1)[0] += d;
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        let gp = slot(grads, p, val(p).len());
                        for r in 0..out.rows() {
                            axpy(&mut gp[r * w..(r + 1) * w], &g[r * cols + off..r * cols + off + w], T::one());
                        }
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    if wants(p) {
                        axpy(slot(grads, p, n), &g[off..off + n], T::one());
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let w = val(*a).cols();
                let ga = slot(grads, *a, val(*a).len());
                for r in 0..out.rows() {
                    axpy(&mut ga[r * w + start..r * w + start + cols], &g[r * cols..(r + 1) * cols], T::one());
                }
            }
            Op::SliceRows(a, start) => {
                let ga = slot(grads, *a, val(*a).len());
                axpy(&mut ga[start * cols..start * cols + g.len()], g, T::one());
            }
            Op::Relu(a) => {
                let (ga, va) = (slot(grads, *a, g.len()), val(*a).data());
                for k in 0..g.len() {
                    if va[k] > T::zero() {
                        ga[k] += g[k];
                    }
                }
            }
            Op::Exp(a) => {
                let (ga, y) = (slot(grads, *a, g.len()), out.data());
                for k in 0..g.len() {
                    ga[k] += g[k] * y[k];
                }
            }
            Op::Log(a) => {
                let (ga, va) = (slot(grads, *a, g.len()), val(*a).data());
                for k in 0..g.len() {
                    ga[k] += g[k] / va[k];
                }
            }
            Op::Abs(a) => {
                let (ga, va) = (slot(grads, *a, g.len()), val(*a).data());
                for k in 0..g.len() {
                    if va[k] > T::zero() {
                        ga[k] += g[k];
                    } else if va[k] < T::zero() {
                        ga[k] -= g[k];
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let ga = slot(grads, *a, g.len());
                let y = out.data();
                for r in 0..out.rows() {
                    let span = r * cols..(r + 1) * cols;
                    softmax_adjoint(&mut ga[span.clone()], &g[span.clone()], &y[span], 1);
                }
            }
            Op::SegmentSoftmax(a, seg) => {
                let ga = slot(grads, *a, g.len());
                let y = out.data();
                for (s, e) in segment_ranges(seg, "segment_softmax").unwrap() {
                    for c in 0..cols {
                        let span = s * cols + c..(e - 1) * cols + c + 1;
                        softmax_adjoint(&mut ga[span.clone()], &g[span.clone()], &y[span], cols);
                    }
                }
            }
            Op::SegmentNormalize(a, seg, eps) => {
                let va = val(*a).data();
                let y = out.data();
                let ga = slot(grads, *a, g.len());
                for (s, e) in segment_ranges(seg, "segment_normalize").unwrap() {
                    for c in 0..cols {
                        let col = || (s..e).map(|r| r * cols + c);
                        let total: T = col().map(|k| va[k]).sum();
                        let denom = guarded(total, *eps);
                        let coupled = if total.abs() >= *eps {
                            col().map(|k| g[k] * y[k]).sum()
                        } else {
                            T::zero()
                        };
                        for k in col() {
                            ga[k] += (g[k] - coupled) / denom;
                        }
                    }
                }
            }
            Op::SegmentSum(a, seg) => {
                let w = cols;
                let ga = slot(grads, *a, val(*a).len());
                for (r, &s) in seg.iter().enumerate() {
                    axpy(&mut ga[r * w..(r + 1) * w], &g[s * w..(s + 1) * w], T::one());
                }
            }
            Op::Gather(a, idx) => {
                let w = cols;
                let ga = slot(grads, *a, val(*a).len());
                for (r, &k) in idx.iter().enumerate() {
                    axpy(&mut ga[k * w..(k + 1) * w], &g[r * w..(r + 1) * w], T::one());
                }
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                let ga = slot(grads, *a, n);
                for x in ga.iter_mut() {
                    *x += g[0];
                }
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                let d = g[0] / T::from_usize(n.max(1)).unwrap();
                let ga = slot(grads, *a, n);
                for x in ga.iter_mut() {
                    *x += d;
                }
            }
        }
    }
}

fn check_ids(op: &'static str, ids: &[usize], rows: usize) -> Result<(), TensorError> {
    if ids.len() != rows {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: [rows, 0],
            rhs: [ids.len(), 0],
        });
    }
    Ok(())
}

fn guarded<T: Real>(total: T, eps: T) -> T {
    if total.abs() >= eps {
        total
    } else {
        eps
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], k: usize, len: usize) -> &mut [T] {
    grads[k].get_or_insert_with(|| vec![T::zero(); len])
}

fn axpy<T: Real>(y: &mut [T], x: &[T], a: T) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Softmax over `xs[0], xs[stride], ...`.
fn softmax_in_place<T: Real>(xs: &mut [T], stride: usize) {
    let max = xs.iter().step_by(stride).fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut total = T::zero();
    for x in xs.iter_mut().step_by(stride) {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut().step_by(stride) {
        *x = *x / total;
    }
}

/// `ga += y ⊙ (g − ⟨y, g⟩)` over a strided run.
fn softmax_adjoint<T: Real>(ga: &mut [T], g: &[T], y: &[T], stride: usize) {
    let dot: T = (0..g.len()).step_by(stride).map(|k| g[k] * y[k]).sum();
    for k in (0..g.len()).step_by(stride) {
        ga[k] += y[k] * (g[k] - dot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(t(1, 3, &[1.0, -2.0, 3.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_square_gradient_is_x() {
        let mut tape = Tape::new();
        let x = tape.param(t(1, 3, &[1.0, -2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        let g = tape.backward(half).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.param(t(1, 2, &[1.0, 2.0]));
        assert_eq!(tape.backward(x).unwrap_err(), TensorError::NotScalar([1, 2]));
        let mut other = Tape::<f64>::new();
        let y = other.param(Tensor::scalar(1.0));
        assert_eq!(tape.backward(y).unwrap_err(), TensorError::DetachedTensor);
        assert_eq!(tape.relu(y).unwrap_err(), TensorError::DetachedTensor);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(1, 2, &[1.0, 2.0]));
        let c = tape.constant(t(1, 2, &[3.0, 4.0]));
        let p = tape.mul(x, c).unwrap();
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0, 4.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn broadcast_add_reduces_bias_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(t(3, 2, &[0.0; 6]));
        let b = tape.param(t(1, 2, &[1.0, 2.0]));
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).unwrap().row_slice(2), &[1.0, 2.0]);
        let s = tape.sum(y).unwrap();
        assert_eq!(tape.backward(s).unwrap().get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn segment_softmax_sums_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(t(5, 2, &[1.0, -1.0, 2.0, 0.5, -3.0, 8.0, 0.0, 0.0, 4.0, 1.0]));
        let seg: Arc<[usize]> = Arc::from(vec![0, 0, 0, 2, 2]);
        let y = tape.segment_softmax(x, seg).unwrap();
        let v = tape.value(y).unwrap();
        for c in 0..2 {
            assert!(((0..3).map(|r| v.get(r, c)).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(((3..5).map(|r| v.get(r, c)).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unsorted_segments_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(t(3, 1, &[1.0, 2.0, 3.0]));
        let seg: Arc<[usize]> = Arc::from(vec![1, 0, 1]);
        assert_eq!(
            tape.segment_softmax(x, seg).unwrap_err(),
            TensorError::UnsortedSegments("segment_softmax")
        );
    }

    #[test]
    fn segment_normalize_guards_small_sums() {
        let mut tape = Tape::new();
        let x = tape.constant(t(4, 1, &[1.0, 3.0, 1e-12, -1e-12]));
        let seg: Arc<[usize]> = Arc::from(vec![0, 0, 1, 1]);
        let y = tape.segment_normalize(x, seg, 1e-8).unwrap();
        let v = tape.value(y).unwrap().data().to_vec();
        assert_eq!(&v[..2], &[0.25, 0.75]);
        assert!(v[2..].iter().all(|x| x.abs() < 1e-3));
    }

    #[test]
    fn gather_and_segment_sum_are_adjoint() {
        let mut tape = Tape::new();
        let x = tape.param(t(3, 1, &[1.0, 2.0, 3.0]));
        let idx: Arc<[usize]> = Arc::from(vec![2, 0, 2]);
        let g = tape.gather(x, idx.clone()).unwrap();
        assert_eq!(tape.value(g).unwrap().data(), &[3.0, 1.0, 3.0]);
        let s = tape.segment_sum(g, idx, 3).unwrap();
        assert_eq!(tape.value(s).unwrap().data(), &[1.0, 0.0, 6.0]);
        let total = tape.sum(s).unwrap();
        assert_eq!(tape.backward(total).unwrap().get(x).unwrap().data(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn concat_slice_round_trip_is_exact() {
        let mut tape = Tape::new();
        let a = tape.constant(t(2, 2, &[0.1, 0.2, 0.3, 0.4]));
        let b = tape.constant(t(2, 1, &[0.5, 0.6]));
        let c = tape.concat_cols(&[a, b]).unwrap();
        let a2 = tape.slice_cols(c, 0, 2).unwrap();
        let b2 = tape.slice_cols(c, 2, 1).unwrap();
        assert_eq!(tape.value(a2).unwrap(), tape.value(a).unwrap());
        assert_eq!(tape.value(b2).unwrap(), tape.value(b).unwrap());
        let r = tape.concat_rows(&[a, a]).unwrap();
        let back = tape.slice_rows(r, 2, 2).unwrap();
        assert_eq!(tape.value(back).unwrap(), tape.value(a).unwrap());
    }

    #[test]
    fn fault_flips_gradient_sign() {
        let mut tape = Tape::new();
        tape.inject_fault(Some(OpKind::Relu));
        let x = tape.param(t(1, 2, &[1.0, 2.0]));
        let r = tape.relu(x).unwrap();
        let s = tape.sum(r).unwrap();
        assert_eq!(tape.backward(s).unwrap().get(x).unwrap().data(), &[-1.0, -1.0]);
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
        let c = tape.constant(Tensor::zeros(3, 2));
        assert!(matches!(tape.add(a, c), Err(TensorError::ShapeMismatch { .. })));
        assert!(matches!(tape.slice_cols(a, 2, 2), Err(TensorError::ShapeMismatch { .. })));
    }
}
