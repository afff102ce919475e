//! Reverse-mode differentiation as a tape of primitive ops, each with an
//! explicit vector-Jacobian product. One tape per forward pass; backward
//! walks the tape in reverse and accumulates gradients into leaf slots.

use super::{mm, mm_nt_acc, mm_tn_acc, KernelError, KernelResult, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    /// rows of lhs += the single rhs row
    AddRowBroadcast(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    PowConst(Var, f64),
    LogSoftmaxRows(Var),
    /// out[i, 0] = in[i, idx[i]]
    GatherCol(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    ColSum(Var),
    ColMean(Var),
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    /// mean of the k largest entries of a column vector; selected row
    /// indices saved at forward time
    TopkMean(Var, usize, Vec<usize>),
    /// Euclidean norm of each row: (n x d) -> (n x 1)
    RowNorms(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording tape. Forward ops append nodes; `backward` fills gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that does not require a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that accumulates a gradient during `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` root with respect to `v`.
    /// None until `backward` has run, or if `v` does not require a gradient.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn emit(&mut self, value: Tensor, op: Op, req: bool) -> KernelResult<Var> {
        if !value.is_finite() {
            return Err(KernelError::NonFinite("tape op"));
        }
        Ok(self.push(value, op, req))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> KernelResult<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(KernelError::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let out = mm(ta, tb);
        let req = self.requires(a) || self.requires(b);
        self.emit(out, Op::MatMul(a, b), req)
    }

    pub fn add(&mut self, a: Var, b: Var) -> KernelResult<Var> {
        self.zip_elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> KernelResult<Var> {
        self.zip_elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> KernelResult<Var> {
        self.zip_elementwise(a, b, "mul_elem", |x, y| x * y, Op::MulElem(a, b))
    }

    fn zip_elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> KernelResult<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(KernelError::ShapeMismatch(format!(
                "{name} {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta
            .as_slice()
            .iter()
            .zip(tb.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::raw(ta.rows(), ta.cols(), data);
        let req = self.requires(a) || self.requires(b);
        self.emit(out, op, req)
    }

    /// a (n x d) + row (1 x d) broadcast over rows.
    pub fn add_row_broadcast(&mut self, a: Var, row: Var) -> KernelResult<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(KernelError::ShapeMismatch(format!(
                "add_row_broadcast {:?} + {:?}",
                ta.shape(),
                tr.shape()
            )));
        }
        let cols = ta.cols();
        let mut data = ta.as_slice().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tr.as_slice()[i % cols];
        }
        let out = Tensor::raw(ta.rows(), cols, data);
        let req = self.requires(a) || self.requires(row);
        self.emit(out, Op::AddRowBroadcast(a, row), req)
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> KernelResult<Var> {
        let ta = self.value(a);
        let out = Tensor::raw(ta.rows(), ta.cols(), ta.as_slice().iter().map(|&x| x * c).collect());
        let req = self.requires(a);
        self.emit(out, Op::ScalarMul(a, c), req)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> KernelResult<Var> {
        let ta = self.value(a);
        let out = Tensor::raw(ta.rows(), ta.cols(), ta.as_slice().iter().map(|&x| x + c).collect());
        let req = self.requires(a);
        self.emit(out, Op::AddScalar(a), req)
    }

    pub fn relu(&mut self, a: Var) -> KernelResult<Var> {
        let ta = self.value(a);
        let out =
            Tensor::raw(ta.rows(), ta.cols(), ta.as_slice().iter().map(|&x| x.max(0.0)).collect());
        let req = self.requires(a);
        self.emit(out, Op::Relu(a), req)
    }

    /// ln(1 + e^x), computed as max(x, 0) + ln(1 + e^-|x|).
    pub fn softplus(&mut self, a: Var) -> KernelResult<Var> {
        let ta = self.value(a);
        let data = ta.as_slice().iter().map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p()).collect();
        let out = Tensor::raw(ta.rows(), ta.cols(), data);
        let req = self.requires(a);
        self.emit(out, Op::Softplus(a), req)
    }

    pub fn exp(&mut self, a: Var) -> KernelResult<Var> {
        let ta = self.value(a);
        let out = Tensor::raw(ta.rows(), ta.cols(), ta.as_slice().iter().map(|&x| x.exp()).collect());
        let req = self.requires(a);
        self.emit(out, Op::Exp(a), req)
    }

    /// x^p elementwise for constant p >= 0; non-positive bases clamp to 0
    /// (1 when p == 0) with zero gradient.
    pub fn pow_const(&mut self, a: Var, p: f64) -> KernelResult<Var> {
        if p < 0.0 {
            return Err(KernelError::InvalidArgument("pow_const exponent must be >= 0".into()));
        }
        let ta = self.value(a);
        let data = ta
            .as_slice()
            .iter()
            .map(|&x| {
                if p == 0.0 {
                    1.0
                } else if x <= 0.0 {
                    0.0
                } else {
                    x.powf(p)
                }
            })
            .collect();
        let out = Tensor::raw(ta.rows(), ta.cols(), data);
        let req = self.requires(a);
        self.emit(out, Op::PowConst(a, p), req)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, a: Var) -> KernelResult<Var> {
        let ta = self.value(a);
        let (n, c) = ta.shape();
        let mut data = Vec::with_capacity(n * c);
        for i in 0..n {
            let row = ta.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|&x| x - lse));
        }
        let out = Tensor::raw(n, c, data);
        let req = self.requires(a);
        self.emit(out, Op::LogSoftmaxRows(a), req)
    }

    /// out[i, 0] = a[i, idx[i]]
    pub fn gather_col(&mut self, a: Var, idx: Vec<usize>) -> KernelResult<Var> {
        let ta = self.value(a);
        let (n, c) = ta.shape();
        if idx.len() != n {
            return Err(KernelError::ShapeMismatch(format!(
                "gather_col needs {n} indices, got {}",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= c) {
            return Err(KernelError::LabelOutOfRange { label: bad, classes: c });
        }
        let data = idx.iter().enumerate().map(|(i, &j)| ta.get(i, j)).collect();
        let out = Tensor::raw(n, 1, data);
        let req = self.requires(a);
        self.emit(out, Op::GatherCol(a, idx), req)
    }

    pub fn sum_all(&mut self, a: Var) -> KernelResult<Var> {
        let s = self.value(a).as_slice().iter().sum();
        let req = self.requires(a);
        self.emit(Tensor::scalar(s), Op::SumAll(a), req)
    }

    pub fn mean_all(&mut self, a: Var) -> KernelResult<Var> {
        let ta = self.value(a);
        let n = ta.len() as f64;
        let s = ta.as_slice().iter().sum::<f64>() / n;
        let req = self.requires(a);
        self.emit(Tensor::scalar(s), Op::MeanAll(a), req)
    }

    pub fn col_sum(&mut self, a: Var) -> KernelResult<Var> {
        self.col_reduce(a, false)
    }

    pub fn col_mean(&mut self, a: Var) -> KernelResult<Var> {
        self.col_reduce(a, true)
    }

    fn col_reduce(&mut self, a: Var, mean: bool) -> KernelResult<Var> {
        let ta = self.value(a);
        let (n, c) = ta.shape();
        let mut data = vec![0.0; c];
        for i in 0..n {
            for (acc, &v) in data.iter_mut().zip(ta.row(i)) {
                *acc += v;
            }
        }
        if mean {
            for v in &mut data {
                *v /= n as f64;
            }
        }
        let op = if mean { Op::ColMean(a) } else { Op::ColSum(a) };
        let req = self.requires(a);
        self.emit(Tensor::raw(1, c, data), op, req)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> KernelResult<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(KernelError::ShapeMismatch(format!(
                "concat_cols {:?} | {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (ca + cb));
        for i in 0..n {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let req = self.requires(a) || self.requires(b);
        self.emit(Tensor::raw(n, ca + cb, data), Op::ConcatCols(a, b), req)
    }

    /// Vertically stack the given nodes (all must share a column count).
    pub fn stack_rows(&mut self, parts: &[Var]) -> KernelResult<Var> {
        if parts.is_empty() {
            return Err(KernelError::InvalidArgument("stack_rows of nothing".into()));
        }
        let c = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let tp = self.value(p);
            if tp.cols() != c {
                return Err(KernelError::ShapeMismatch(format!(
                    "stack_rows column mismatch: {} vs {}",
                    c,
                    tp.cols()
                )));
            }
            rows += tp.rows();
            data.extend_from_slice(tp.as_slice());
        }
        let req = parts.iter().any(|&p| self.requires(p));
        self.emit(Tensor::raw(rows, c, data), Op::StackRows(parts.to_vec()), req)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> KernelResult<Var> {
        let ta = self.value(a);
        let (n, c) = ta.shape();
        if start + len > n {
            return Err(KernelError::ShapeMismatch(format!(
                "slice_rows {start}..{} of {n} rows",
                start + len
            )));
        }
        let data = ta.as_slice()[start * c..(start + len) * c].to_vec();
        let req = self.requires(a);
        self.emit(Tensor::raw(len, c, data), Op::SliceRows(a, start, len), req)
    }

    /// Mean of the k largest entries of a column vector (n x 1). Ties break
    /// toward the lowest row index. Gradient is 1/k on the selected rows.
    pub fn topk_mean(&mut self, a: Var, k: usize) -> KernelResult<Var> {
        let ta = self.value(a);
        if ta.cols() != 1 {
            return Err(KernelError::ShapeMismatch(format!(
                "topk_mean expects a column vector, got {:?}",
                ta.shape()
            )));
        }
        let n = ta.rows();
        if k == 0 || k > n {
            return Err(KernelError::KOutOfRange { k, len: n });
        }
        let selected = select_topk(ta.as_slice(), k);
        let s: f64 = selected.iter().map(|&i| ta.as_slice()[i]).sum();
        let req = self.requires(a);
        self.emit(Tensor::scalar(s / k as f64), Op::TopkMean(a, k, selected), req)
    }

    /// Euclidean norm of each row: (n x d) -> (n x 1).
    pub fn row_norms(&mut self, a: Var) -> KernelResult<Var> {
        let ta = self.value(a);
        let n = ta.rows();
        let data = (0..n)
            .map(|i| ta.row(i).iter().map(|&x| x * x).sum::<f64>().sqrt())
            .collect();
        let req = self.requires(a);
        self.emit(Tensor::raw(n, 1, data), Op::RowNorms(a), req)
    }

    /// Backpropagate from a scalar root. Gradients of all `param` leaves
    /// (and intermediates) are then available via `grad`.
    pub fn backward(&mut self, root: Var) -> KernelResult<()> {
        {
            let tv = self.value(root);
            if tv.shape() != (1, 1) {
                return Err(KernelError::NonScalarOutput(tv.rows(), tv.cols()));
            }
        }
        let n = self.nodes.len();
        self.grads = vec![None; n];
        self.grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = self.grads[i].take().unwrap();
            self.apply_vjp(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, b) in g.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn grad_slot(&mut self, v: Var) -> &mut Tensor {
        let shape = self.nodes[v.0].value.shape();
        self.grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
    }

    fn apply_vjp(&mut self, node: usize, g: &Tensor) {
        // Ops read parent values immutably and accumulate into grad slots.
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.requires(a) {
                    let delta = {
                        let tb = &self.nodes[b.0].value;
                        let mut acc = Tensor::zeros(g.rows(), tb.rows());
                        mm_nt_acc(g, tb, &mut acc);
                        acc
                    };
                    self.accumulate(a, delta);
                }
                if self.requires(b) {
                    let delta = {
                        let ta = &self.nodes[a.0].value;
                        let mut acc = Tensor::zeros(ta.cols(), g.cols());
                        mm_tn_acc(ta, g, &mut acc);
                        acc
                    };
                    self.accumulate(b, delta);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g.clone());
                let neg = Tensor::raw(g.rows(), g.cols(), g.as_slice().iter().map(|&x| -x).collect());
                self.accumulate(b, neg);
            }
            Op::MulElem(a, b) => {
                let (a, b) = (*a, *b);
                if self.requires(a) {
                    let tb = &self.nodes[b.0].value;
                    let delta = Tensor::raw(
                        g.rows(),
                        g.cols(),
                        g.as_slice().iter().zip(tb.as_slice()).map(|(&x, &y)| x * y).collect(),
                    );
                    self.accumulate(a, delta);
                }
                if self.requires(b) {
                    let ta = &self.nodes[a.0].value;
                    let delta = Tensor::raw(
                        g.rows(),
                        g.cols(),
                        g.as_slice().iter().zip(ta.as_slice()).map(|(&x, &y)| x * y).collect(),
                    );
                    self.accumulate(b, delta);
                }
            }
            Op::AddRowBroadcast(a, row) => {
                let (a, row) = (*a, *row);
                self.accumulate(a, g.clone());
                if self.requires(row) {
                    let c = g.cols();
                    let mut data = vec![0.0; c];
                    for (i, &v) in g.as_slice().iter().enumerate() {
                        data[i % c] += v;
                    }
                    self.accumulate(row, Tensor::raw(1, c, data));
                }
            }
            Op::ScalarMul(a, c) => {
                let (a, c) = (*a, *c);
                let delta =
                    Tensor::raw(g.rows(), g.cols(), g.as_slice().iter().map(|&x| x * c).collect());
                self.accumulate(a, delta);
            }
            Op::AddScalar(a) => {
                let a = *a;
                self.accumulate(a, g.clone());
            }
            Op::Relu(a) => {
                let a = *a;
                let ta = &self.nodes[a.0].value;
                let delta = Tensor::raw(
                    g.rows(),
                    g.cols(),
                    g.as_slice()
                        .iter()
                        .zip(ta.as_slice())
                        .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                        .collect(),
                );
                self.accumulate(a, delta);
            }
            Op::Softplus(a) => {
                let a = *a;
                let ta = &self.nodes[a.0].value;
                let delta = Tensor::raw(
                    g.rows(),
                    g.cols(),
                    g.as_slice()
                        .iter()
                        .zip(ta.as_slice())
                        .map(|(&gv, &x)| gv * sigmoid(x))
                        .collect(),
                );
                self.accumulate(a, delta);
            }
            Op::Exp(a) => {
                let a = *a;
                let out = &self.nodes[node].value;
                let delta = Tensor::raw(
                    g.rows(),
                    g.cols(),
                    g.as_slice().iter().zip(out.as_slice()).map(|(&gv, &y)| gv * y).collect(),
                );
                self.accumulate(a, delta);
            }
            Op::PowConst(a, p) => {
                let (a, p) = (*a, *p);
                let ta = &self.nodes[a.0].value;
                let delta = Tensor::raw(
                    g.rows(),
                    g.cols(),
                    g.as_slice()
                        .iter()
                        .zip(ta.as_slice())
                        .map(|(&gv, &x)| {
                            if p == 0.0 || x <= 0.0 {
                                0.0
                            } else {
                                gv * p * x.powf(p - 1.0)
                            }
                        })
                        .collect(),
                );
                self.accumulate(a, delta);
            }
            Op::LogSoftmaxRows(a) => {
                let a = *a;
                let out = &self.nodes[node].value;
                let (n, c) = out.shape();
                let mut data = Vec::with_capacity(n * c);
                for i in 0..n {
                    let g_row = &g.as_slice()[i * c..(i + 1) * c];
                    let y_row = out.row(i);
                    let g_sum: f64 = g_row.iter().sum();
                    data.extend(
                        g_row
                            .iter()
                            .zip(y_row)
                            .map(|(&gv, &y)| gv - y.exp() * g_sum),
                    );
                }
                self.accumulate(a, Tensor::raw(n, c, data));
            }
            Op::GatherCol(a, idx) => {
                let a = *a;
                let idx = idx.clone();
                let (n, c) = self.nodes[a.0].value.shape();
                let mut delta = Tensor::zeros(n, c);
                for (i, &j) in idx.iter().enumerate() {
                    delta.set(i, j, g.as_slice()[i]);
                }
                self.accumulate(a, delta);
            }
            Op::SumAll(a) => {
                let a = *a;
                let gv = g.as_slice()[0];
                let (n, c) = self.nodes[a.0].value.shape();
                self.accumulate(a, Tensor::filled(n, c, gv));
            }
            Op::MeanAll(a) => {
                let a = *a;
                let gv = g.as_slice()[0];
                let (n, c) = self.nodes[a.0].value.shape();
                self.accumulate(a, Tensor::filled(n, c, gv / (n * c) as f64));
            }
            Op::ColSum(a) => {
                let a = *a;
                let (n, c) = self.nodes[a.0].value.shape();
                let mut data = Vec::with_capacity(n * c);
                for _ in 0..n {
                    data.extend_from_slice(g.as_slice());
                }
                self.accumulate(a, Tensor::raw(n, c, data));
            }
            Op::ColMean(a) => {
                let a = *a;
                let (n, c) = self.nodes[a.0].value.shape();
                let scale = 1.0 / n as f64;
                let mut data = Vec::with_capacity(n * c);
                for _ in 0..n {
                    data.extend(g.as_slice().iter().map(|&x| x * scale));
                }
                self.accumulate(a, Tensor::raw(n, c, data));
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (*a, *b);
                let ca = self.nodes[a.0].value.cols();
                let cb = self.nodes[b.0].value.cols();
                let n = g.rows();
                let mut da = Vec::with_capacity(n * ca);
                let mut db = Vec::with_capacity(n * cb);
                for i in 0..n {
                    let row = &g.as_slice()[i * (ca + cb)..(i + 1) * (ca + cb)];
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                self.accumulate(a, Tensor::raw(n, ca, da));
                self.accumulate(b, Tensor::raw(n, cb, db));
            }
            Op::StackRows(parts) => {
                let parts = parts.clone();
                let c = g.cols();
                let mut offset = 0;
                for p in parts {
                    let rows = self.nodes[p.0].value.rows();
                    let delta = Tensor::raw(
                        rows,
                        c,
                        g.as_slice()[offset * c..(offset + rows) * c].to_vec(),
                    );
                    offset += rows;
                    self.accumulate(p, delta);
                }
            }
            Op::SliceRows(a, start, len) => {
                let (a, start, len) = (*a, *start, *len);
                if self.requires(a) {
                    let c = g.cols();
                    let slot = self.grad_slot(a);
                    let dst = &mut slot.as_mut_slice()[start * c..(start + len) * c];
                    for (d, &s) in dst.iter_mut().zip(g.as_slice()) {
                        *d += s;
                    }
                }
            }
            Op::TopkMean(a, k, selected) => {
                let (a, k) = (*a, *k);
                let selected = selected.clone();
                let n = self.nodes[a.0].value.rows();
                let mut delta = Tensor::zeros(n, 1);
                let gv = g.as_slice()[0] / k as f64;
                for &i in &selected {
                    delta.as_mut_slice()[i] = gv;
                }
                self.accumulate(a, delta);
            }
            Op::RowNorms(a) => {
                let a = *a;
                let ta = &self.nodes[a.0].value;
                let out = &self.nodes[node].value;
                let (n, c) = ta.shape();
                let mut data = vec![0.0; n * c];
                for i in 0..n {
                    let norm = out.as_slice()[i];
                    if norm > 0.0 {
                        let gv = g.as_slice()[i] / norm;
                        for j in 0..c {
                            data[i * c + j] = gv * ta.get(i, j);
                        }
                    }
                }
                self.accumulate(a, Tensor::raw(n, c, data));
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Indices of the k largest values, ties broken toward the lowest index.
pub(crate) fn select_topk(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        values[j].partial_cmp(&values[i]).expect("finite values").then(i.cmp(&j))
    });
    idx.truncate(k);
    idx
}
