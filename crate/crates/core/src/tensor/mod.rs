//! Dense 2-D tensors with reverse-mode gradients, loss primitives, and
//! optimizers. This is the only module that touches raw numbers; everything
//! above it composes tape operations.

mod gradcheck;
mod loss;
mod optim;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{
    binary_cross_entropy_with_logits, focal_loss, la_loss, row_l2_topk_mean,
    softmax_cross_entropy, topk_mean,
};
pub use optim::{sgd_warmup_lr, AdamConfig, OptimizerKind, OptimizerState, SgdWarmupConfig};
pub use tape::{Tape, Var};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("k={k} out of range for {len} entries")]
    KOutOfRange { k: usize, len: usize },
    #[error("expected scalar (1x1) output, got {0}x{1}")]
    NonScalarOutput(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type KernelResult<T> = Result<T, KernelError>;

/// Dense row-major matrix of f64. All entries are finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> KernelResult<Self> {
        if data.len() != rows * cols {
            return Err(KernelError::ShapeMismatch(format!(
                "{}x{} tensor needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(KernelError::NonFinite("tensor construction"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> KernelResult<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(KernelError::ShapeMismatch("ragged row list".into()));
        }
        Self::new(n, m, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> KernelResult<f64> {
        if self.rows * self.cols != 1 {
            return Err(KernelError::NonScalarOutput(self.rows, self.cols));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }
}

/// C = A * B with a cache-friendly i-k-j loop. Zero entries of A are skipped,
/// which pays off on post-ReLU activations.
pub(crate) fn mm(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols, b.rows);
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let o_row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                let b_row = &b.data[p * m..(p + 1) * m];
                for (o, &bv) in o_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::raw(n, m, out)
}

/// C = A * B^T, accumulated into `acc`.
pub(crate) fn mm_nt_acc(a: &Tensor, b: &Tensor, acc: &mut Tensor) {
    debug_assert_eq!(a.cols, b.cols);
    debug_assert_eq!((acc.rows, acc.cols), (a.rows, b.rows));
    let (n, k, m) = (a.rows, a.cols, b.rows);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let o_row = &mut acc.data[i * m..(i + 1) * m];
        for (j, o) in o_row.iter_mut().enumerate() {
            let b_row = &b.data[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                s += av * bv;
            }
            *o += s;
        }
    }
}

/// C = A^T * B, accumulated into `acc`.
pub(crate) fn mm_tn_acc(a: &Tensor, b: &Tensor, acc: &mut Tensor) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!((acc.rows, acc.cols), (a.cols, b.cols));
    let (n, k, m) = (a.rows, a.cols, b.cols);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let b_row = &b.data[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                let o_row = &mut acc.data[p * m..(p + 1) * m];
                for (o, &bv) in o_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    }
}
