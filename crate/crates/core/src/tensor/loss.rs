//! Loss primitives built from tape ops. All return a scalar (1x1) node so
//! they can be combined and backpropagated directly.

use super::tape::{Tape, Var};
use super::{KernelError, KernelResult, Tensor};

/// Mean of per-sample -log softmax(logits)[label], optionally weighted.
/// A weighted call averages w_i * loss_i over the batch.
pub fn softmax_cross_entropy(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    weights: Option<&[f64]>,
) -> KernelResult<Var> {
    let (n, classes) = tape.value(logits).shape();
    if classes < 2 {
        return Err(KernelError::InvalidArgument("need at least 2 classes".into()));
    }
    if labels.len() != n {
        return Err(KernelError::ShapeMismatch(format!(
            "{n} logit rows vs {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(KernelError::LabelOutOfRange { label: bad, classes });
    }
    let logp = tape.log_softmax_rows(logits)?;
    let picked = tape.gather_col(logp, labels.to_vec())?;
    let neg = tape.scalar_mul(picked, -1.0)?;
    let per_sample = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(KernelError::ShapeMismatch(format!(
                    "{n} samples vs {} weights",
                    w.len()
                )));
            }
            let wt = tape.constant(Tensor::new(n, 1, w.to_vec())?);
            tape.mul_elem(neg, wt)?
        }
        None => neg,
    };
    tape.mean_all(per_sample)
}

/// Mean binary cross-entropy of logits (n x 1) against {0,1} targets,
/// computed in the stable softplus form: mean(softplus(z) - t * z).
pub fn binary_cross_entropy_with_logits(
    tape: &mut Tape,
    logits: Var,
    targets: &[f64],
) -> KernelResult<Var> {
    let (n, c) = tape.value(logits).shape();
    if c != 1 || targets.len() != n {
        return Err(KernelError::ShapeMismatch(format!(
            "bce expects (n x 1) logits and n targets, got {:?} and {}",
            (n, c),
            targets.len()
        )));
    }
    let t = tape.constant(Tensor::new(n, 1, targets.to_vec())?);
    let sp = tape.softplus(logits)?;
    let tz = tape.mul_elem(t, logits)?;
    let per = tape.sub(sp, tz)?;
    tape.mean_all(per)
}

/// Focal loss: mean of alpha_y * (1 - p_y)^gamma * (-log p_y).
/// `alpha` is a per-class weight; uniform alpha of 1.0 with gamma = 0
/// reduces exactly to `softmax_cross_entropy`.
pub fn focal_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    gamma: f64,
    alpha: &[f64],
) -> KernelResult<Var> {
    let (n, classes) = tape.value(logits).shape();
    if gamma < 0.0 {
        return Err(KernelError::InvalidArgument("focal gamma must be >= 0".into()));
    }
    if alpha.len() != classes {
        return Err(KernelError::ShapeMismatch(format!(
            "{classes} classes vs {} alpha weights",
            alpha.len()
        )));
    }
    if labels.len() != n {
        return Err(KernelError::ShapeMismatch(format!(
            "{n} logit rows vs {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(KernelError::LabelOutOfRange { label: bad, classes });
    }
    let logp_all = tape.log_softmax_rows(logits)?;
    let logp = tape.gather_col(logp_all, labels.to_vec())?;
    let neg_logp = tape.scalar_mul(logp, -1.0)?;
    let per = if gamma == 0.0 {
        neg_logp
    } else {
        let p = tape.exp(logp)?;
        let neg_p = tape.scalar_mul(p, -1.0)?;
        let one_minus_p = tape.add_scalar(neg_p, 1.0)?;
        let w = tape.pow_const(one_minus_p, gamma)?;
        tape.mul_elem(w, neg_logp)?
    };
    let a: Vec<f64> = labels.iter().map(|&l| alpha[l]).collect();
    let per = if a.iter().all(|&x| x == 1.0) {
        per
    } else {
        let av = tape.constant(Tensor::new(n, 1, a)?);
        tape.mul_elem(per, av)?
    };
    tape.mean_all(per)
}

/// Logit-adjusted loss: cross-entropy on logits + tau * log(priors).
pub fn la_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
    tau: f64,
    priors: &[f64],
) -> KernelResult<Var> {
    let (_, classes) = tape.value(logits).shape();
    if priors.len() != classes {
        return Err(KernelError::ShapeMismatch(format!(
            "{classes} classes vs {} priors",
            priors.len()
        )));
    }
    if priors.iter().any(|&p| p <= 0.0) {
        return Err(KernelError::InvalidArgument("priors must be positive".into()));
    }
    let shift: Vec<f64> = priors.iter().map(|&p| tau * p.ln()).collect();
    let shift_row = tape.constant(Tensor::new(1, classes, shift)?);
    let adjusted = tape.add_row_broadcast(logits, shift_row)?;
    softmax_cross_entropy(tape, adjusted, labels, None)
}

/// Mean of the k largest entries of a score column.
pub fn topk_mean(tape: &mut Tape, scores: Var, k: usize) -> KernelResult<Var> {
    tape.topk_mean(scores, k)
}

/// Mean of the k largest row L2 norms of (n x d).
pub fn row_l2_topk_mean(tape: &mut Tape, x: Var, k: usize) -> KernelResult<Var> {
    let norms = tape.row_norms(x)?;
    tape.topk_mean(norms, k)
}
