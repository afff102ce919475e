//! Finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::{KernelError, KernelResult, Tensor};

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, entry index) of the worst entry
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Compare the tape gradient of `f` against central finite differences with
/// step `h` (1e-5 is the standard choice at 64-bit precision).
///
/// `f` must build a scalar node from the given input vars. Relative error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|), so near-zero
/// gradients are compared absolutely.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> KernelResult<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> KernelResult<Var>,
{
    let eval = |points: &[Tensor]| -> KernelResult<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = points.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    // analytic pass
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let shape = tape.value(out).shape();
    if shape != (1, 1) {
        return Err(KernelError::NonScalarOutput(shape.0, shape.1));
    }
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    let mut points = inputs.to_vec();
    for ti in 0..inputs.len() {
        for ei in 0..inputs[ti].len() {
            let orig = points[ti].as_slice()[ei];
            points[ti].as_mut_slice()[ei] = orig + h;
            let up = eval(&points)?;
            points[ti].as_mut_slice()[ei] = orig - h;
            let down = eval(&points)?;
            points[ti].as_mut_slice()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti].as_slice()[ei];
            let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ti, ei);
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_tight() {
        let x = Tensor::new(2, 3, vec![0.4, -1.2, 0.9, 2.0, -0.3, 0.1]).unwrap();
        let report = grad_check(
            |tape, vars| {
                let sq = tape.mul_elem(vars[0], vars[0])?;
                tape.sum_all(sq)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(report.passes(1e-8), "rel err {}", report.max_rel_err);
    }

    #[test]
    fn wrong_backward_is_caught() {
        // negative control: the analytic pass (first call) differentiates
        // sum(x^2) while every numeric evaluation sees sum(x^3), so the
        // reported error must blow past any reasonable tolerance
        use std::cell::Cell;
        let calls = Cell::new(0u32);
        let x = Tensor::new(1, 3, vec![0.5, -0.2, 1.1]).unwrap();
        let report = grad_check(
            |tape, vars| {
                let call = calls.get();
                calls.set(call + 1);
                let sq = tape.mul_elem(vars[0], vars[0])?;
                if call == 0 {
                    tape.sum_all(sq)
                } else {
                    let cu = tape.mul_elem(sq, vars[0])?;
                    tape.sum_all(cu)
                }
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(!report.passes(1e-4), "negative control should fail");
    }

    #[test]
    fn rejects_non_scalar() {
        let x = Tensor::new(2, 1, vec![1.0, 2.0]).unwrap();
        let err = grad_check(|_tape, vars| Ok(vars[0]), &[x], 1e-5);
        assert!(matches!(err, Err(KernelError::NonScalarOutput(2, 1))));
    }
}
