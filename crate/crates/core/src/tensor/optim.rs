//! Adam and SGD-with-warmup over flat lists of parameter tensors.

use super::{KernelError, KernelResult, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OptimizerKind {
    Adam,
    SgdWarmup,
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SgdWarmupConfig {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
}

impl Default for SgdWarmupConfig {
    fn default() -> Self {
        Self { base_lr: 0.1, warmup_epochs: 5, momentum: 0.9 }
    }
}

/// Linear warmup: base_lr * (epoch + 1) / warmup_epochs until the base rate
/// is reached, constant afterwards.
pub fn sgd_warmup_lr(epoch: usize, warmup_epochs: usize, base_lr: f64) -> f64 {
    if epoch + 1 >= warmup_epochs {
        base_lr
    } else {
        base_lr * (epoch + 1) as f64 / warmup_epochs as f64
    }
}

enum Buffers {
    Adam { cfg: AdamConfig, m: Vec<Tensor>, v: Vec<Tensor> },
    SgdWarmup { cfg: SgdWarmupConfig, velocity: Vec<Tensor>, epoch: usize },
}

/// Optimizer state over a fixed-order parameter list.
pub struct OptimizerState {
    buffers: Buffers,
    step: u64,
}

impl OptimizerState {
    pub fn adam(cfg: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Self { buffers: Buffers::Adam { cfg, m: zeros(), v: zeros() }, step: 0 }
    }

    pub fn sgd_warmup(cfg: SgdWarmupConfig, shapes: &[(usize, usize)]) -> Self {
        let velocity = shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Self { buffers: Buffers::SgdWarmup { cfg, velocity, epoch: 0 }, step: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self.buffers {
            Buffers::Adam { .. } => OptimizerKind::Adam,
            Buffers::SgdWarmup { .. } => OptimizerKind::SgdWarmup,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Inform the schedule of the current epoch (no-op for Adam).
    pub fn begin_epoch(&mut self, e: usize) {
        if let Buffers::SgdWarmup { epoch, .. } = &mut self.buffers {
            *epoch = e;
        }
    }

    /// Current learning rate.
    pub fn learning_rate(&self) -> f64 {
        match &self.buffers {
            Buffers::Adam { cfg, .. } => cfg.learning_rate,
            Buffers::SgdWarmup { cfg, epoch, .. } => {
                sgd_warmup_lr(*epoch, cfg.warmup_epochs, cfg.base_lr)
            }
        }
    }

    /// Apply one update. `params` and `grads` must match the shapes the
    /// state was built with, in the same order.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> KernelResult<()> {
        if params.len() != grads.len() {
            return Err(KernelError::ShapeMismatch(format!(
                "{} params vs {} grads",
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        match &mut self.buffers {
            Buffers::Adam { cfg, m, v } => {
                if m.len() != params.len() {
                    return Err(KernelError::ShapeMismatch(format!(
                        "optimizer built for {} tensors, got {}",
                        m.len(),
                        params.len()
                    )));
                }
                let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
                let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
                for ((p, g), (mb, vb)) in
                    params.iter_mut().zip(grads).zip(m.iter_mut().zip(v.iter_mut()))
                {
                    if p.shape() != g.shape() || p.shape() != mb.shape() {
                        return Err(KernelError::ShapeMismatch(format!(
                            "param {:?} vs grad {:?} vs moment {:?}",
                            p.shape(),
                            g.shape(),
                            mb.shape()
                        )));
                    }
                    let (pm, gm) = (p.as_mut_slice(), g.as_slice());
                    let (ms, vs) = (mb.as_mut_slice(), vb.as_mut_slice());
                    for i in 0..pm.len() {
                        ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * gm[i];
                        vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * gm[i] * gm[i];
                        let m_hat = ms[i] / bc1;
                        let v_hat = vs[i] / bc2;
                        pm[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
            }
            Buffers::SgdWarmup { cfg, velocity, epoch } => {
                if velocity.len() != params.len() {
                    return Err(KernelError::ShapeMismatch(format!(
                        "optimizer built for {} tensors, got {}",
                        velocity.len(),
                        params.len()
                    )));
                }
                let lr = sgd_warmup_lr(*epoch, cfg.warmup_epochs, cfg.base_lr);
                for ((p, g), vel) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
                    if p.shape() != g.shape() {
                        return Err(KernelError::ShapeMismatch(format!(
                            "param {:?} vs grad {:?}",
                            p.shape(),
                            g.shape()
                        )));
                    }
                    let (pm, gm, vm) = (p.as_mut_slice(), g.as_slice(), vel.as_mut_slice());
                    for i in 0..pm.len() {
                        vm[i] = cfg.momentum * vm[i] + gm[i];
                        pm[i] -= lr * vm[i];
                    }
                }
            }
        }
        Ok(())
    }
}
