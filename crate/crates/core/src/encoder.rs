//! Graph encoders producing graph-level embeddings: GCN (default) and GIN
//! backbones with mean/sum readout.

use crate::graph::Graph;
use crate::tensor::{KernelError, KernelResult, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backbone {
    Gcn,
    Gin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutMode {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub backbone: Backbone,
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub readout: ReadoutMode,
    pub gin_epsilon: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Gcn,
            n_layers: 3,
            hidden_dim: 128,
            readout: ReadoutMode::Mean,
            gin_epsilon: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> KernelResult<()> {
        if self.n_layers == 0 || self.hidden_dim == 0 {
            return Err(KernelError::InvalidArgument(
                "encoder needs n_layers >= 1 and hidden_dim >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One dense layer: weight (in x out) and bias (1 x out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self { weight: xavier_uniform(fan_in, fan_out, rng), bias: Tensor::zeros(1, fan_out) }
    }
}

/// Xavier/Glorot uniform in +-sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(fan_in, fan_out, data).expect("finite init")
}

/// Small multi-layer perceptron: ReLU between layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `dims` = [in, hidden..., out]
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers = dims.windows(2).map(|w| DenseLayer::init(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.rows())
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.cols())
    }

    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
                .collect(),
        }
    }

    /// Rebuild the var structure from an already-registered flat var list
    /// (same order as `tensors`). Consumes 2 * layers vars.
    pub fn vars_from_flat(&self, flat: &mut std::slice::Iter<'_, Var>) -> MlpVars {
        MlpVars {
            layers: self.layers.iter().map(|_| (*flat.next().unwrap(), *flat.next().unwrap())).collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// Tape handles for an [`Mlp`]'s parameters.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

impl MlpVars {
    /// x (n x in) -> (n x out)
    pub fn forward(&self, tape: &mut Tape, x: Var) -> KernelResult<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let hw = tape.matmul(h, w)?;
            h = tape.add_row_broadcast(hw, b)?;
            if i != last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|&(w, b)| {
                [
                    tape.grad(w).cloned().unwrap_or_else(|| zeros_like(tape.value(w))),
                    tape.grad(b).cloned().unwrap_or_else(|| zeros_like(tape.value(b))),
                ]
            })
            .collect()
    }
}

fn zeros_like(t: &Tensor) -> Tensor {
    Tensor::zeros(t.rows(), t.cols())
}

/// Message-passing weights for one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<EncoderLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderLayer {
    Gcn(DenseLayer),
    Gin(Mlp),
}

impl EncoderParams {
    pub fn init(cfg: &EncoderConfig, feature_dim: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(cfg.n_layers);
        let mut in_dim = feature_dim;
        for _ in 0..cfg.n_layers {
            let layer = match cfg.backbone {
                Backbone::Gcn => EncoderLayer::Gcn(DenseLayer::init(in_dim, cfg.hidden_dim, rng)),
                Backbone::Gin => {
                    EncoderLayer::Gin(Mlp::init(&[in_dim, cfg.hidden_dim, cfg.hidden_dim], rng))
                }
            };
            layers.push(layer);
            in_dim = cfg.hidden_dim;
        }
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        match self.layers.first() {
            Some(EncoderLayer::Gcn(l)) => l.weight.rows(),
            Some(EncoderLayer::Gin(m)) => m.in_dim(),
            None => 0,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self.layers.last() {
            Some(EncoderLayer::Gcn(l)) => l.weight.cols(),
            Some(EncoderLayer::Gin(m)) => m.out_dim(),
            None => 0,
        }
    }

    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    EncoderLayer::Gcn(d) => {
                        EncoderLayerVars::Gcn(tape.param(d.weight.clone()), tape.param(d.bias.clone()))
                    }
                    EncoderLayer::Gin(m) => EncoderLayerVars::Gin(m.register(tape)),
                })
                .collect(),
        }
    }

    /// Rebuild the var structure from a flat var list (same order as
    /// `tensors`).
    pub fn vars_from_flat(&self, flat: &mut std::slice::Iter<'_, Var>) -> EncoderVars {
        EncoderVars {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    EncoderLayer::Gcn(_) => {
                        EncoderLayerVars::Gcn(*flat.next().unwrap(), *flat.next().unwrap())
                    }
                    EncoderLayer::Gin(m) => EncoderLayerVars::Gin(m.vars_from_flat(flat)),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                EncoderLayer::Gcn(d) => vec![&d.weight, &d.bias],
                EncoderLayer::Gin(m) => m.tensors(),
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                EncoderLayer::Gcn(d) => vec![&mut d.weight, &mut d.bias],
                EncoderLayer::Gin(m) => m.tensors_mut(),
            })
            .collect()
    }
}

/// Tape handles for an encoder's parameters.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pub layers: Vec<EncoderLayerVars>,
}

#[derive(Debug, Clone)]
pub enum EncoderLayerVars {
    Gcn(Var, Var),
    Gin(MlpVars),
}

impl EncoderVars {
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                EncoderLayerVars::Gcn(w, b) => vec![
                    tape.grad(*w).cloned().unwrap_or_else(|| zeros_like(tape.value(*w))),
                    tape.grad(*b).cloned().unwrap_or_else(|| zeros_like(tape.value(*b))),
                ],
                EncoderLayerVars::Gin(m) => m.grads(tape),
            })
            .collect()
    }
}

/// Symmetric normalized adjacency with self-loops:
/// A_hat = D~^{-1/2} (A + I) D~^{-1/2}.
pub fn normalize_adjacency(g: &Graph) -> Tensor {
    let n = g.n_nodes();
    let mut a = Tensor::identity(n);
    for &(u, v) in &g.edges {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = (0..n).map(|j| a.get(i, j)).sum();
            1.0 / deg.sqrt()
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    a
}

/// Raw adjacency without self-loops, used by GIN aggregation.
pub fn raw_adjacency(g: &Graph) -> Tensor {
    let n = g.n_nodes();
    let mut a = Tensor::zeros(n, n);
    for &(u, v) in &g.edges {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    a
}

/// One GCN layer on the tape: ReLU(A_hat * H * W + b).
pub fn gcn_layer(tape: &mut Tape, a_hat: Var, h: Var, w: Var, b: Var) -> KernelResult<Var> {
    let hw = tape.matmul(h, w)?;
    let ahw = tape.matmul(a_hat, hw)?;
    let pre = tape.add_row_broadcast(ahw, b)?;
    tape.relu(pre)
}

/// One GIN layer on the tape: MLP((1 + eps) * H + A * H).
pub fn gin_layer(
    tape: &mut Tape,
    adj: Var,
    h: Var,
    mlp: &MlpVars,
    epsilon: f64,
) -> KernelResult<Var> {
    let self_part = tape.scalar_mul(h, 1.0 + epsilon)?;
    let agg = tape.matmul(adj, h)?;
    let combined = tape.add(self_part, agg)?;
    mlp.forward(tape, combined)
}

/// Column-wise mean or sum: (n x d) -> (1 x d).
pub fn readout(tape: &mut Tape, h: Var, mode: ReadoutMode) -> KernelResult<Var> {
    match mode {
        ReadoutMode::Mean => tape.col_mean(h),
        ReadoutMode::Sum => tape.col_sum(h),
    }
}

/// Full encoding of one graph: n_layers of message passing, then readout.
/// Returns a (1 x hidden_dim) node.
pub fn encode_graph(
    tape: &mut Tape,
    g: &Graph,
    cfg: &EncoderConfig,
    params: &EncoderVars,
) -> KernelResult<Var> {
    let prop = match cfg.backbone {
        Backbone::Gcn => normalize_adjacency(g),
        Backbone::Gin => raw_adjacency(g),
    };
    let prop = tape.constant(prop);
    let mut h = tape.constant(g.node_features.clone());
    for layer in &params.layers {
        h = match layer {
            EncoderLayerVars::Gcn(w, b) => gcn_layer(tape, prop, h, *w, *b)?,
            EncoderLayerVars::Gin(mlp) => gin_layer(tape, prop, h, mlp, cfg.gin_epsilon)?,
        };
    }
    readout(tape, h, cfg.readout)
}
