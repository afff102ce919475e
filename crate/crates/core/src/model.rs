//! The three branch objectives (graph classification, pairwise relation
//! prediction, subgraph-bag MIL), their joint loss, the pluggable imbalanced
//! losses, and combined inference.

use crate::encoder::{encode_graph, EncoderConfig, EncoderParams, EncoderVars, Mlp, MlpVars};
use crate::graph::Graph;
use crate::sampling::{sample_subgraph_bag, BagPair, SamplingError, SubgraphBag};
use crate::tensor::{
    binary_cross_entropy_with_logits, focal_loss, la_loss, row_l2_topk_mean,
    softmax_cross_entropy, KernelError, KernelResult, Tape, Tensor, Var,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type ModelResult<T> = Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseLoss {
    CrossEntropy,
    Focal,
    LogitAdjusted,
}

/// Loss weights and plug-in parameters, with the experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub base_loss: BaseLoss,
    /// weight of the graph branch; 1 except in ablations
    pub graph_weight: f64,
    /// lambda: weight of the pairwise branch
    pub lambda: f64,
    /// beta: weight of the subgraph branch
    pub beta: f64,
    /// top-k size for MIL scoring and the magnitude regularizer
    pub k: usize,
    /// margin of the feature-magnitude hinge
    pub margin: f64,
    /// eta: weight of the magnitude regularizer inside L^s
    pub eta: f64,
    pub focal_gamma: f64,
    /// per-class focal weights; uniform 1.0 unless configured
    pub focal_alpha: [f64; 2],
    pub la_tau: f64,
    pub class_priors: [f64; 2],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            base_loss: BaseLoss::CrossEntropy,
            graph_weight: 1.0,
            lambda: 1.0,
            beta: 1.0,
            k: 3,
            margin: 100.0,
            eta: 1e-4,
            focal_gamma: 2.0,
            focal_alpha: [1.0, 1.0],
            la_tau: 1.0,
            class_priors: [0.5, 0.5],
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> ModelResult<()> {
        if self.k == 0 {
            return Err(ModelError::InvalidConfig("k must be >= 1".into()));
        }
        for (name, v) in [
            ("graph_weight", self.graph_weight),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("margin", self.margin),
            ("eta", self.eta),
        ] {
            if v < 0.0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 0")));
            }
        }
        if (self.class_priors[0] + self.class_priors[1] - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidConfig("class priors must sum to 1".into()));
        }
        Ok(())
    }

    /// Apply the base loss to 2-class logits.
    pub fn apply_base(
        &self,
        tape: &mut Tape,
        logits: Var,
        labels: &[usize],
    ) -> KernelResult<Var> {
        match self.base_loss {
            BaseLoss::CrossEntropy => softmax_cross_entropy(tape, logits, labels, None),
            BaseLoss::Focal => {
                focal_loss(tape, logits, labels, self.focal_gamma, &self.focal_alpha)
            }
            BaseLoss::LogitAdjusted => {
                la_loss(tape, logits, labels, self.la_tau, &self.class_priors)
            }
        }
    }

    /// Per-class focal weights from class frequencies: inverse frequency
    /// normalized to mean one, so balanced data yields uniform weights.
    pub fn focal_alpha_from_frequencies(freqs: [f64; 2]) -> [f64; 2] {
        let inv = [1.0 / freqs[0].max(1e-12), 1.0 / freqs[1].max(1e-12)];
        let mean = (inv[0] + inv[1]) / 2.0;
        [inv[0] / mean, inv[1] / mean]
    }
}

/// Structural knobs for the model around the encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Use the graph encoder for subgraphs too (theta_sgcn == theta_gcn).
    pub share_encoders: bool,
    /// Hidden width of the three MLP heads.
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { encoder: EncoderConfig::default(), share_encoders: false, head_hidden: 64 }
    }
}

/// All trainable parameter groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder_graph: EncoderParams,
    pub encoder_subgraph: EncoderParams,
    pub head_graph: Mlp,
    pub head_pair: Mlp,
    pub head_subgraph: Mlp,
}

/// Canonical parameter-group names, in flattening order.
pub const PARAM_GROUPS: [&str; 5] =
    ["encoder_graph", "encoder_subgraph", "head_graph", "head_pair", "head_subgraph"];

impl ModelParams {
    pub fn init(cfg: &ModelConfig, feature_dim: usize, rng: &mut impl Rng) -> Self {
        let d = cfg.encoder.hidden_dim;
        let h = cfg.head_hidden;
        Self {
            encoder_graph: EncoderParams::init(&cfg.encoder, feature_dim, rng),
            encoder_subgraph: EncoderParams::init(&cfg.encoder, feature_dim, rng),
            head_graph: Mlp::init(&[d, h, 2], rng),
            head_pair: Mlp::init(&[2 * d, h, 2], rng),
            head_subgraph: Mlp::init(&[d, h, 1], rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder_graph.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder_graph.out_dim()
    }

    /// Flat parameter list in a fixed, documented order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.encoder_graph.tensors();
        out.extend(self.encoder_subgraph.tensors());
        out.extend(self.head_graph.tensors());
        out.extend(self.head_pair.tensors());
        out.extend(self.head_subgraph.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder_graph.tensors_mut();
        out.extend(self.encoder_subgraph.tensors_mut());
        out.extend(self.head_graph.tensors_mut());
        out.extend(self.head_pair.tensors_mut());
        out.extend(self.head_subgraph.tensors_mut());
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.shape()).collect()
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            encoder_graph: self.encoder_graph.register(tape),
            encoder_subgraph: self.encoder_subgraph.register(tape),
            head_graph: self.head_graph.register(tape),
            head_pair: self.head_pair.register(tape),
            head_subgraph: self.head_subgraph.register(tape),
        }
    }

    /// Rebuild the var structure from a flat var list ordered like
    /// `tensors`. Used by gradient-check closures that register parameters
    /// themselves.
    pub fn vars_from_flat(&self, flat: &[Var]) -> ModelVars {
        let mut it = flat.iter();
        let vars = ModelVars {
            encoder_graph: self.encoder_graph.vars_from_flat(&mut it),
            encoder_subgraph: self.encoder_subgraph.vars_from_flat(&mut it),
            head_graph: self.head_graph.vars_from_flat(&mut it),
            head_pair: self.head_pair.vars_from_flat(&mut it),
            head_subgraph: self.head_subgraph.vars_from_flat(&mut it),
        };
        assert!(it.next().is_none(), "flat var list longer than parameter list");
        vars
    }
}

/// Tape handles for every parameter group.
pub struct ModelVars {
    pub encoder_graph: EncoderVars,
    pub encoder_subgraph: EncoderVars,
    pub head_graph: MlpVars,
    pub head_pair: MlpVars,
    pub head_subgraph: MlpVars,
}

impl ModelVars {
    /// Gradients in the same order as [`ModelParams::tensors`]. Parameters a
    /// branch never touched contribute zero tensors.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        let mut out = self.encoder_graph.grads(tape);
        out.extend(self.encoder_subgraph.grads(tape));
        out.extend(self.head_graph.grads(tape));
        out.extend(self.head_pair.grads(tape));
        out.extend(self.head_subgraph.grads(tape));
        out
    }

    /// Encoder used for subgraph bags (shared or separate).
    pub fn subgraph_encoder(&self, share: bool) -> &EncoderVars {
        if share {
            &self.encoder_graph
        } else {
            &self.encoder_subgraph
        }
    }
}

/// Graph branch: 2-class logits for a stack of graph embeddings plus the
/// mean base loss. `h_batch` is (n x d), one row per (possibly duplicated)
/// batch member.
pub fn graph_branch(
    tape: &mut Tape,
    h_batch: Var,
    labels: &[u8],
    head: &MlpVars,
    cfg: &LossConfig,
) -> ModelResult<(Var, Var)> {
    let class_ids: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    if let Some(&bad) = class_ids.iter().find(|&&l| l > 1) {
        return Err(KernelError::LabelOutOfRange { label: bad, classes: 2 }.into());
    }
    let logits = head.forward(tape, h_batch)?;
    let loss = cfg.apply_base(tape, logits, &class_ids)?;
    Ok((logits, loss))
}

/// Pairwise branch: each pair's embeddings are concatenated (left then
/// right), run through the pair head, and scored with the mean base loss
/// against the surrogate labels.
pub fn pair_branch(
    tape: &mut Tape,
    pairs: &[(Var, Var, u8)],
    head: &MlpVars,
    cfg: &LossConfig,
) -> ModelResult<(Var, Var)> {
    if pairs.is_empty() {
        return Err(ModelError::InvalidConfig("pair branch needs at least one pair".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for &(left, right, _) in pairs {
        rows.push(tape.concat_cols(left, right)?);
    }
    let stacked = tape.stack_rows(&rows)?;
    let logits = head.forward(tape, stacked)?;
    let labels: Vec<usize> = pairs.iter().map(|&(_, _, y)| y as usize).collect();
    let loss = cfg.apply_base(tape, logits, &labels)?;
    Ok((logits, loss))
}

/// Score every subgraph embedding of a bag with the subgraph head:
/// (q x d) -> (q x 1).
pub fn bag_scores(tape: &mut Tape, bag_emb: Var, head: &MlpVars) -> KernelResult<Var> {
    head.forward(tape, bag_emb)
}

/// MIL logit for a bag pair: top-k mean over the union of both bags'
/// per-subgraph scores.
pub fn mil_score(
    tape: &mut Tape,
    left_scores: Var,
    right_scores: Var,
    k: usize,
) -> KernelResult<Var> {
    let union = tape.stack_rows(&[left_scores, right_scores])?;
    tape.topk_mean(union, k)
}

/// Mean binary cross-entropy of the bag-pair logits against their surrogate
/// labels.
pub fn mil_loss(tape: &mut Tape, pair_logits: &[Var], labels: &[u8]) -> KernelResult<Var> {
    let stacked = tape.stack_rows(pair_logits)?;
    let targets: Vec<f64> = labels.iter().map(|&y| y as f64).collect();
    binary_cross_entropy_with_logits(tape, stacked, &targets)
}

/// Feature-magnitude hinge: mean over paired (minority, majority) bags of
/// max(0, margin - g_k(minority) + g_k(majority)), with g_k the mean of the
/// top-k row L2 norms of a bag's embedding matrix.
pub fn magnitude_reg(
    tape: &mut Tape,
    minority_bag_embs: &[Var],
    majority_bag_embs: &[Var],
    k: usize,
    margin: f64,
) -> KernelResult<Option<Var>> {
    debug_assert_eq!(minority_bag_embs.len(), majority_bag_embs.len());
    if minority_bag_embs.is_empty() {
        return Ok(None);
    }
    let mut hinges = Vec::with_capacity(minority_bag_embs.len());
    for (&min_emb, &maj_emb) in minority_bag_embs.iter().zip(majority_bag_embs) {
        let k_min = k.min(tape.value(min_emb).rows());
        let k_maj = k.min(tape.value(maj_emb).rows());
        let g_min = row_l2_topk_mean(tape, min_emb, k_min)?;
        let g_maj = row_l2_topk_mean(tape, maj_emb, k_maj)?;
        let gap = tape.sub(g_maj, g_min)?;
        let shifted = tape.add_scalar(gap, margin)?;
        hinges.push(tape.relu(shifted)?);
    }
    let stacked = tape.stack_rows(&hinges)?;
    Ok(Some(tape.mean_all(stacked)?))
}

/// Everything the subgraph branch produces for one batch of bag pairs.
pub struct SubgraphBranchOutput {
    pub loss: Var,
    pub mil: Var,
    pub reg: Option<Var>,
}

/// Subgraph branch over encoded bags: L^s = L_mil + eta * L_reg. `bag_embs`
/// and `bag_labels` are indexed by the ids inside `bag_pairs`.
pub fn subgraph_branch(
    tape: &mut Tape,
    bag_embs: &[Var],
    bag_labels: &[u8],
    bag_pairs: &[BagPair],
    head: &MlpVars,
    cfg: &LossConfig,
) -> ModelResult<SubgraphBranchOutput> {
    if bag_pairs.is_empty() {
        return Err(ModelError::InvalidConfig("subgraph branch needs bag pairs".into()));
    }
    let mut scores = Vec::with_capacity(bag_embs.len());
    for &emb in bag_embs {
        scores.push(bag_scores(tape, emb, head)?);
    }
    let mut logits = Vec::with_capacity(bag_pairs.len());
    let mut labels = Vec::with_capacity(bag_pairs.len());
    for p in bag_pairs {
        let k = cfg.k.min(tape.value(scores[p.left]).rows() + tape.value(scores[p.right]).rows());
        logits.push(mil_score(tape, scores[p.left], scores[p.right], k)?);
        labels.push(p.surrogate_label);
    }
    let mil = mil_loss(tape, &logits, &labels)?;

    // the hinge runs over the mixed-class pairs present in the bag-pair set
    let mut min_embs = Vec::new();
    let mut maj_embs = Vec::new();
    for p in bag_pairs {
        let (cl, cr) = (bag_labels[p.left], bag_labels[p.right]);
        if cl != cr {
            let (min_i, maj_i) = if cl == 1 { (p.left, p.right) } else { (p.right, p.left) };
            min_embs.push(bag_embs[min_i]);
            maj_embs.push(bag_embs[maj_i]);
        }
    }
    let reg = magnitude_reg(tape, &min_embs, &maj_embs, cfg.k, cfg.margin)?;
    let loss = match reg {
        Some(r) if cfg.eta != 0.0 => {
            let scaled = tape.scalar_mul(r, cfg.eta)?;
            tape.add(mil, scaled)?
        }
        _ => mil,
    };
    Ok(SubgraphBranchOutput { loss, mil, reg })
}

/// Joint objective: graph_weight * L^g + lambda * L^p + beta * L^s, with
/// absent branches simply omitted.
pub fn total_loss(
    tape: &mut Tape,
    graph_loss: Option<Var>,
    pair_loss: Option<Var>,
    subgraph_loss: Option<Var>,
    cfg: &LossConfig,
) -> ModelResult<Var> {
    let mut acc: Option<Var> = None;
    for (term, weight) in [
        (graph_loss, cfg.graph_weight),
        (pair_loss, cfg.lambda),
        (subgraph_loss, cfg.beta),
    ] {
        let Some(v) = term else { continue };
        let scaled = if weight == 1.0 { v } else { tape.scalar_mul(v, weight)? };
        acc = Some(match acc {
            Some(a) => tape.add(a, scaled)?,
            None => scaled,
        });
    }
    acc.ok_or_else(|| ModelError::InvalidConfig("all branches disabled".into()))
}

/// Probability-space combination of the three branch outputs for one graph:
/// r = (w_g * p_g + lambda * p_p + beta * p_s) / (w_g + lambda + beta),
/// with the pair branch fed the self-pair (h, h) and the subgraph branch
/// scored on the graph's own bag (top-min(k, q) of its q scores).
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub minority_probability: f64,
    pub class: u8,
    pub p_graph: f64,
    pub p_pair: f64,
    pub p_subgraph: f64,
}

/// Deterministic bag seed for inference, derived from the graph id alone.
pub fn inference_bag_seed(graph_id: usize) -> u64 {
    // splitmix64 of a fixed constant xor the id
    let mut z = (graph_id as u64) ^ 0x9e3779b97f4a7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Knobs the prediction path needs besides the parameters.
#[derive(Debug, Clone)]
pub struct PredictConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    /// bag size for the inference-time subgraph bag
    pub q: usize,
    pub node_drop: f64,
    pub edge_drop: f64,
}

pub fn predict(
    g: &Graph,
    params: &ModelParams,
    cfg: &PredictConfig,
    threshold: f64,
) -> ModelResult<Prediction> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ModelError::InvalidConfig(format!("threshold {threshold} outside [0, 1]")));
    }
    let weights =
        (cfg.loss.graph_weight, cfg.loss.lambda, cfg.loss.beta);
    let denom = weights.0 + weights.1 + weights.2;
    if denom <= 0.0 {
        return Err(ModelError::InvalidConfig("all prediction weights are zero".into()));
    }
    if params.feature_dim() != g.feature_dim() {
        return Err(KernelError::ShapeMismatch(format!(
            "model expects feature width {}, graph has {}",
            params.feature_dim(),
            g.feature_dim()
        ))
        .into());
    }

    let mut tape = Tape::new();
    let vars = params.register(&mut tape);

    // the graph and pair branches share one embedding
    let h = if weights.0 > 0.0 || weights.1 > 0.0 {
        Some(encode_graph(&mut tape, g, &cfg.model.encoder, &vars.encoder_graph)?)
    } else {
        None
    };
    let p_graph = if weights.0 > 0.0 {
        let logits = vars.head_graph.forward(&mut tape, h.unwrap())?;
        softmax_minority(&mut tape, logits)?
    } else {
        0.0
    };
    let p_pair = if weights.1 > 0.0 {
        let hh = tape.concat_cols(h.unwrap(), h.unwrap())?;
        let logits = vars.head_pair.forward(&mut tape, hh)?;
        softmax_minority(&mut tape, logits)?
    } else {
        0.0
    };
    let p_subgraph = if weights.2 > 0.0 {
        let bag = sample_subgraph_bag(
            g,
            cfg.q,
            cfg.node_drop,
            cfg.edge_drop,
            inference_bag_seed(g.graph_id),
        )?;
        let enc = vars.subgraph_encoder(cfg.model.share_encoders);
        let emb = encode_bag(&mut tape, &bag, &cfg.model.encoder, enc)?;
        let scores = bag_scores(&mut tape, emb, &vars.head_subgraph)?;
        let k = cfg.loss.k.min(cfg.q);
        let logit = tape.topk_mean(scores, k)?;
        tape.value(logit).item().map(sigmoid)?
    } else {
        0.0
    };

    let r = (weights.0 * p_graph + weights.1 * p_pair + weights.2 * p_subgraph) / denom;
    Ok(Prediction {
        minority_probability: r,
        class: u8::from(r >= threshold),
        p_graph,
        p_pair,
        p_subgraph,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_minority(tape: &mut Tape, logits: Var) -> KernelResult<f64> {
    let logp = tape.log_softmax_rows(logits)?;
    Ok(tape.value(logp).get(0, 1).exp())
}

/// Encode every subgraph of a bag and stack the embeddings: (q x d).
pub fn encode_bag(
    tape: &mut Tape,
    bag: &SubgraphBag,
    cfg: &EncoderConfig,
    enc: &EncoderVars,
) -> KernelResult<Var> {
    let mut rows = Vec::with_capacity(bag.q());
    for sub in &bag.subgraphs {
        rows.push(encode_graph(tape, sub, cfg, enc)?);
    }
    tape.stack_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Backbone, ReadoutMode};
    use crate::graph::Graph;
    use crate::sampling::make_bag_pairs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn micro_model_cfg() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                backbone: Backbone::Gcn,
                n_layers: 2,
                hidden_dim: 6,
                readout: ReadoutMode::Mean,
                gin_epsilon: 0.0,
            },
            share_encoders: false,
            head_hidden: 5,
        }
    }

    fn mk_graph(n: usize, edges: &[(usize, usize)], label: u8, id: usize) -> Graph {
        let mut f = Tensor::zeros(n, 3);
        for i in 0..n {
            f.set(i, (i + id) % 3, 1.0);
        }
        Graph::new(f, edges.to_vec(), label, id).unwrap()
    }

    #[test]
    fn graph_branch_zero_head_is_ln2() {
        let cfg = LossConfig::default();
        let head = Mlp {
            layers: vec![
                crate::encoder::DenseLayer { weight: Tensor::zeros(4, 3), bias: Tensor::zeros(1, 3) },
                crate::encoder::DenseLayer { weight: Tensor::zeros(3, 2), bias: Tensor::zeros(1, 2) },
            ],
        };
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::filled(3, 4, 0.7));
        let hv = head.register(&mut tape);
        let (logits, loss) = graph_branch(&mut tape, h, &[0, 1, 0], &hv, &cfg).unwrap();
        assert_eq!(tape.value(logits).shape(), (3, 2));
        assert!((tape.value(loss).item().unwrap() - LN2).abs() < 1e-12);
    }

    /// Direct-formula oracle: MLP forward with plain loops, then mean CE.
    #[test]
    fn graph_branch_matches_hand_evaluated_ce() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let head = Mlp::init(&[3, 4, 2], &mut rng);
        let h = crate::encoder::xavier_uniform(4, 3, &mut rng);
        let labels = [0u8, 1, 1, 0];

        // hand evaluation with nested loops, no tape involved
        let dense = |x: &[f64], layer: &crate::encoder::DenseLayer| -> Vec<f64> {
            let (w, b) = (&layer.weight, &layer.bias);
            (0..w.cols())
                .map(|j| {
                    (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum::<f64>() + b.get(0, j)
                })
                .collect()
        };
        let mut want = 0.0;
        for i in 0..4 {
            let hidden: Vec<f64> =
                dense(h.row(i), &head.layers[0]).into_iter().map(|v| v.max(0.0)).collect();
            let logits = dense(&hidden, &head.layers[1]);
            let z: f64 = logits.iter().map(|&v| v.exp()).sum();
            want += -((logits[labels[i] as usize].exp() / z).ln());
        }
        want /= 4.0;

        let mut tape = Tape::new();
        let hv = tape.constant(h);
        let head_vars = head.register(&mut tape);
        let (_, loss) =
            graph_branch(&mut tape, hv, &labels, &head_vars, &LossConfig::default()).unwrap();
        assert!(
            (tape.value(loss).item().unwrap() - want).abs() <= 1e-10,
            "{} vs {}",
            tape.value(loss).item().unwrap(),
            want
        );
    }

    /// Composition oracle for the MIL loss: per-subgraph scores through the
    /// head with plain loops, top-k mean by sorting, then stable BCE.
    #[test]
    fn mil_loss_matches_direct_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let head = Mlp::init(&[3, 4, 1], &mut rng);
        let k = 3usize;
        let q = 4usize;
        let mut pair_logits_direct = Vec::new();
        let mut bag_embs_raw = Vec::new();
        for _ in 0..8 {
            bag_embs_raw.push((
                crate::encoder::xavier_uniform(q, 3, &mut rng),
                crate::encoder::xavier_uniform(q, 3, &mut rng),
            ));
        }
        let labels: Vec<u8> = (0..8).map(|i| u8::from(i % 3 != 0)).collect();

        let dense = |x: &[f64], layer: &crate::encoder::DenseLayer| -> Vec<f64> {
            let (w, b) = (&layer.weight, &layer.bias);
            (0..w.cols())
                .map(|j| {
                    (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum::<f64>() + b.get(0, j)
                })
                .collect()
        };
        let score = |row: &[f64]| -> f64 {
            let hidden: Vec<f64> =
                dense(row, &head.layers[0]).into_iter().map(|v| v.max(0.0)).collect();
            dense(&hidden, &head.layers[1])[0]
        };
        for (left, right) in &bag_embs_raw {
            let mut scores: Vec<f64> = (0..q).map(|i| score(left.row(i))).collect();
            scores.extend((0..q).map(|i| score(right.row(i))));
            scores.sort_by(|a, b| b.partial_cmp(a).unwrap());
            pair_logits_direct.push(scores[..k].iter().sum::<f64>() / k as f64);
        }
        let mut want = 0.0;
        for (&z, &y) in pair_logits_direct.iter().zip(&labels) {
            // stable BCE: softplus(z) - y*z
            want += (z.max(0.0) + (-z.abs()).exp().ln_1p()) - y as f64 * z;
        }
        want /= 8.0;

        let mut tape = Tape::new();
        let head_vars = head.register(&mut tape);
        let mut logits = Vec::new();
        for (left, right) in &bag_embs_raw {
            let lv = tape.constant(left.clone());
            let rv = tape.constant(right.clone());
            let ls = bag_scores(&mut tape, lv, &head_vars).unwrap();
            let rs = bag_scores(&mut tape, rv, &head_vars).unwrap();
            logits.push(mil_score(&mut tape, ls, rs, k).unwrap());
        }
        let got = mil_loss(&mut tape, &logits, &labels).unwrap();
        assert!(
            (tape.value(got).item().unwrap() - want).abs() <= 1e-10,
            "{} vs {}",
            tape.value(got).item().unwrap(),
            want
        );
    }

    #[test]
    fn graph_branch_rejects_bad_label() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = Mlp::init(&[4, 3, 2], &mut rng);
        let mut tape = Tape::new();
        let h = tape.constant(Tensor::filled(1, 4, 0.1));
        let hv = head.register(&mut tape);
        assert!(graph_branch(&mut tape, h, &[2], &hv, &cfg).is_err());
    }

    #[test]
    fn pair_branch_zero_embeddings_is_ln2() {
        let cfg = LossConfig::default();
        let head = Mlp {
            layers: vec![crate::encoder::DenseLayer {
                weight: Tensor::zeros(8, 2),
                bias: Tensor::zeros(1, 2),
            }],
        };
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(1, 4));
        let hv = head.register(&mut tape);
        let (_, loss) = pair_branch(&mut tape, &[(z, z, 0), (z, z, 1)], &hv, &cfg).unwrap();
        assert!((tape.value(loss).item().unwrap() - LN2).abs() < 1e-12);
    }

    #[test]
    fn pair_concat_order_matters_with_random_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let head = Mlp::init(&[8, 5, 2], &mut rng);
        let mut tape = Tape::new();
        let a = tape.constant(crate::encoder::xavier_uniform(1, 4, &mut rng));
        let b = tape.constant(crate::encoder::xavier_uniform(1, 4, &mut rng));
        let hv = head.register(&mut tape);
        let ab = tape.concat_cols(a, b).unwrap();
        let ba = tape.concat_cols(b, a).unwrap();
        let la = hv.forward(&mut tape, ab).unwrap();
        let lb = hv.forward(&mut tape, ba).unwrap();
        let diff: f64 = tape
            .value(la)
            .as_slice()
            .iter()
            .zip(tape.value(lb).as_slice())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "concat order should matter, diff {diff}");
    }

    #[test]
    fn mil_score_constant_scores() {
        let mut tape = Tape::new();
        let left = tape.constant(Tensor::filled(4, 1, 0.37));
        let right = tape.constant(Tensor::filled(4, 1, 0.37));
        for k in [1, 3, 8] {
            let s = mil_score(&mut tape, left, right, k).unwrap();
            assert!((tape.value(s).item().unwrap() - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn mil_score_k_equals_2q_is_mean() {
        let mut tape = Tape::new();
        let left = tape.constant(Tensor::new(2, 1, vec![1.0, 3.0]).unwrap());
        let right = tape.constant(Tensor::new(2, 1, vec![5.0, 7.0]).unwrap());
        let s = mil_score(&mut tape, left, right, 4).unwrap();
        assert!((tape.value(s).item().unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(
            mil_score(&mut tape, left, right, 5),
            Err(KernelError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn mil_loss_values() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let l = mil_loss(&mut tape, &[z], &[1]).unwrap();
        assert!((tape.value(l).item().unwrap() - LN2).abs() < 1e-12);
        let big = tape.constant(Tensor::scalar(30.0));
        let l2 = mil_loss(&mut tape, &[big], &[1]).unwrap();
        assert!(tape.value(l2).item().unwrap() < 1e-12);
    }

    #[test]
    fn magnitude_reg_hinge_values() {
        // g_k(min)=5, g_k(maj)=1, m=3 -> 0 ; g_k(min)=1, g_k(maj)=2, m=3 -> 4
        let mut tape = Tape::new();
        let min1 = tape.constant(Tensor::new(1, 2, vec![3.0, 4.0]).unwrap());
        let maj1 = tape.constant(Tensor::new(1, 2, vec![1.0, 0.0]).unwrap());
        let r1 = magnitude_reg(&mut tape, &[min1], &[maj1], 1, 3.0).unwrap().unwrap();
        assert_eq!(tape.value(r1).item().unwrap(), 0.0);

        let min2 = tape.constant(Tensor::new(1, 2, vec![1.0, 0.0]).unwrap());
        let maj2 = tape.constant(Tensor::new(1, 2, vec![2.0, 0.0]).unwrap());
        let r2 = magnitude_reg(&mut tape, &[min2], &[maj2], 1, 3.0).unwrap().unwrap();
        assert_eq!(tape.value(r2).item().unwrap(), 4.0);

        assert!(magnitude_reg(&mut tape, &[], &[], 1, 3.0).unwrap().is_none());
    }

    fn encoded_bags(
        tape: &mut Tape,
        params: &ModelParams,
        mcfg: &ModelConfig,
        labels: &[u8],
    ) -> (Vec<Var>, Vec<u8>, Vec<SubgraphBag>) {
        let vars = params.register(tape);
        let mut embs = Vec::new();
        let mut bags = Vec::new();
        for (i, &label) in labels.iter().enumerate() {
            let g = mk_graph(5 + i % 3, &[(0, 1), (1, 2), (2, 3), (3, 4)], label, i);
            let bag = sample_subgraph_bag(&g, 4, 0.2, 0.2, i as u64 + 10).unwrap();
            let enc = vars.subgraph_encoder(mcfg.share_encoders);
            embs.push(encode_bag(tape, &bag, &mcfg.encoder, enc).unwrap());
            bags.push(bag);
        }
        (embs, labels.to_vec(), bags)
    }

    #[test]
    fn subgraph_branch_composition_matches_parts() {
        let mcfg = micro_model_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&mcfg, 3, &mut rng);
        let cfg = LossConfig { k: 2, eta: 0.3, margin: 1.0, ..Default::default() };
        cfg.validate().unwrap();

        let mut tape = Tape::new();
        let head_vars = params.head_subgraph.register(&mut tape);
        let (embs, labels, bags) = encoded_bags(&mut tape, &params, &mcfg, &[0, 0, 1, 1]);
        let pairs = make_bag_pairs(&bags, 6, 77).unwrap();
        let out = subgraph_branch(&mut tape, &embs, &labels, &pairs, &head_vars, &cfg).unwrap();
        let mil = tape.value(out.mil).item().unwrap();
        let reg = out.reg.map(|r| tape.value(r).item().unwrap()).unwrap_or(0.0);
        let total = tape.value(out.loss).item().unwrap();
        assert!((total - (mil + cfg.eta * reg)).abs() <= 1e-12);

        // eta = 0 -> L^s == L_mil
        let cfg0 = LossConfig { eta: 0.0, ..cfg };
        let mut tape2 = Tape::new();
        let head_vars2 = params.head_subgraph.register(&mut tape2);
        let (embs2, labels2, bags2) = encoded_bags(&mut tape2, &params, &mcfg, &[0, 0, 1, 1]);
        let pairs2 = make_bag_pairs(&bags2, 6, 77).unwrap();
        let out2 =
            subgraph_branch(&mut tape2, &embs2, &labels2, &pairs2, &head_vars2, &cfg0).unwrap();
        assert_eq!(
            tape2.value(out2.loss).item().unwrap(),
            tape2.value(out2.mil).item().unwrap()
        );
    }

    #[test]
    fn total_loss_degenerate_and_linear() {
        let mut tape = Tape::new();
        let lg = tape.constant(Tensor::scalar(0.8));
        let lp = tape.constant(Tensor::scalar(0.5));
        let ls = tape.constant(Tensor::scalar(0.25));

        let only_g = LossConfig { lambda: 0.0, beta: 0.0, ..Default::default() };
        let t = total_loss(&mut tape, Some(lg), None, None, &only_g).unwrap();
        assert_eq!(tape.value(t).item().unwrap(), 0.8);

        let all = LossConfig::default();
        let t2 = total_loss(&mut tape, Some(lg), Some(lp), Some(ls), &all).unwrap();
        assert!((tape.value(t2).item().unwrap() - 1.55).abs() < 1e-15);

        let weighted = LossConfig { lambda: 0.5, beta: 0.25, ..Default::default() };
        let t3 = total_loss(&mut tape, Some(lg), Some(lp), Some(ls), &weighted).unwrap();
        assert!((tape.value(t3).item().unwrap() - (0.8 + 0.25 + 0.0625)).abs() < 1e-15);

        assert!(total_loss(&mut tape, None, None, None, &all).is_err());
    }

    #[test]
    fn predict_info() {
        let mcfg = micro_model_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ModelParams::init(&mcfg, 3, &mut rng);
        let pcfg = PredictConfig {
            model: mcfg,
            loss: LossConfig::default(),
            q: 4,
            node_drop: 0.2,
            edge_drop: 0.2,
        };
        let g = mk_graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)], 1, 42);
        let p = predict(&g, &params, &pcfg, 0.5).unwrap();
        assert!(p.minority_probability >= 0.0 && p.minority_probability <= 1.0);
        // deterministic: same call gives the same answer
        let p2 = predict(&g, &params, &pcfg, 0.5).unwrap();
        assert_eq!(p.minority_probability, p2.minority_probability);

        // graph-only config is driven by p_g alone
        let only_g = PredictConfig {
            loss: LossConfig { lambda: 0.0, beta: 0.0, ..Default::default() },
            ..pcfg.clone()
        };
        let pg = predict(&g, &params, &only_g, 0.5).unwrap();
        assert_eq!(pg.minority_probability, pg.p_graph);
    }

    #[test]
    fn predict_is_permutation_invariant() {
        use rand::seq::SliceRandom;
        let mcfg = micro_model_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = ModelParams::init(&mcfg, 3, &mut rng);
        let pcfg = PredictConfig {
            model: mcfg,
            loss: LossConfig::default(),
            q: 4,
            node_drop: 0.0, // keep the bag the full graph so relabeling commutes
            edge_drop: 0.0,
        };
        let g = mk_graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)], 1, 5);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let mut feat = Tensor::zeros(6, 3);
        for (old, &new) in perm.iter().enumerate() {
            for j in 0..3 {
                feat.set(new, j, g.node_features.get(old, j));
            }
        }
        let edges: Vec<(usize, usize)> = g.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let pg = Graph::new(feat, edges, 1, 5).unwrap();
        let a = predict(&g, &params, &pcfg, 0.5).unwrap();
        let b = predict(&pg, &params, &pcfg, 0.5).unwrap();
        assert!((a.minority_probability - b.minority_probability).abs() <= 1e-9);
    }

    #[test]
    fn predict_rejects_weightless_config() {
        let mcfg = micro_model_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ModelParams::init(&mcfg, 3, &mut rng);
        let pcfg = PredictConfig {
            model: mcfg,
            loss: LossConfig {
                graph_weight: 0.0,
                lambda: 0.0,
                beta: 0.0,
                ..Default::default()
            },
            q: 4,
            node_drop: 0.2,
            edge_drop: 0.2,
        };
        let g = mk_graph(4, &[(0, 1), (1, 2)], 0, 0);
        assert!(predict(&g, &params, &pcfg, 0.5).is_err());
    }

    #[test]
    fn focal_alpha_from_balanced_frequencies_is_uniform() {
        assert_eq!(LossConfig::focal_alpha_from_frequencies([0.5, 0.5]), [1.0, 1.0]);
        let a = LossConfig::focal_alpha_from_frequencies([0.9, 0.1]);
        assert!((a[0] + a[1] - 2.0).abs() < 1e-12);
        assert!(a[1] > a[0]);
    }
}
