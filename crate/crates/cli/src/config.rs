//! Resolution of model/loss/train configuration from defaults, an optional
//! key=value config file, and command-line flags (flags win).

use anyhow::{bail, Context, Result};
use mosgnn_core::encoder::{Backbone, ReadoutMode};
use mosgnn_core::harness::TrainConfig;
use mosgnn_core::model::{BaseLoss, LossConfig, ModelConfig};
use mosgnn_core::tensor::OptimizerKind;
use std::collections::BTreeMap;
use std::path::Path;

/// Flag-level overrides shared by every data-bearing subcommand. `None`
/// means "not set here"; resolution falls back to the config file, then the
/// defaults.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Weight of the pairwise branch (lambda)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the subgraph branch (beta)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the graph branch (used by ablations)
    #[arg(long)]
    pub graph_weight: Option<f64>,
    /// Base classification loss: ce | focal | la
    #[arg(long)]
    pub loss: Option<String>,
    /// Top-k size for MIL scoring
    #[arg(long = "topk")]
    pub k: Option<usize>,
    /// Margin of the feature-magnitude hinge
    #[arg(long)]
    pub margin: Option<f64>,
    /// Weight of the magnitude regularizer inside the subgraph loss
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub focal_gamma: Option<f64>,
    #[arg(long)]
    pub la_tau: Option<f64>,

    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size (default: 256, or 64 for datasets under 1000 graphs)
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Optimizer: adam | sgd (default: by loss)
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub sgd_base_lr: Option<f64>,
    #[arg(long)]
    pub sgd_warmup_epochs: Option<usize>,
    /// Cross-validation folds
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fraction of each fold's training portion held out for validation
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Subgraphs per bag
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub node_drop: Option<f64>,
    #[arg(long)]
    pub edge_drop: Option<f64>,

    /// Encoder backbone: gcn | gin
    #[arg(long)]
    pub backbone: Option<String>,
    /// Message-passing layers
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Readout: mean | sum
    #[arg(long)]
    pub readout: Option<String>,
    #[arg(long)]
    pub gin_epsilon: Option<f64>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    /// Use one shared encoder for graphs and subgraphs
    #[arg(long)]
    pub share_encoders: Option<bool>,

    /// Synthetic dataset: majority count
    #[arg(long)]
    pub synthetic_majority: Option<usize>,
    /// Synthetic dataset: minority count
    #[arg(long)]
    pub synthetic_minority: Option<usize>,
    #[arg(long)]
    pub synthetic_nodes_min: Option<usize>,
    #[arg(long)]
    pub synthetic_nodes_max: Option<usize>,
    /// Synthetic motif: triangle | five-cycle
    #[arg(long)]
    pub synthetic_motif: Option<String>,
    #[arg(long)]
    pub synthetic_noise: Option<f64>,
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
}

/// Parse a plain-text config file of `key = value` lines (the same keys as
/// the long flags, underscores or dashes both accepted; `#` comments).
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let body = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in body.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, got {:?}", path.display(), i + 1, line);
        };
        map.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(map)
}

pub struct Resolved {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub synthetic: mosgnn_core::data::SyntheticSpec,
}

macro_rules! take {
    ($flag:expr, $file:expr, $key:literal, $parse:expr) => {
        match (&$flag, $file.get($key)) {
            (Some(v), _) => Some(v.clone()),
            (None, Some(raw)) => Some(
                $parse(raw).with_context(|| format!("config key {}: bad value {:?}", $key, raw))?,
            ),
            (None, None) => None,
        }
    };
}

/// Merge defaults <- config file <- flags into concrete configs.
pub fn resolve(overrides: &Overrides, file: &BTreeMap<String, String>, seed: u64) -> Result<Resolved> {
    let parse_f64 = |raw: &String| raw.parse::<f64>().map_err(anyhow::Error::from);
    let parse_usize = |raw: &String| raw.parse::<usize>().map_err(anyhow::Error::from);
    let parse_u64 = |raw: &String| raw.parse::<u64>().map_err(anyhow::Error::from);
    let parse_bool = |raw: &String| raw.parse::<bool>().map_err(anyhow::Error::from);
    let parse_string = |raw: &String| Ok::<String, anyhow::Error>(raw.clone());

    let mut loss = LossConfig::default();
    if let Some(v) = take!(overrides.lambda, file, "lambda", parse_f64) {
        loss.lambda = v;
    }
    if let Some(v) = take!(overrides.beta, file, "beta", parse_f64) {
        loss.beta = v;
    }
    if let Some(v) = take!(overrides.graph_weight, file, "graph_weight", parse_f64) {
        loss.graph_weight = v;
    }
    if let Some(v) = take!(overrides.loss, file, "loss", parse_string) {
        loss.base_loss = match v.as_str() {
            "ce" | "cross-entropy" | "cross_entropy" => BaseLoss::CrossEntropy,
            "focal" => BaseLoss::Focal,
            "la" | "logit-adjusted" | "logit_adjusted" => BaseLoss::LogitAdjusted,
            other => bail!("unknown loss {:?} (expected ce | focal | la)", other),
        };
    }
    if let Some(v) = take!(overrides.k, file, "topk", parse_usize) {
        loss.k = v;
    }
    if let Some(v) = take!(overrides.margin, file, "margin", parse_f64) {
        loss.margin = v;
    }
    if let Some(v) = take!(overrides.eta, file, "eta", parse_f64) {
        loss.eta = v;
    }
    if let Some(v) = take!(overrides.focal_gamma, file, "focal_gamma", parse_f64) {
        loss.focal_gamma = v;
    }
    if let Some(v) = take!(overrides.la_tau, file, "la_tau", parse_f64) {
        loss.la_tau = v;
    }

    let mut train = TrainConfig { seed, ..Default::default() };
    if let Some(v) = take!(overrides.epochs, file, "epochs", parse_usize) {
        train.epochs = v;
    }
    if let Some(v) = take!(overrides.batch_size, file, "batch_size", parse_usize) {
        train.batch_size = Some(v);
    }
    if let Some(v) = take!(overrides.lr, file, "lr", parse_f64) {
        train.learning_rate = v;
    }
    if let Some(v) = take!(overrides.optimizer, file, "optimizer", parse_string) {
        train.optimizer = Some(match v.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" | "sgd-warmup" | "sgd_warmup" => OptimizerKind::SgdWarmup,
            other => bail!("unknown optimizer {:?} (expected adam | sgd)", other),
        });
    }
    if let Some(v) = take!(overrides.sgd_base_lr, file, "sgd_base_lr", parse_f64) {
        train.sgd_base_lr = v;
    }
    if let Some(v) = take!(overrides.sgd_warmup_epochs, file, "sgd_warmup_epochs", parse_usize) {
        train.sgd_warmup_epochs = v;
    }
    if let Some(v) = take!(overrides.folds, file, "folds", parse_usize) {
        train.folds = v;
    }
    if let Some(v) = take!(overrides.val_fraction, file, "val_fraction", parse_f64) {
        train.val_fraction = v;
    }
    if let Some(v) = take!(overrides.q, file, "q", parse_usize) {
        train.q = v;
    }
    if let Some(v) = take!(overrides.node_drop, file, "node_drop", parse_f64) {
        train.node_drop = v;
    }
    if let Some(v) = take!(overrides.edge_drop, file, "edge_drop", parse_f64) {
        train.edge_drop = v;
    }

    let mut model = ModelConfig::default();
    if let Some(v) = take!(overrides.backbone, file, "backbone", parse_string) {
        model.encoder.backbone = match v.as_str() {
            "gcn" => Backbone::Gcn,
            "gin" => Backbone::Gin,
            other => bail!("unknown backbone {:?} (expected gcn | gin)", other),
        };
    }
    if let Some(v) = take!(overrides.layers, file, "layers", parse_usize) {
        model.encoder.n_layers = v;
    }
    if let Some(v) = take!(overrides.hidden_dim, file, "hidden_dim", parse_usize) {
        model.encoder.hidden_dim = v;
    }
    if let Some(v) = take!(overrides.readout, file, "readout", parse_string) {
        model.encoder.readout = match v.as_str() {
            "mean" => ReadoutMode::Mean,
            "sum" => ReadoutMode::Sum,
            other => bail!("unknown readout {:?} (expected mean | sum)", other),
        };
    }
    if let Some(v) = take!(overrides.gin_epsilon, file, "gin_epsilon", parse_f64) {
        model.encoder.gin_epsilon = v;
    }
    if let Some(v) = take!(overrides.head_hidden, file, "head_hidden", parse_usize) {
        model.head_hidden = v;
    }
    if let Some(v) = take!(overrides.share_encoders, file, "share_encoders", parse_bool) {
        model.share_encoders = v;
    }

    let mut synthetic = mosgnn_core::data::SyntheticSpec { seed, ..Default::default() };
    if let Some(v) = take!(overrides.synthetic_majority, file, "synthetic_majority", parse_usize) {
        synthetic.n_majority = v;
    }
    if let Some(v) = take!(overrides.synthetic_minority, file, "synthetic_minority", parse_usize) {
        synthetic.n_minority = v;
    }
    if let Some(v) = take!(overrides.synthetic_nodes_min, file, "synthetic_nodes_min", parse_usize) {
        synthetic.nodes_min = v;
    }
    if let Some(v) = take!(overrides.synthetic_nodes_max, file, "synthetic_nodes_max", parse_usize) {
        synthetic.nodes_max = v;
    }
    if let Some(v) = take!(overrides.synthetic_motif, file, "synthetic_motif", parse_string) {
        synthetic.motif = match v.as_str() {
            "triangle" | "triangle-rich" | "triangle_rich" => mosgnn_core::data::Motif::TriangleRich,
            "five-cycle" | "five_cycle" => mosgnn_core::data::Motif::FiveCycle,
            other => bail!("unknown motif {:?} (expected triangle | five-cycle)", other),
        };
    }
    if let Some(v) = take!(overrides.synthetic_noise, file, "synthetic_noise", parse_f64) {
        synthetic.noise_edge_prob = v;
    }
    if let Some(v) = take!(overrides.synthetic_seed, file, "synthetic_seed", parse_u64) {
        synthetic.seed = v;
    }

    Ok(Resolved { model, loss, train, synthetic })
}
