//! Training loop, cross-validation, ablation grid, and sample-efficiency
//! experiments. Everything here is a deterministic function of
//! (dataset, config, seed).

mod metrics;

pub use metrics::{
    f1_minority, metrics_to_csv, precision_recall_f1, select_threshold, threshold_grid,
    write_metrics_csv, write_metrics_json, MetricsRow, METRICS_CSV_HEADER,
};

use crate::data::{stratified_kfold, DataError, FoldSplit};
use crate::graph::{Fnv, GraphDataset, MINORITY};
use crate::model::{
    encode_bag, graph_branch, pair_branch, predict, subgraph_branch, total_loss, LossConfig,
    ModelConfig, ModelError, ModelParams, PredictConfig,
};
use crate::sampling::{make_bag_pairs, make_pairs, oversample_epoch, SamplingError};
use crate::tensor::{
    AdamConfig, KernelError, OptimizerKind, OptimizerState, SgdWarmupConfig, Tape,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("{predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("validation set contains a single class")]
    SingleClassValidation,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type HarnessResult<T> = Result<T, HarnessError>;

/// Training-run knobs with the experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// None picks 256, or 64 for datasets under 1000 graphs.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    /// None selects Adam, or SGD-with-warmup for the logit-adjusted loss.
    pub optimizer: Option<OptimizerKind>,
    pub sgd_base_lr: f64,
    pub sgd_warmup_epochs: usize,
    pub seed: u64,
    pub folds: usize,
    pub val_fraction: f64,
    /// subgraphs per bag
    pub q: usize,
    pub node_drop: f64,
    pub edge_drop: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: None,
            learning_rate: 1e-3,
            optimizer: None,
            sgd_base_lr: 0.1,
            sgd_warmup_epochs: 5,
            seed: 0,
            folds: 3,
            val_fraction: 0.1,
            q: 10,
            node_drop: 0.2,
            edge_drop: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> HarnessResult<()> {
        if self.epochs == 0 {
            return Err(HarnessError::InvalidConfig("epochs must be >= 1".into()));
        }
        if let Some(b) = self.batch_size {
            if b < 4 {
                return Err(HarnessError::InvalidConfig("batch_size must be >= 4".into()));
            }
        }
        if self.q == 0 {
            return Err(HarnessError::InvalidConfig("q must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_batch_size(&self, dataset_len: usize) -> usize {
        self.batch_size.unwrap_or(if dataset_len < 1000 { 64 } else { 256 })
    }

    pub fn resolve_optimizer(&self, loss: &LossConfig) -> OptimizerKind {
        self.optimizer.unwrap_or(match loss.base_loss {
            crate::model::BaseLoss::LogitAdjusted => OptimizerKind::SgdWarmup,
            _ => OptimizerKind::Adam,
        })
    }
}

/// Per-fold result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fold: usize,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub seconds: f64,
    pub config_fingerprint: String,
}

/// Everything a fold run produces.
pub struct FoldOutcome {
    pub params: ModelParams,
    pub metrics: RunMetrics,
    /// total loss after every optimizer step, in order
    pub step_losses: Vec<f64>,
}

/// Stable 16-hex fingerprint over the resolved configuration.
pub fn config_fingerprint(mcfg: &ModelConfig, lcfg: &LossConfig, tcfg: &TrainConfig) -> String {
    let mut h = Fnv::new();
    let blob = serde_json::to_string(&(mcfg, lcfg, tcfg)).expect("config serialize");
    h.write_bytes(blob.as_bytes());
    format!("{:016x}", h.finish())
}

/// Seed derivation for independent deterministic streams (splitmix64 over
/// the base seed and a tag path).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(t.wrapping_mul(0xd1b54a32d192ed03));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

const TAG_INIT: u64 = 1;
const TAG_EPOCH: u64 = 2;
const TAG_PAIRS: u64 = 3;
const TAG_BAGS: u64 = 4;
const TAG_BAG_PAIRS: u64 = 5;
const TAG_FOLD: u64 = 6;
const TAG_SPLIT: u64 = 7;
const TAG_SUBSAMPLE: u64 = 8;

/// Class-aware batching: deal the oversampled stream into batches that hold
/// up to batch_size/2 ids of each class, preserving stream order. Every
/// batch contains both classes; the epoch as a whole keeps the exact M/M
/// balance of the stream.
fn class_aware_batches(
    stream: &[usize],
    ds: &GraphDataset,
    batch_size: usize,
) -> Vec<Vec<usize>> {
    let per_class = (batch_size / 2).max(1);
    let mut majority = Vec::new();
    let mut minority = Vec::new();
    for &id in stream {
        if ds.label_of(id) == MINORITY {
            minority.push(id);
        } else {
            majority.push(id);
        }
    }
    let n_batches = majority.len().max(minority.len()).div_ceil(per_class).max(1);
    let mut batches = vec![Vec::new(); n_batches];
    for (ids, _) in [(&majority, 0u8), (&minority, 1u8)] {
        for (i, &id) in ids.iter().enumerate() {
            batches[(i / per_class).min(n_batches - 1)].push(id);
        }
    }
    batches.retain(|b| !b.is_empty());
    batches
}

/// Train on one fold: oversampled class-balanced batches, joint loss over
/// the enabled branches, threshold selection on the validation slice, and
/// final metrics on the untouched test ids.
pub fn train_one_fold(
    ds: &GraphDataset,
    split: &FoldSplit,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
    fold_index: usize,
) -> HarnessResult<FoldOutcome> {
    tcfg.validate()?;
    lcfg.validate().map_err(HarnessError::Model)?;
    mcfg.encoder.validate()?;
    let started = Instant::now();

    // leakage guard: the three id sets must be disjoint, and training only
    // ever touches train ids
    split.assert_disjoint();
    let train_set: BTreeSet<usize> = split.train_ids.iter().copied().collect();
    let test_set: BTreeSet<usize> = split.test_ids.iter().copied().collect();
    assert!(
        train_set.intersection(&test_set).next().is_none(),
        "test ids leaked into training"
    );

    let (train_maj, train_min) = ds.ids_by_class(&split.train_ids);
    if train_min.is_empty() {
        return Err(HarnessError::Data(DataError::EmptyClassInSplit { class: 1, part: "train" }));
    }

    let seed = tcfg.seed;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_INIT]));
    let mut params = ModelParams::init(mcfg, ds.feature_dim(), &mut init_rng);
    let shapes = params.shapes();
    let mut opt = match tcfg.resolve_optimizer(lcfg) {
        OptimizerKind::Adam => OptimizerState::adam(
            AdamConfig { learning_rate: tcfg.learning_rate, ..Default::default() },
            &shapes,
        ),
        OptimizerKind::SgdWarmup => OptimizerState::sgd_warmup(
            SgdWarmupConfig {
                base_lr: tcfg.sgd_base_lr,
                warmup_epochs: tcfg.sgd_warmup_epochs,
                ..Default::default()
            },
            &shapes,
        ),
    };

    let batch_size = tcfg.effective_batch_size(ds.len());
    let mut step_losses = Vec::new();

    for epoch in 0..tcfg.epochs {
        opt.begin_epoch(epoch);
        let stream =
            oversample_epoch(&train_maj, &train_min, derive_seed(seed, &[TAG_EPOCH, epoch as u64]))?;
        debug_assert_eq!(stream.len(), 2 * train_maj.len());

        for (batch_no, batch) in class_aware_batches(&stream, ds, batch_size).iter().enumerate() {
            debug_assert!(batch.iter().all(|id| train_set.contains(id)), "batch escaped train set");
            let loss = train_step(
                ds,
                batch,
                &mut params,
                &mut opt,
                mcfg,
                lcfg,
                tcfg,
                derive_seed(seed, &[TAG_EPOCH, epoch as u64, batch_no as u64]),
            )?;
            step_losses.push(loss);
        }
    }

    // threshold selection on validation only
    let pcfg = PredictConfig {
        model: mcfg.clone(),
        loss: lcfg.clone(),
        q: tcfg.q,
        node_drop: tcfg.node_drop,
        edge_drop: tcfg.edge_drop,
    };
    let val_scores: Vec<f64> = split
        .val_ids
        .iter()
        .map(|&id| predict(ds.graph(id), &params, &pcfg, 0.5).map(|p| p.minority_probability))
        .collect::<Result<_, _>>()?;
    let val_labels: Vec<u8> = split.val_ids.iter().map(|&id| ds.label_of(id)).collect();
    let threshold = select_threshold(&val_scores, &val_labels)?;

    let test_preds: Vec<u8> = split
        .test_ids
        .iter()
        .map(|&id| predict(ds.graph(id), &params, &pcfg, threshold).map(|p| p.class))
        .collect::<Result<_, _>>()?;
    let test_labels: Vec<u8> = split.test_ids.iter().map(|&id| ds.label_of(id)).collect();
    let (precision, recall, f1) = precision_recall_f1(&test_preds, &test_labels)?;

    Ok(FoldOutcome {
        params,
        metrics: RunMetrics {
            fold: fold_index,
            threshold,
            precision,
            recall,
            f1,
            seconds: started.elapsed().as_secs_f64(),
            config_fingerprint: config_fingerprint(mcfg, lcfg, tcfg),
        },
        step_losses,
    })
}

/// One optimizer step over one batch.
#[allow(clippy::too_many_arguments)]
fn train_step(
    ds: &GraphDataset,
    batch: &[usize],
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
    step_seed: u64,
) -> HarnessResult<f64> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);

    // encode each distinct graph once; duplicated minority ids reuse the node
    let unique: Vec<usize> = {
        let set: BTreeSet<usize> = batch.iter().copied().collect();
        set.into_iter().collect()
    };
    let mut emb_of = std::collections::BTreeMap::new();
    if lcfg.graph_weight > 0.0 || lcfg.lambda > 0.0 {
        for &id in &unique {
            let h = crate::encoder::encode_graph(
                &mut tape,
                ds.graph(id),
                &mcfg.encoder,
                &vars.encoder_graph,
            )?;
            emb_of.insert(id, h);
        }
    }

    let graph_loss = if lcfg.graph_weight > 0.0 {
        let rows: Vec<crate::tensor::Var> = batch.iter().map(|id| emb_of[id]).collect();
        let stacked = tape.stack_rows(&rows)?;
        let labels: Vec<u8> = batch.iter().map(|&id| ds.label_of(id)).collect();
        let (_, loss) = graph_branch(&mut tape, stacked, &labels, &vars.head_graph, lcfg)?;
        Some(loss)
    } else {
        None
    };

    let pair_loss = if lcfg.lambda > 0.0 {
        let entries: Vec<(usize, u8)> = batch.iter().map(|&id| (id, ds.label_of(id))).collect();
        let pairs = make_pairs(&entries, batch.len(), derive_seed(step_seed, &[TAG_PAIRS]))?;
        let pair_vars: Vec<(crate::tensor::Var, crate::tensor::Var, u8)> = pairs
            .iter()
            .map(|p| (emb_of[&p.left_id], emb_of[&p.right_id], p.surrogate_label))
            .collect();
        let (_, loss) = pair_branch(&mut tape, &pair_vars, &vars.head_pair, lcfg)?;
        Some(loss)
    } else {
        None
    };

    let subgraph_loss = if lcfg.beta > 0.0 {
        let enc = vars.subgraph_encoder(mcfg.share_encoders);
        let mut bags = Vec::with_capacity(unique.len());
        let mut bag_embs = Vec::with_capacity(unique.len());
        let mut bag_labels = Vec::with_capacity(unique.len());
        for &id in &unique {
            let bag = crate::sampling::sample_subgraph_bag(
                ds.graph(id),
                tcfg.q,
                tcfg.node_drop,
                tcfg.edge_drop,
                derive_seed(step_seed, &[TAG_BAGS, id as u64]),
            )?;
            bag_embs.push(encode_bag(&mut tape, &bag, &mcfg.encoder, enc)?);
            bag_labels.push(bag.source_label());
            bags.push(bag);
        }
        let bag_pairs =
            make_bag_pairs(&bags, batch.len(), derive_seed(step_seed, &[TAG_BAG_PAIRS]))?;
        let out = subgraph_branch(
            &mut tape,
            &bag_embs,
            &bag_labels,
            &bag_pairs,
            &vars.head_subgraph,
            lcfg,
        )?;
        Some(out.loss)
    } else {
        None
    };

    let total = total_loss(&mut tape, graph_loss, pair_loss, subgraph_loss, lcfg)?;
    let loss_value = tape.value(total).item()?;
    tape.backward(total)?;
    let grads = vars.grads(&tape);
    drop(tape);
    let mut tensors = params.tensors_mut();
    opt.step(&mut tensors, &grads)?;
    Ok(loss_value)
}

/// Aggregated cross-validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold: Vec<RunMetrics>,
    pub mean_f1: f64,
    /// population standard deviation
    pub std_f1: f64,
}

impl CvReport {
    pub fn from_folds(per_fold: Vec<RunMetrics>) -> Self {
        let n = per_fold.len() as f64;
        let mean_f1 = per_fold.iter().map(|m| m.f1).sum::<f64>() / n;
        let var = per_fold.iter().map(|m| (m.f1 - mean_f1).powi(2)).sum::<f64>() / n;
        Self { per_fold, mean_f1, std_f1: var.sqrt() }
    }
}

/// k-fold cross-validation: stratified splits, one independent training run
/// per fold with a derived seed, mean and population std of minority F1.
pub fn run_cv(
    ds: &GraphDataset,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
) -> HarnessResult<CvReport> {
    let (report, _) = run_cv_with_params(ds, mcfg, lcfg, tcfg)?;
    Ok(report)
}

/// As [`run_cv`] but also hands back the per-fold parameters and splits
/// (the CLI persists them).
pub fn run_cv_with_params(
    ds: &GraphDataset,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
) -> HarnessResult<(CvReport, Vec<(FoldSplit, ModelParams)>)> {
    run_cv_parallel(ds, mcfg, lcfg, tcfg, 1)
}

/// Cross-validation with up to `workers` folds trained concurrently. Fold
/// seeds derive from the master seed, so results are identical regardless of
/// the worker count.
pub fn run_cv_parallel(
    ds: &GraphDataset,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
    workers: usize,
) -> HarnessResult<(CvReport, Vec<(FoldSplit, ModelParams)>)> {
    let splits =
        stratified_kfold(ds, tcfg.folds, tcfg.val_fraction, derive_seed(tcfg.seed, &[TAG_SPLIT]))?;
    let fold_cfg = |i: usize| TrainConfig {
        seed: derive_seed(tcfg.seed, &[TAG_FOLD, i as u64]),
        ..tcfg.clone()
    };
    let outcomes: Vec<HarnessResult<FoldOutcome>> = if workers <= 1 {
        splits
            .iter()
            .enumerate()
            .map(|(i, split)| train_one_fold(ds, split, mcfg, lcfg, &fold_cfg(i), i))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = splits
                .iter()
                .enumerate()
                .map(|(i, split)| {
                    let cfg = fold_cfg(i);
                    scope.spawn(move || train_one_fold(ds, split, mcfg, lcfg, &cfg, i))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("fold thread panicked")).collect()
        })
    };
    // fingerprint the run-level configuration, not the derived fold seeds
    let fingerprint = config_fingerprint(mcfg, lcfg, tcfg);
    let mut per_fold = Vec::with_capacity(splits.len());
    let mut artifacts = Vec::with_capacity(splits.len());
    for (split, outcome) in splits.into_iter().zip(outcomes) {
        let outcome = outcome?;
        let mut metrics = outcome.metrics.clone();
        metrics.config_fingerprint = fingerprint.clone();
        per_fold.push(metrics);
        artifacts.push((split, outcome.params));
    }
    Ok((CvReport::from_folds(per_fold), artifacts))
}

/// The seven ablation configurations of branch subsets.
pub fn ablation_grid(lcfg: &LossConfig) -> Vec<(String, LossConfig)> {
    let mask = |name: &str, g: bool, p: bool, s: bool| {
        (
            name.to_string(),
            LossConfig {
                graph_weight: if g { lcfg.graph_weight.max(1.0) } else { 0.0 },
                lambda: if p { lcfg.lambda } else { 0.0 },
                beta: if s { lcfg.beta } else { 0.0 },
                ..lcfg.clone()
            },
        )
    };
    vec![
        mask("Lg", true, false, false),
        mask("Lp", false, true, false),
        mask("Ls", false, false, true),
        mask("Lg+Lp", true, true, false),
        mask("Lg+Ls", true, false, true),
        mask("Lp+Ls", false, true, true),
        mask("MOSGNN", true, true, true),
    ]
}

/// Run the 7-configuration ablation: each branch subset trained and
/// evaluated with cross-validation, prediction restricted to the active
/// branches.
pub fn run_ablation(
    ds: &GraphDataset,
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
) -> HarnessResult<Vec<(String, CvReport)>> {
    let mut out = Vec::new();
    for (name, cfg) in ablation_grid(lcfg) {
        let report = run_cv(ds, mcfg, &cfg, tcfg)?;
        out.push((name, report));
    }
    Ok(out)
}

/// Sample-efficiency protocol: train with a subsampled fraction of minority
/// training graphs, evaluate on the untouched test fold. Fraction 1.0 is the
/// identity and reproduces `run_cv` exactly at equal seed.
pub fn run_sample_efficiency(
    ds: &GraphDataset,
    fractions: &[f64],
    mcfg: &ModelConfig,
    lcfg: &LossConfig,
    tcfg: &TrainConfig,
) -> HarnessResult<Vec<(f64, CvReport)>> {
    let splits =
        stratified_kfold(ds, tcfg.folds, tcfg.val_fraction, derive_seed(tcfg.seed, &[TAG_SPLIT]))?;
    let mut out = Vec::new();
    for &fraction in fractions {
        if !(0.0..=1.0).contains(&fraction) || fraction == 0.0 {
            return Err(HarnessError::InvalidConfig(format!("fraction {fraction} outside (0, 1]")));
        }
        let mut per_fold = Vec::with_capacity(splits.len());
        for (i, split) in splits.iter().enumerate() {
            let reduced = subsample_minority_train(ds, split, fraction, tcfg.seed, i);
            let fold_cfg =
                TrainConfig { seed: derive_seed(tcfg.seed, &[TAG_FOLD, i as u64]), ..tcfg.clone() };
            let outcome = train_one_fold(ds, &reduced, mcfg, lcfg, &fold_cfg, i)?;
            per_fold.push(outcome.metrics);
        }
        out.push((fraction, CvReport::from_folds(per_fold)));
    }
    Ok(out)
}

/// Keep floor(fraction * count), at least 1, of the minority training ids,
/// chosen by a dedicated seeded shuffle. Fraction 1.0 leaves the split
/// untouched (bit-for-bit).
pub fn subsample_minority_train(
    ds: &GraphDataset,
    split: &FoldSplit,
    fraction: f64,
    seed: u64,
    fold: usize,
) -> FoldSplit {
    if fraction >= 1.0 {
        return split.clone();
    }
    let (majority, mut minority) = ds.ids_by_class(&split.train_ids);
    let keep = ((minority.len() as f64 * fraction).floor() as usize).max(1);
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_SUBSAMPLE, fold as u64]));
    minority.shuffle(&mut rng);
    minority.truncate(keep);
    let mut train_ids = majority;
    train_ids.extend(minority);
    train_ids.sort_unstable();
    FoldSplit { train_ids, val_ids: split.val_ids.clone(), test_ids: split.test_ids.clone() }
}
