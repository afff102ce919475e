//! Command-line driver: trains and evaluates the multi-scale oversampling
//! classifier, runs the ablation and sample-efficiency experiments, converts
//! adjacency-list corpora to TUDataset layout, and inspects datasets.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{parse_config_file, resolve, Overrides, Resolved};
use mosgnn_core::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};
use mosgnn_core::data::{convert_adjacency_list, generate_synthetic, parse_tudataset, FoldSplit};
use mosgnn_core::graph::GraphDataset;
use mosgnn_core::harness::{
    config_fingerprint, run_ablation, run_cv_parallel, run_sample_efficiency, write_metrics_csv,
    write_metrics_json, CvReport, MetricsRow, precision_recall_f1,
};
use mosgnn_core::model::{predict, PredictConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "mosgnn",
    about = "Multi-scale oversampling GNN for imbalanced binary graph classification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Directory containing TUDataset-format datasets (fallback: MOSGNN_DATA_DIR)
    #[arg(long, env = "MOSGNN_DATA_DIR")]
    dataset_dir: Option<PathBuf>,
    /// Dataset name (subdirectory), or "synthetic" for the generated corpus
    #[arg(long)]
    dataset_name: String,
    /// Where artifacts (metrics, checkpoints, manifests) are written
    #[arg(long, default_value = "runs")]
    output_dir: PathBuf,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional key=value config file; command-line flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train folds concurrently with per-fold derived seeds
    #[arg(long, default_value_t = 1)]
    parallel_folds: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Train with cross-validation; writes checkpoints, splits, and metrics
    Train(DataArgs),
    /// Evaluate a checkpoint on a stored split
    Eval(EvalArgs),
    /// Run the 7-configuration branch ablation
    Ablation(DataArgs),
    /// Train with decreasing fractions of minority training graphs
    SampleEfficiency(SampleEfficiencyArgs),
    /// Convert an adjacency-list corpus to TUDataset layout
    Convert(ConvertArgs),
    /// Print dataset statistics
    Inspect(InspectArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained checkpoint to load
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split file written by `train` (fold{i}.split.json)
    #[arg(long)]
    split_file: PathBuf,
    /// Which partition of the split file to score
    #[arg(long, default_value = "test")]
    split: String,
    /// Decision threshold override (skips the stored threshold)
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct SampleEfficiencyArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated minority-training fractions
    #[arg(long, default_value = "0.01,0.05,0.10,0.25,0.50,1.0")]
    fractions: String,
}

#[derive(Args)]
struct ConvertArgs {
    /// Adjacency-list input file
    #[arg(long)]
    input: PathBuf,
    /// Output directory (a <name>/ subdirectory is created)
    #[arg(long)]
    output_dir: PathBuf,
    /// Dataset name for the emitted files
    #[arg(long)]
    name: String,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long, env = "MOSGNN_DATA_DIR")]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    dataset_name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablation(args) => cmd_ablation(args),
        Command::SampleEfficiency(args) => cmd_sample_efficiency(args),
        Command::Convert(args) => cmd_convert(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match outcome {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.downcast_ref::<CheckpointError>().is_some() { 3 } else { 1 };
            std::process::exit(code);
        }
    }
}

fn load_dataset(args: &DataArgs, resolved: &Resolved) -> Result<GraphDataset> {
    load_dataset_parts(args.dataset_dir.as_deref(), &args.dataset_name, resolved)
}

fn load_dataset_parts(
    dir: Option<&Path>,
    name: &str,
    resolved: &Resolved,
) -> Result<GraphDataset> {
    if name == "synthetic" {
        return Ok(generate_synthetic(&resolved.synthetic)?);
    }
    let dir = dir.ok_or_else(|| {
        anyhow!("--dataset-dir (or MOSGNN_DATA_DIR) is required for dataset {name}")
    })?;
    let path = dir.join(name);
    Ok(parse_tudataset(&path, name)?)
}

fn resolved_for(args: &DataArgs) -> Result<Resolved> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    resolve(&args.overrides, &file, args.seed)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    dataset: &'a str,
    dataset_fingerprint: String,
    seed: u64,
    config_fingerprint: String,
    model: &'a mosgnn_core::model::ModelConfig,
    loss: &'a mosgnn_core::model::LossConfig,
    train: &'a mosgnn_core::harness::TrainConfig,
    artifacts: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    out_dir: &Path,
    command: &str,
    dataset: &str,
    ds: &GraphDataset,
    resolved: &Resolved,
    artifacts: Vec<String>,
) -> Result<()> {
    let manifest = RunManifest {
        command,
        dataset,
        dataset_fingerprint: format!("{:016x}", ds.fingerprint()),
        seed: resolved.train.seed,
        config_fingerprint: config_fingerprint(&resolved.model, &resolved.loss, &resolved.train),
        model: &resolved.model,
        loss: &resolved.loss,
        train: &resolved.train,
        artifacts,
    };
    let path = out_dir.join("run_manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn rows_from_report(ds_name: &str, report: &CvReport) -> Vec<MetricsRow> {
    report
        .per_fold
        .iter()
        .map(|m| MetricsRow {
            dataset: ds_name.to_string(),
            config: m.config_fingerprint.clone(),
            fold: m.fold,
            threshold: m.threshold,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            seconds: m.seconds,
        })
        .collect()
}

fn cmd_train(args: DataArgs) -> Result<()> {
    let resolved = resolved_for(&args)?;
    let ds = load_dataset(&args, &resolved)?;
    std::fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("creating {}", args.output_dir.display()))?;

    println!(
        "training on {} ({} graphs, {} minority, ratio {:.2}, features {})",
        ds.name, ds.graphs.len(), ds.minority_count, ds.ratio(), ds.feature_dim()
    );
    let (report, artifacts) =
        run_cv_parallel(&ds, &resolved.model, &resolved.loss, &resolved.train, args.parallel_folds)?;

    let mut files = Vec::new();
    for (i, (split, params)) in artifacts.iter().enumerate() {
        let ckpt_path = args.output_dir.join(format!("fold{i}.ckpt"));
        let meta = CheckpointMeta {
            model: resolved.model.clone(),
            loss: resolved.loss.clone(),
            threshold: report.per_fold[i].threshold,
            q: resolved.train.q,
            node_drop: resolved.train.node_drop,
            edge_drop: resolved.train.edge_drop,
            feature_dim: ds.feature_dim(),
            dataset_fingerprint: format!("{:016x}", ds.fingerprint()),
            fold: i,
            seed: resolved.train.seed,
        };
        save_checkpoint(&ckpt_path, params, &meta)?;
        files.push(ckpt_path.display().to_string());

        let split_path = args.output_dir.join(format!("fold{i}.split.json"));
        std::fs::write(&split_path, serde_json::to_string_pretty(split)?)?;
        files.push(split_path.display().to_string());
    }

    let rows = rows_from_report(&ds.name, &report);
    let csv_path = args.output_dir.join("metrics.csv");
    let json_path = args.output_dir.join("metrics.json");
    write_metrics_csv(&csv_path, &rows)?;
    write_metrics_json(&json_path, &rows)?;
    files.push(csv_path.display().to_string());
    files.push(json_path.display().to_string());
    write_manifest(&args.output_dir, "train", &ds.name, &ds, &resolved, files)?;

    for m in &report.per_fold {
        println!(
            "fold {}: F1 {:.4} precision {:.4} recall {:.4} threshold {:.1} ({:.1}s)",
            m.fold, m.f1, m.precision, m.recall, m.threshold, m.seconds
        );
    }
    println!("minority F1 mean {:.4} +- {:.4}", report.mean_f1, report.std_f1);
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let resolved = resolved_for(&args.data)?;
    let ds = load_dataset(&args.data, &resolved)?;
    let (params, meta) = load_checkpoint(&args.checkpoint)?;
    if meta.feature_dim != ds.feature_dim() {
        return Err(CheckpointError::ShapeMismatch(format!(
            "checkpoint expects feature width {}, dataset has {}",
            meta.feature_dim,
            ds.feature_dim()
        ))
        .into());
    }
    let ds_fp = format!("{:016x}", ds.fingerprint());
    if meta.dataset_fingerprint != ds_fp {
        eprintln!(
            "warning: dataset fingerprint {} differs from checkpoint's {}",
            ds_fp, meta.dataset_fingerprint
        );
    }

    let split: FoldSplit = serde_json::from_str(
        &std::fs::read_to_string(&args.split_file)
            .with_context(|| format!("reading {}", args.split_file.display()))?,
    )?;
    let ids = match args.split.as_str() {
        "train" => &split.train_ids,
        "val" => &split.val_ids,
        "test" => &split.test_ids,
        other => bail!("unknown split {:?} (expected train | val | test)", other),
    };
    let threshold = args.threshold.unwrap_or(meta.threshold);
    let pcfg = PredictConfig {
        model: meta.model.clone(),
        loss: meta.loss.clone(),
        q: meta.q,
        node_drop: meta.node_drop,
        edge_drop: meta.edge_drop,
    };
    let mut predictions = Vec::with_capacity(ids.len());
    let mut labels = Vec::with_capacity(ids.len());
    for &id in ids {
        if id >= ds.len() {
            bail!("split id {id} outside dataset of {} graphs", ds.len());
        }
        predictions.push(predict(ds.graph(id), &params, &pcfg, threshold)?.class);
        labels.push(ds.label_of(id));
    }
    let (precision, recall, f1) = precision_recall_f1(&predictions, &labels)?;
    println!(
        "{} split {} ({} graphs): F1 {:.4} precision {:.4} recall {:.4} threshold {:.1}",
        ds.name, args.split, ids.len(), f1, precision, recall, threshold
    );

    std::fs::create_dir_all(&args.data.output_dir)?;
    let rows = vec![MetricsRow {
        dataset: ds.name.clone(),
        config: config_fingerprint(&meta.model, &meta.loss, &resolved.train),
        fold: meta.fold,
        threshold,
        precision,
        recall,
        f1,
        seconds: 0.0,
    }];
    write_metrics_csv(&args.data.output_dir.join("eval_metrics.csv"), &rows)?;
    write_metrics_json(&args.data.output_dir.join("eval_metrics.json"), &rows)?;
    Ok(())
}

fn cmd_ablation(args: DataArgs) -> Result<()> {
    let resolved = resolved_for(&args)?;
    let ds = load_dataset(&args, &resolved)?;
    std::fs::create_dir_all(&args.output_dir)?;
    let table = run_ablation(&ds, &resolved.model, &resolved.loss, &resolved.train)?;

    let mut rows = Vec::new();
    let mut summary = String::from("configuration,mean_f1,std_f1\n");
    println!("{:<10} {:>8} {:>8}", "config", "mean F1", "std");
    for (name, report) in &table {
        println!("{:<10} {:>8.4} {:>8.4}", name, report.mean_f1, report.std_f1);
        summary.push_str(&format!("{},{:.6},{:.6}\n", name, report.mean_f1, report.std_f1));
        rows.extend(rows_from_report(&ds.name, report));
    }
    write_metrics_csv(&args.output_dir.join("metrics.csv"), &rows)?;
    write_metrics_json(&args.output_dir.join("metrics.json"), &rows)?;
    std::fs::write(args.output_dir.join("ablation_summary.csv"), summary)?;
    write_manifest(
        &args.output_dir,
        "ablation",
        &ds.name,
        &ds,
        &resolved,
        vec!["metrics.csv".into(), "metrics.json".into(), "ablation_summary.csv".into()],
    )?;
    Ok(())
}

fn cmd_sample_efficiency(args: SampleEfficiencyArgs) -> Result<()> {
    let resolved = resolved_for(&args.data)?;
    let ds = load_dataset(&args.data, &resolved)?;
    std::fs::create_dir_all(&args.data.output_dir)?;
    let fractions: Vec<f64> = args
        .fractions
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad fraction {s:?}")))
        .collect::<Result<_>>()?;

    let table = run_sample_efficiency(&ds, &fractions, &resolved.model, &resolved.loss, &resolved.train)?;
    let mut rows = Vec::new();
    let mut summary = String::from("fraction,mean_f1,std_f1\n");
    println!("{:>9} {:>8} {:>8}", "fraction", "mean F1", "std");
    for (fraction, report) in &table {
        println!("{:>9.2} {:>8.4} {:>8.4}", fraction, report.mean_f1, report.std_f1);
        summary.push_str(&format!("{},{:.6},{:.6}\n", fraction, report.mean_f1, report.std_f1));
        rows.extend(rows_from_report(&ds.name, report));
    }
    write_metrics_csv(&args.data.output_dir.join("metrics.csv"), &rows)?;
    write_metrics_json(&args.data.output_dir.join("metrics.json"), &rows)?;
    std::fs::write(args.data.output_dir.join("sample_efficiency_summary.csv"), summary)?;
    write_manifest(
        &args.data.output_dir,
        "sample-efficiency",
        &ds.name,
        &ds,
        &resolved,
        vec!["metrics.csv".into(), "metrics.json".into(), "sample_efficiency_summary.csv".into()],
    )?;
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    let out = args.output_dir.join(&args.name);
    let n = convert_adjacency_list(&args.input, &out, &args.name)?;
    println!("converted {} graphs into {}", n, out.display());
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let resolved = resolve(&args.overrides, &file, args.seed)?;
    let ds = load_dataset_parts(args.dataset_dir.as_deref(), &args.dataset_name, &resolved)?;
    let nodes: Vec<usize> = ds.graphs.iter().map(|g| g.n_nodes()).collect();
    let edges: Vec<usize> = ds.graphs.iter().map(|g| g.n_edges()).collect();
    let sum_nodes: usize = nodes.iter().sum();
    let sum_edges: usize = edges.iter().sum();
    println!("dataset          {}", ds.name);
    println!("graphs           {}", ds.len());
    println!("majority (0)     {}", ds.majority_count);
    println!("minority (1)     {}", ds.minority_count);
    println!("imbalance ratio  {:.2}:1", ds.ratio());
    println!("labels swapped   {}", ds.labels_swapped);
    println!(
        "nodes/graph      mean {:.1}, min {}, max {}",
        sum_nodes as f64 / ds.len() as f64,
        nodes.iter().min().unwrap(),
        nodes.iter().max().unwrap()
    );
    println!(
        "edges/graph      mean {:.1}, min {}, max {}",
        sum_edges as f64 / ds.len() as f64,
        edges.iter().min().unwrap(),
        edges.iter().max().unwrap()
    );
    println!("features         {:?} (width {})", ds.feature_kind, ds.feature_dim());
    println!("fingerprint      {:016x}", ds.fingerprint());
    Ok(())
}
