//! Shared helpers for the integration and acceptance suites.
// each test binary links this module and uses a different subset
#![allow(dead_code)]

use mosgnn_core::encoder::{Backbone, EncoderConfig, ReadoutMode};
use mosgnn_core::graph::Graph;
use mosgnn_core::model::{
    encode_bag, graph_branch, pair_branch, subgraph_branch, total_loss, LossConfig, ModelConfig,
    ModelParams,
};
use mosgnn_core::sampling::{make_bag_pairs, make_pairs, sample_subgraph_bag, BagPair, SubgraphBag};
use mosgnn_core::tensor::{grad_check, GradCheckReport, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_graph(n: usize, extra_edges: usize, label: u8, id: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    let mut tries = 0;
    while tries < extra_edges * 4 && edges.len() < (n - 1) + extra_edges {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        let e = (u.min(v), u.max(v));
        if u != v && !edges.contains(&e) {
            edges.push(e);
        }
        tries += 1;
    }
    let data = (0..n * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let features = Tensor::new(n, 4, data).unwrap();
    Graph::new(features, edges, label, id).unwrap()
}

/// The fixed micro-batch the full-objective gradient check runs on:
/// 2 majority + 2 minority graphs, bags of q = 4, top-k with k = 2.
pub struct MicroBatch {
    pub graphs: Vec<Graph>,
    pub pairs: Vec<(usize, usize, u8)>,
    pub bags: Vec<SubgraphBag>,
    pub bag_pairs: Vec<BagPair>,
    pub params: ModelParams,
    pub model_cfg: ModelConfig,
    pub loss_cfg: LossConfig,
}

pub fn micro_batch(seed: u64) -> MicroBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs = vec![
        random_graph(6, 3, 0, 0, &mut rng),
        random_graph(7, 2, 0, 1, &mut rng),
        random_graph(5, 3, 1, 2, &mut rng),
        random_graph(6, 2, 1, 3, &mut rng),
    ];
    let entries: Vec<(usize, u8)> = graphs.iter().map(|g| (g.graph_id, g.label)).collect();
    let pairs = make_pairs(&entries, 4, seed ^ 0xA).unwrap();
    let bags: Vec<SubgraphBag> = graphs
        .iter()
        .map(|g| sample_subgraph_bag(g, 4, 0.2, 0.2, seed ^ (0xB + g.graph_id as u64)).unwrap())
        .collect();
    let bag_pairs = make_bag_pairs(&bags, 4, seed ^ 0xC).unwrap();

    let model_cfg = ModelConfig {
        encoder: EncoderConfig {
            backbone: Backbone::Gcn,
            n_layers: 2,
            hidden_dim: 8,
            readout: ReadoutMode::Mean,
            gin_epsilon: 0.0,
        },
        share_encoders: false,
        head_hidden: 8,
    };
    let loss_cfg = LossConfig { k: 2, ..Default::default() };
    let params = ModelParams::init(&model_cfg, 4, &mut rng);
    MicroBatch {
        graphs,
        pairs: pairs.iter().map(|p| (p.left_id, p.right_id, p.surrogate_label)).collect(),
        bags,
        bag_pairs,
        params,
        model_cfg,
        loss_cfg,
    }
}

/// Finite-difference check of the full joint objective
/// (graph + pairwise + subgraph branches) over every model parameter.
pub fn full_objective_grad_check(seed: u64) -> GradCheckReport {
    let mb = micro_batch(seed);
    let tensors: Vec<Tensor> = mb.params.tensors().into_iter().cloned().collect();
    grad_check(
        |tape, vars| {
            let mv = mb.params.vars_from_flat(vars);
            // graph branch over the 4 graphs
            let mut rows = Vec::new();
            for g in &mb.graphs {
                rows.push(mosgnn_core::encoder::encode_graph(
                    tape,
                    g,
                    &mb.model_cfg.encoder,
                    &mv.encoder_graph,
                )?);
            }
            let stacked = tape.stack_rows(&rows)?;
            let labels: Vec<u8> = mb.graphs.iter().map(|g| g.label).collect();
            let (_, lg) = graph_branch(tape, stacked, &labels, &mv.head_graph, &mb.loss_cfg)
                .map_err(|e| match e {
                    mosgnn_core::model::ModelError::Kernel(k) => k,
                    other => mosgnn_core::tensor::KernelError::InvalidArgument(other.to_string()),
                })?;
            // pairwise branch
            let pair_vars: Vec<_> =
                mb.pairs.iter().map(|&(l, r, y)| (rows[l], rows[r], y)).collect();
            let (_, lp) = pair_branch(tape, &pair_vars, &mv.head_pair, &mb.loss_cfg)
                .map_err(|e| mosgnn_core::tensor::KernelError::InvalidArgument(e.to_string()))?;
            // subgraph branch
            let mut bag_embs = Vec::new();
            let mut bag_labels = Vec::new();
            for bag in &mb.bags {
                bag_embs.push(encode_bag(
                    tape,
                    bag,
                    &mb.model_cfg.encoder,
                    mv.subgraph_encoder(mb.model_cfg.share_encoders),
                )?);
                bag_labels.push(bag.source_label());
            }
            let sub = subgraph_branch(
                tape,
                &bag_embs,
                &bag_labels,
                &mb.bag_pairs,
                &mv.head_subgraph,
                &mb.loss_cfg,
            )
            .map_err(|e| mosgnn_core::tensor::KernelError::InvalidArgument(e.to_string()))?;
            total_loss(tape, Some(lg), Some(lp), Some(sub.loss), &mb.loss_cfg)
                .map_err(|e| mosgnn_core::tensor::KernelError::InvalidArgument(e.to_string()))
        },
        &tensors,
        1e-5,
    )
    .unwrap()
}

/// Finite-difference reports for every tape primitive (and the loss
/// compositions built on them), each scalarized through a fixed random
/// weighting. Returns (name, tolerance, report).
pub fn primitive_op_reports() -> Vec<(String, f64, mosgnn_core::tensor::GradCheckReport)> {
    use mosgnn_core::tensor::{
        binary_cross_entropy_with_logits, focal_loss, la_loss, row_l2_topk_mean,
        softmax_cross_entropy, KernelResult, Tape, Var,
    };

    fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    fn scalarize(tape: &mut Tape, out: Var, weights: &Tensor) -> KernelResult<Var> {
        let w = tape.constant(weights.clone());
        let prod = tape.mul_elem(out, w)?;
        tape.sum_all(prod)
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut reports: Vec<(String, f64, mosgnn_core::tensor::GradCheckReport)> = Vec::new();
    let mut push = |name: &str,
                    tol: f64,
                    inputs: &[Tensor],
                    f: &dyn Fn(&mut Tape, &[Var]) -> KernelResult<Var>| {
        let report = grad_check(|t, v| f(t, v), inputs, 1e-5).unwrap_or_else(|e| panic!("{name}: {e}"));
        reports.push((name.to_string(), tol, report));
    };

    let a34 = random_tensor(3, 4, &mut rng);
    let b42 = random_tensor(4, 2, &mut rng);
    let w32 = random_tensor(3, 2, &mut rng);
    push("matmul", 1e-5, &[a34.clone(), b42], &|t, v| {
        let c = t.matmul(v[0], v[1])?;
        scalarize(t, c, &w32)
    });

    let a33 = random_tensor(3, 3, &mut rng);
    let b33 = random_tensor(3, 3, &mut rng);
    let w33 = random_tensor(3, 3, &mut rng);
    push("add", 1e-5, &[a33.clone(), b33.clone()], &|t, v| {
        let c = t.add(v[0], v[1])?;
        scalarize(t, c, &w33)
    });
    push("sub", 1e-5, &[a33.clone(), b33.clone()], &|t, v| {
        let c = t.sub(v[0], v[1])?;
        scalarize(t, c, &w33)
    });
    push("mul_elem", 1e-5, &[a33.clone(), b33.clone()], &|t, v| {
        let c = t.mul_elem(v[0], v[1])?;
        scalarize(t, c, &w33)
    });

    let a43 = random_tensor(4, 3, &mut rng);
    let row13 = random_tensor(1, 3, &mut rng);
    let w43 = random_tensor(4, 3, &mut rng);
    push("add_row_broadcast", 1e-5, &[a43.clone(), row13], &|t, v| {
        let c = t.add_row_broadcast(v[0], v[1])?;
        scalarize(t, c, &w43)
    });
    push("scalar_mul", 1e-5, std::slice::from_ref(&a43), &|t, v| {
        let c = t.scalar_mul(v[0], -1.7)?;
        scalarize(t, c, &w43)
    });
    push("add_scalar", 1e-5, std::slice::from_ref(&a43), &|t, v| {
        let c = t.add_scalar(v[0], 0.9)?;
        scalarize(t, c, &w43)
    });

    let mut away = random_tensor(4, 3, &mut rng);
    for v in away.as_mut_slice() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    push("relu", 1e-5, std::slice::from_ref(&away), &|t, v| {
        let c = t.relu(v[0])?;
        scalarize(t, c, &w43)
    });
    push("softplus", 1e-5, std::slice::from_ref(&away), &|t, v| {
        let c = t.softplus(v[0])?;
        scalarize(t, c, &w43)
    });
    push("exp", 1e-5, std::slice::from_ref(&away), &|t, v| {
        let c = t.exp(v[0])?;
        scalarize(t, c, &w43)
    });

    let pos = Tensor::new(4, 3, (0..12).map(|i| 0.2 + 0.15 * i as f64).collect()).unwrap();
    push("pow_const", 1e-5, std::slice::from_ref(&pos), &|t, v| {
        let c = t.pow_const(v[0], 2.5)?;
        scalarize(t, c, &w43)
    });

    let a53 = random_tensor(5, 3, &mut rng);
    let w53 = random_tensor(5, 3, &mut rng);
    push("log_softmax_rows", 1e-5, std::slice::from_ref(&a53), &|t, v| {
        let c = t.log_softmax_rows(v[0])?;
        scalarize(t, c, &w53)
    });
    let w51 = random_tensor(5, 1, &mut rng);
    push("gather_col", 1e-5, std::slice::from_ref(&a53), &|t, v| {
        let c = t.gather_col(v[0], vec![0, 2, 1, 1, 0])?;
        scalarize(t, c, &w51)
    });

    push("sum_all", 1e-5, std::slice::from_ref(&a43), &|t, v| t.sum_all(v[0]));
    push("mean_all", 1e-5, std::slice::from_ref(&a43), &|t, v| t.mean_all(v[0]));
    let w13 = random_tensor(1, 3, &mut rng);
    push("col_sum", 1e-5, std::slice::from_ref(&a43), &|t, v| {
        let c = t.col_sum(v[0])?;
        scalarize(t, c, &w13)
    });
    push("col_mean", 1e-5, std::slice::from_ref(&a43), &|t, v| {
        let c = t.col_mean(v[0])?;
        scalarize(t, c, &w13)
    });

    let a32 = random_tensor(3, 2, &mut rng);
    let b34b = random_tensor(3, 4, &mut rng);
    let w36 = random_tensor(3, 6, &mut rng);
    push("concat_cols", 1e-5, &[a32.clone(), b34b], &|t, v| {
        let c = t.concat_cols(v[0], v[1])?;
        scalarize(t, c, &w36)
    });
    let c32 = random_tensor(3, 2, &mut rng);
    let w62 = random_tensor(6, 2, &mut rng);
    push("stack_rows", 1e-5, &[a32.clone(), c32], &|t, v| {
        let c = t.stack_rows(&[v[0], v[1]])?;
        scalarize(t, c, &w62)
    });
    let w22 = random_tensor(2, 2, &mut rng);
    push("slice_rows", 1e-5, std::slice::from_ref(&a32), &|t, v| {
        let c = t.slice_rows(v[0], 1, 2)?;
        scalarize(t, c, &w22)
    });

    let scores = Tensor::new(6, 1, vec![0.9, -0.4, 0.55, 1.3, -1.1, 0.1]).unwrap();
    push("topk_mean", 1e-4, std::slice::from_ref(&scores), &|t, v| t.topk_mean(v[0], 3));
    let mut x53 = random_tensor(5, 3, &mut rng);
    for i in 0..5 {
        let norm: f64 = x53.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 0.3 {
            x53.set(i, 0, 1.0);
        }
    }
    push("row_norms", 1e-5, std::slice::from_ref(&x53), &|t, v| {
        let c = t.row_norms(v[0])?;
        scalarize(t, c, &w51)
    });
    push("row_l2_topk_mean", 1e-4, std::slice::from_ref(&x53), &|t, v| row_l2_topk_mean(t, v[0], 2));

    let logits = random_tensor(4, 2, &mut rng);
    let z41 = random_tensor(4, 1, &mut rng);
    push("softmax_cross_entropy", 1e-5, std::slice::from_ref(&logits), &|t, v| {
        softmax_cross_entropy(t, v[0], &[0, 1, 1, 0], None)
    });
    push("focal_loss", 1e-5, std::slice::from_ref(&logits), &|t, v| {
        focal_loss(t, v[0], &[0, 1, 1, 0], 2.0, &[0.7, 1.3])
    });
    push("la_loss", 1e-5, std::slice::from_ref(&logits), &|t, v| {
        la_loss(t, v[0], &[0, 1, 1, 0], 1.0, &[0.8, 0.2])
    });
    push("binary_cross_entropy_with_logits", 1e-5, std::slice::from_ref(&z41), &|t, v| {
        binary_cross_entropy_with_logits(t, v[0], &[1.0, 0.0, 1.0, 0.0])
    });

    reports
}
