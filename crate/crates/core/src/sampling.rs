//! Data-level re-balancing: duplication oversampling, balanced pairwise
//! relation sets, and stochastic subgraph-bag generation. Every sampler is a
//! pure function of (input, seed).

use crate::graph::{induced_subgraph, Graph, GraphError, MINORITY};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SamplingError {
    #[error("no minority graphs to oversample")]
    NoMinority,
    #[error("class {0} is absent from the batch but required for pairing")]
    ClassAbsent(u8),
    #[error("invalid drop probability {0} (need 0 <= p < 1)")]
    InvalidDropProbability(f64),
    #[error("bag size q must be >= 1")]
    EmptyBag,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One pairwise-relation training sample: two graph ids and the surrogate
/// label (0 iff both members are majority graphs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSample {
    pub left_id: usize,
    pub right_id: usize,
    pub surrogate_label: u8,
}

/// The q stochastic subgraphs generated from one source graph.
#[derive(Debug, Clone)]
pub struct SubgraphBag {
    pub source_id: usize,
    pub subgraphs: Vec<Graph>,
    pub seed: u64,
}

impl SubgraphBag {
    pub fn source_label(&self) -> u8 {
        self.subgraphs[0].label
    }

    pub fn q(&self) -> usize {
        self.subgraphs.len()
    }
}

/// A pair of subgraph bags, referenced by index into the caller's bag list,
/// with the surrogate label (0 iff both sources are majority graphs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BagPair {
    pub left: usize,
    pub right: usize,
    pub surrogate_label: u8,
}

/// Surrogate pair label: 0 for (majority, majority), 1 otherwise.
pub fn pair_label(class_left: u8, class_right: u8) -> u8 {
    u8::from(class_left == MINORITY || class_right == MINORITY)
}

/// One epoch's worth of class-balanced ids: each majority id once, minority
/// ids duplicated round-robin (remainder assigned by seeded draw) up to the
/// majority count, all shuffled. Output length is 2M.
pub fn oversample_epoch(
    majority_ids: &[usize],
    minority_ids: &[usize],
    seed: u64,
) -> Result<Vec<usize>, SamplingError> {
    if minority_ids.is_empty() {
        return Err(SamplingError::NoMinority);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = majority_ids.len();
    let n = minority_ids.len();
    let mut out = Vec::with_capacity(2 * m);
    out.extend_from_slice(majority_ids);
    for &id in minority_ids {
        for _ in 0..m / n {
            out.push(id);
        }
    }
    let mut extras: Vec<usize> = minority_ids.to_vec();
    extras.shuffle(&mut rng);
    out.extend(extras.into_iter().take(m % n));
    out.shuffle(&mut rng);
    Ok(out)
}

/// [`oversample_epoch`] over a whole dataset.
pub fn oversample_dataset_epoch(
    ds: &crate::graph::GraphDataset,
    seed: u64,
) -> Result<Vec<usize>, SamplingError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let (majority, minority) = ds.ids_by_class(&all);
    oversample_epoch(&majority, &minority, seed)
}

/// Exactly n_pairs pairs: ceil(n/2) majority-majority (label 0) and the rest
/// label 1, the label-1 half split evenly between maj-min and min-min with
/// the remainder going to maj-min. Members are drawn with replacement and
/// left/right order is randomized.
pub fn make_pairs(
    batch: &[(usize, u8)],
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<PairSample>, SamplingError> {
    let majority: Vec<usize> =
        batch.iter().filter(|&&(_, c)| c != MINORITY).map(|&(id, _)| id).collect();
    let minority: Vec<usize> =
        batch.iter().filter(|&&(_, c)| c == MINORITY).map(|&(id, _)| id).collect();
    let n_maj_maj = n_pairs.div_ceil(2);
    let n_one = n_pairs - n_maj_maj;
    let n_min_min = n_one / 2;
    let n_maj_min = n_one - n_min_min;
    if majority.is_empty() && n_maj_maj + n_maj_min > 0 {
        return Err(SamplingError::ClassAbsent(0));
    }
    if minority.is_empty() && n_one > 0 {
        return Err(SamplingError::ClassAbsent(1));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |pool: &[usize], rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())];
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_maj_maj {
        let (a, b) = (draw(&majority, &mut rng), draw(&majority, &mut rng));
        pairs.push(PairSample { left_id: a, right_id: b, surrogate_label: 0 });
    }
    for _ in 0..n_maj_min {
        let (a, b) = (draw(&majority, &mut rng), draw(&minority, &mut rng));
        let (left_id, right_id) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        pairs.push(PairSample { left_id, right_id, surrogate_label: 1 });
    }
    for _ in 0..n_min_min {
        let (a, b) = (draw(&minority, &mut rng), draw(&minority, &mut rng));
        pairs.push(PairSample { left_id: a, right_id: b, surrogate_label: 1 });
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

/// q independent subgraph draws from one graph. Each draw removes nodes with
/// probability `node_drop` (keeping at least 2 nodes, or 1 for a 1-node
/// source), then removes each surviving induced edge with probability
/// `edge_drop`.
pub fn sample_subgraph_bag(
    g: &Graph,
    q: usize,
    node_drop: f64,
    edge_drop: f64,
    seed: u64,
) -> Result<SubgraphBag, SamplingError> {
    if q == 0 {
        return Err(SamplingError::EmptyBag);
    }
    for p in [node_drop, edge_drop] {
        if !(0.0..1.0).contains(&p) {
            return Err(SamplingError::InvalidDropProbability(p));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = if g.n_nodes() == 1 { 1 } else { 2 };
    let mut subgraphs = Vec::with_capacity(q);
    for _ in 0..q {
        let mut kept: Vec<usize> =
            (0..g.n_nodes()).filter(|_| !rng.gen_bool(node_drop)).collect();
        if kept.len() < floor {
            // re-add uniformly drawn removed nodes until the floor holds
            let kept_set: BTreeSet<usize> = kept.iter().copied().collect();
            let mut removed: Vec<usize> =
                (0..g.n_nodes()).filter(|v| !kept_set.contains(v)).collect();
            removed.shuffle(&mut rng);
            kept.extend(removed.into_iter().take(floor - kept.len()));
        }
        let keep_nodes: BTreeSet<usize> = kept.into_iter().collect();
        let keep_edges: BTreeSet<(usize, usize)> = g
            .edges
            .iter()
            .filter(|&&(u, v)| keep_nodes.contains(&u) && keep_nodes.contains(&v))
            .filter(|_| !rng.gen_bool(edge_drop))
            .copied()
            .collect();
        subgraphs.push(induced_subgraph(g, &keep_nodes, &keep_edges)?);
    }
    Ok(SubgraphBag { source_id: g.graph_id, subgraphs, seed })
}

/// Pair subgraph bags under the same balancing contract as [`make_pairs`].
/// Returned pairs index into `bags`.
pub fn make_bag_pairs(
    bags: &[SubgraphBag],
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<BagPair>, SamplingError> {
    let indexed: Vec<(usize, u8)> =
        bags.iter().enumerate().map(|(i, b)| (i, b.source_label())).collect();
    let pairs = make_pairs(&indexed, n_pairs, seed)?;
    Ok(pairs
        .into_iter()
        .map(|p| BagPair { left: p.left_id, right: p.right_id, surrogate_label: p.surrogate_label })
        .collect())
}
