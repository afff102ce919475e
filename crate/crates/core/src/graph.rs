//! Canonical in-memory graph representation shared by every module.
//! Graphs are undirected, immutable after construction, and validated at
//! the boundary.

use crate::tensor::Tensor;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum GraphError {
    #[error("graph {graph_id}: edge endpoint {endpoint} out of range for {n_nodes} nodes")]
    EndpointOutOfRange { graph_id: usize, endpoint: usize, n_nodes: usize },
    #[error("graph {graph_id}: duplicate edge ({0}, {1})", .edge.0, .edge.1)]
    DuplicateEdge { graph_id: usize, edge: (usize, usize) },
    #[error("graph {graph_id}: self-loop on node {node}")]
    SelfLoop { graph_id: usize, node: usize },
    #[error("graph {graph_id}: empty graph")]
    EmptyGraph { graph_id: usize },
    #[error("graph {graph_id}: feature matrix has {rows} rows for {n_nodes} nodes")]
    FeatureShapeMismatch { graph_id: usize, rows: usize, n_nodes: usize },
    #[error("induced subgraph needs a nonempty node set")]
    EmptyKeepSet,
    #[error("graph {graph_id}: node {node} has degree {degree} > max_degree {max_degree}")]
    DegreeExceedsMax { graph_id: usize, node: usize, degree: usize, max_degree: usize },
    #[error("label {0} is not binary (expected 0 or 1)")]
    NonBinaryLabel(u8),
}

/// Majority class id.
pub const MAJORITY: u8 = 0;
/// Minority class id.
pub const MINORITY: u8 = 1;

/// One attributed undirected graph. Edges are stored once each in canonical
/// (smaller index first) order; self-loops only ever appear inside adjacency
/// normalization, never here.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub node_features: Tensor,
    pub edges: Vec<(usize, usize)>,
    pub label: u8,
    pub graph_id: usize,
}

impl Graph {
    /// Build and validate. Edge pairs may arrive in either orientation; they
    /// are canonicalized and must be unique.
    pub fn new(
        node_features: Tensor,
        edges: Vec<(usize, usize)>,
        label: u8,
        graph_id: usize,
    ) -> Result<Self, GraphError> {
        let mut canonical: Vec<(usize, usize)> =
            edges.into_iter().map(|(u, v)| if u <= v { (u, v) } else { (v, u) }).collect();
        canonical.sort_unstable();
        let g = Self { node_features, edges: canonical, label, graph_id };
        g.validate()?;
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    /// Check every structural invariant; a constructed Graph always passes.
    pub fn validate(&self) -> Result<(), GraphError> {
        let id = self.graph_id;
        let n = self.n_nodes();
        if n == 0 {
            return Err(GraphError::EmptyGraph { graph_id: id });
        }
        if self.label != MAJORITY && self.label != MINORITY {
            return Err(GraphError::NonBinaryLabel(self.label));
        }
        let mut seen = BTreeSet::new();
        for &(u, v) in &self.edges {
            if u == v {
                return Err(GraphError::SelfLoop { graph_id: id, node: u });
            }
            for e in [u, v] {
                if e >= n {
                    return Err(GraphError::EndpointOutOfRange {
                        graph_id: id,
                        endpoint: e,
                        n_nodes: n,
                    });
                }
            }
            let key = if u < v { (u, v) } else { (v, u) };
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge { graph_id: id, edge: key });
            }
        }
        Ok(())
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0usize; self.n_nodes()];
        for &(u, v) in &self.edges {
            d[u] += 1;
            d[v] += 1;
        }
        d
    }

    /// Sorted degree sequence, used for cheap isomorphism-invariant checks.
    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut d = self.degrees();
        d.sort_unstable();
        d
    }
}

/// Validate and pass through: returns the graph unchanged when every
/// structural invariant holds.
pub fn validate_graph(g: Graph) -> Result<Graph, GraphError> {
    g.validate()?;
    Ok(g)
}

/// Induced subgraph over `keep_nodes`, restricted further to `keep_edges`.
/// Retained nodes are reindexed densely while preserving their relative
/// order; features are copied row-wise and the label is inherited.
pub fn induced_subgraph(
    g: &Graph,
    keep_nodes: &BTreeSet<usize>,
    keep_edges: &BTreeSet<(usize, usize)>,
) -> Result<Graph, GraphError> {
    if keep_nodes.is_empty() {
        return Err(GraphError::EmptyKeepSet);
    }
    if let Some(&bad) = keep_nodes.iter().find(|&&v| v >= g.n_nodes()) {
        return Err(GraphError::EndpointOutOfRange {
            graph_id: g.graph_id,
            endpoint: bad,
            n_nodes: g.n_nodes(),
        });
    }
    let mut remap = vec![usize::MAX; g.n_nodes()];
    let mut rows = Vec::with_capacity(keep_nodes.len());
    for (new_idx, &old) in keep_nodes.iter().enumerate() {
        remap[old] = new_idx;
        rows.push(g.node_features.row(old).to_vec());
    }
    let features = Tensor::from_rows(&rows).expect("row-copied features");
    let edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .filter(|&&(u, v)| {
            remap[u] != usize::MAX && remap[v] != usize::MAX && keep_edges.contains(&(u, v))
        })
        .map(|&(u, v)| (remap[u], remap[v]))
        .collect();
    Graph::new(features, edges, g.label, g.graph_id)
}

/// Replace node features by one-hot encodings of node degree
/// (d_feat = max_degree + 1).
pub fn degree_onehot_features(g: &Graph, max_degree: usize) -> Result<Graph, GraphError> {
    let degrees = g.degrees();
    if let Some((node, &degree)) = degrees.iter().enumerate().find(|&(_, &d)| d > max_degree) {
        return Err(GraphError::DegreeExceedsMax { graph_id: g.graph_id, node, degree, max_degree });
    }
    let width = max_degree + 1;
    let mut features = Tensor::zeros(g.n_nodes(), width);
    for (i, &d) in degrees.iter().enumerate() {
        features.set(i, d, 1.0);
    }
    Ok(Graph {
        node_features: features,
        edges: g.edges.clone(),
        label: g.label,
        graph_id: g.graph_id,
    })
}

/// An ordered collection of graphs with majority/minority bookkeeping.
/// The label convention {0 = majority, 1 = minority} is enforced at
/// construction: if class 1 outnumbers class 0, labels are flipped and the
/// swap is recorded.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    pub graphs: Vec<Graph>,
    pub majority_count: usize,
    pub minority_count: usize,
    pub labels_swapped: bool,
    pub name: String,
    pub feature_kind: FeatureKind,
}

/// How node features were produced, kept so datasets can be written back out
/// and checkpoints can verify compatibility.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum FeatureKind {
    /// One-hot over the dataset's distinct node labels (original values kept
    /// for round-tripping).
    NodeLabelOneHot { vocab: Vec<i64> },
    /// One-hot of node degree with the dataset-wide maximum degree.
    DegreeOneHot { max_degree: usize },
}

impl FeatureKind {
    pub fn width(&self) -> usize {
        match self {
            FeatureKind::NodeLabelOneHot { vocab } => vocab.len(),
            FeatureKind::DegreeOneHot { max_degree } => max_degree + 1,
        }
    }
}

impl GraphDataset {
    pub fn new(mut graphs: Vec<Graph>, name: &str, feature_kind: FeatureKind) -> Self {
        let ones = graphs.iter().filter(|g| g.label == MINORITY).count();
        let zeros = graphs.len() - ones;
        let labels_swapped = ones > zeros;
        if labels_swapped {
            for g in &mut graphs {
                g.label = 1 - g.label;
            }
        }
        let minority_count = graphs.iter().filter(|g| g.label == MINORITY).count();
        let majority_count = graphs.len() - minority_count;
        Self {
            graphs,
            majority_count,
            minority_count,
            labels_swapped,
            name: name.to_string(),
            feature_kind,
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Imbalance ratio M/N.
    pub fn ratio(&self) -> f64 {
        self.majority_count as f64 / self.minority_count as f64
    }

    pub fn graph(&self, id: usize) -> &Graph {
        &self.graphs[id]
    }

    pub fn label_of(&self, id: usize) -> u8 {
        self.graphs[id].label
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    pub fn ids_by_class(&self, ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut majority = Vec::new();
        let mut minority = Vec::new();
        for &id in ids {
            if self.label_of(id) == MINORITY {
                minority.push(id);
            } else {
                majority.push(id);
            }
        }
        (majority, minority)
    }

    /// FNV-1a hash over the dataset's structure, features, and labels. Used
    /// to fingerprint runs for replay.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_usize(self.graphs.len());
        for g in &self.graphs {
            h.write_usize(g.n_nodes());
            h.write_usize(g.label as usize);
            for &(u, v) in &g.edges {
                h.write_usize(u);
                h.write_usize(v);
            }
            for &x in g.node_features.as_slice() {
                h.write_u64(x.to_bits());
            }
        }
        h.finish()
    }
}

/// Minimal FNV-1a, enough for config and dataset fingerprints.
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf29ce484222325)
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_usize(&mut self, v: usize) {
        self.write_u64(v as u64);
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}
