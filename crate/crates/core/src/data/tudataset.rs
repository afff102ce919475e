//! TUDataset directory format, bit-exact:
//!   <name>_A.txt               one edge per line, "u, v", 1-indexed global node ids
//!   <name>_graph_indicator.txt line i holds the 1-indexed graph id of node i
//!   <name>_graph_labels.txt    one integer label per graph
//!   <name>_node_labels.txt     one integer per node (optional)
//!
//! Edges listed in both directions are merged into one undirected edge;
//! single-direction listings are accepted and symmetrized. Binary labels are
//! remapped to {0, 1} with the rarer class as 1.

use super::DataError;
use crate::graph::{FeatureKind, Graph, GraphDataset};
use crate::tensor::Tensor;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

fn read_lines(path: &Path) -> Result<Vec<String>, DataError> {
    let content = fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn parse_int(path: &Path, line_no: usize, token: &str) -> Result<i64, DataError> {
    token.trim().parse().map_err(|_| DataError::Malformed {
        path: path.display().to_string(),
        line: line_no + 1,
        message: format!("expected integer, got {token:?}"),
    })
}

/// Parse a TUDataset directory into a [`GraphDataset`]. Node features come
/// from `<name>_node_labels.txt` as one-hot over the dataset's label
/// vocabulary when present, otherwise from degree one-hot with the
/// dataset-wide maximum degree.
pub fn parse_tudataset(directory: &Path, name: &str) -> Result<GraphDataset, DataError> {
    let file = |suffix: &str| directory.join(format!("{name}_{suffix}.txt"));
    for mandatory in ["A", "graph_indicator", "graph_labels"] {
        if !file(mandatory).exists() {
            return Err(DataError::MissingFile(file(mandatory).display().to_string()));
        }
    }

    let indicator_path = file("graph_indicator");
    let indicator: Vec<usize> = read_lines(&indicator_path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_int(&indicator_path, i, l).map(|v| v as usize))
        .collect::<Result<_, _>>()?;
    let n_graphs = indicator.iter().copied().max().unwrap_or(0);

    // node id (1-indexed, global) -> (graph index, local node index)
    let mut local_of = Vec::with_capacity(indicator.len());
    let mut node_counts = vec![0usize; n_graphs];
    for &gid in &indicator {
        let g = gid - 1;
        local_of.push((g, node_counts[g]));
        node_counts[g] += 1;
    }

    let labels_path = file("graph_labels");
    let raw_labels: Vec<i64> = read_lines(&labels_path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse_int(&labels_path, i, l))
        .collect::<Result<_, _>>()?;
    if raw_labels.len() != n_graphs {
        return Err(DataError::Malformed {
            path: labels_path.display().to_string(),
            line: raw_labels.len(),
            message: format!("{} labels for {n_graphs} graphs", raw_labels.len()),
        });
    }
    let distinct: BTreeSet<i64> = raw_labels.iter().copied().collect();
    if distinct.len() != 2 {
        return Err(DataError::NonBinaryLabels(distinct.into_iter().collect()));
    }
    // rarer class becomes 1; on a tie the numerically larger raw label is 1
    let distinct: Vec<i64> = distinct.into_iter().collect();
    let count_of = |v: i64| raw_labels.iter().filter(|&&x| x == v).count();
    let (c0, c1) = (count_of(distinct[0]), count_of(distinct[1]));
    let minority_raw = if c1 <= c0 { distinct[1] } else { distinct[0] };
    let labels: Vec<u8> = raw_labels.iter().map(|&v| u8::from(v == minority_raw)).collect();

    let a_path = file("A");
    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); n_graphs];
    for (i, line) in read_lines(&a_path)?.iter().enumerate() {
        let mut parts = line.split(',');
        let (u_tok, v_tok) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        let u = parse_int(&a_path, i, u_tok)? as usize;
        let v = parse_int(&a_path, i, v_tok)? as usize;
        for e in [u, v] {
            if e == 0 || e > indicator.len() {
                return Err(DataError::Malformed {
                    path: a_path.display().to_string(),
                    line: i + 1,
                    message: format!("node id {e} outside 1..={}", indicator.len()),
                });
            }
        }
        let (gu, lu) = local_of[u - 1];
        let (gv, lv) = local_of[v - 1];
        if gu != gv {
            return Err(DataError::CrossGraphEdge { u, v, gu: gu + 1, gv: gv + 1 });
        }
        if lu == lv {
            return Err(DataError::Malformed {
                path: a_path.display().to_string(),
                line: i + 1,
                message: format!("self-loop on node {u}"),
            });
        }
        edge_sets[gu].insert((lu.min(lv), lu.max(lv)));
    }

    // node labels -> one-hot features, or degree one-hot when absent
    let node_labels_path = file("node_labels");
    let feature_kind;
    let mut graphs = Vec::with_capacity(n_graphs);
    if node_labels_path.exists() {
        let node_labels: Vec<i64> = read_lines(&node_labels_path)?
            .iter()
            .enumerate()
            .map(|(i, l)| {
                // some corpora put attributes after a comma; the label is first
                parse_int(&node_labels_path, i, l.split(',').next().unwrap_or(l))
            })
            .collect::<Result<_, _>>()?;
        if node_labels.len() != indicator.len() {
            return Err(DataError::Malformed {
                path: node_labels_path.display().to_string(),
                line: node_labels.len(),
                message: format!("{} node labels for {} nodes", node_labels.len(), indicator.len()),
            });
        }
        let vocab: Vec<i64> = node_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let index: BTreeMap<i64, usize> =
            vocab.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let width = vocab.len();
        let mut per_graph_labels: Vec<Vec<i64>> = vec![Vec::new(); n_graphs];
        for (node, &lab) in node_labels.iter().enumerate() {
            per_graph_labels[local_of[node].0].push(lab);
        }
        for (g, labs) in per_graph_labels.iter().enumerate() {
            let mut features = Tensor::zeros(node_counts[g], width);
            for (i, lab) in labs.iter().enumerate() {
                features.set(i, index[lab], 1.0);
            }
            graphs.push(Graph::new(
                features,
                edge_sets[g].iter().copied().collect(),
                labels[g],
                g,
            )?);
        }
        feature_kind = FeatureKind::NodeLabelOneHot { vocab };
    } else {
        // two passes: find the dataset-wide max degree, then one-hot
        let mut max_degree = 0;
        for (g, edges) in edge_sets.iter().enumerate() {
            let mut deg = vec![0usize; node_counts[g]];
            for &(u, v) in edges {
                deg[u] += 1;
                deg[v] += 1;
            }
            max_degree = max_degree.max(deg.into_iter().max().unwrap_or(0));
        }
        for (g, edges) in edge_sets.iter().enumerate() {
            let placeholder = Tensor::zeros(node_counts[g], 1);
            let graph =
                Graph::new(placeholder, edges.iter().copied().collect(), labels[g], g)?;
            graphs.push(crate::graph::degree_onehot_features(&graph, max_degree)?);
        }
        feature_kind = FeatureKind::DegreeOneHot { max_degree };
    }

    Ok(GraphDataset::new(graphs, name, feature_kind))
}

/// Write a dataset back out in TUDataset format (edges emitted in both
/// directions, the common convention). Node labels are emitted when the
/// dataset's features are node-label one-hots.
pub fn write_tudataset(ds: &GraphDataset, directory: &Path, name: &str) -> Result<(), DataError> {
    fs::create_dir_all(directory)
        .map_err(|source| DataError::Io { path: directory.display().to_string(), source })?;
    let open = |suffix: &str| -> Result<fs::File, DataError> {
        let p = directory.join(format!("{name}_{suffix}.txt"));
        fs::File::create(&p).map_err(|source| DataError::Io { path: p.display().to_string(), source })
    };
    let io_err = |source| DataError::Io { path: directory.display().to_string(), source };

    let mut a = open("A")?;
    let mut indicator = open("graph_indicator")?;
    let mut labels = open("graph_labels")?;
    let mut node_labels = match &ds.feature_kind {
        FeatureKind::NodeLabelOneHot { .. } => Some(open("node_labels")?),
        FeatureKind::DegreeOneHot { .. } => None,
    };

    let mut offset = 0usize; // global 1-indexed base for the current graph
    for (gi, g) in ds.graphs.iter().enumerate() {
        for &(u, v) in &g.edges {
            writeln!(a, "{}, {}", offset + u + 1, offset + v + 1).map_err(io_err)?;
            writeln!(a, "{}, {}", offset + v + 1, offset + u + 1).map_err(io_err)?;
        }
        for node in 0..g.n_nodes() {
            writeln!(indicator, "{}", gi + 1).map_err(io_err)?;
            if let (Some(f), FeatureKind::NodeLabelOneHot { vocab }) =
                (node_labels.as_mut(), &ds.feature_kind)
            {
                let row = g.node_features.row(node);
                let hot = row.iter().position(|&x| x == 1.0).unwrap_or(0);
                writeln!(f, "{}", vocab[hot]).map_err(io_err)?;
            }
        }
        writeln!(labels, "{}", g.label).map_err(io_err)?;
        offset += g.n_nodes();
    }
    Ok(())
}

/// Convert the adjacency-list text format used by several public graph
/// classification corpora into a TUDataset directory:
///
/// ```text
/// N                      number of graphs
/// n l                    per graph: node count and graph label
/// t d v1 ... vd          per node: node tag, degree, neighbor indices (0-based)
/// ```
pub fn convert_adjacency_list(input: &Path, out_dir: &Path, name: &str) -> Result<usize, DataError> {
    let lines = read_lines(input)?;
    let path_s = input.display().to_string();
    struct Cursor<'a> {
        lines: &'a [String],
        pos: usize,
        path: &'a str,
    }
    impl<'a> Cursor<'a> {
        fn next(&mut self, ctx: &str) -> Result<&'a String, DataError> {
            let l = self.lines.get(self.pos).ok_or_else(|| DataError::Malformed {
                path: self.path.to_string(),
                line: self.pos + 1,
                message: format!("unexpected end of file, wanted {ctx}"),
            })?;
            self.pos += 1;
            Ok(l)
        }
        fn line(&self) -> usize {
            self.pos
        }
    }
    let mut cur = Cursor { lines: &lines, pos: 0, path: &path_s };

    let n_graphs = parse_int(input, 0, cur.next("graph count")?)? as usize;
    let mut graphs = Vec::with_capacity(n_graphs);
    let mut all_tags = BTreeSet::new();
    type RawGraph = (Vec<i64>, Vec<(usize, usize)>, i64);
    let mut raw: Vec<RawGraph> = Vec::with_capacity(n_graphs);
    for _ in 0..n_graphs {
        let header = cur.next("graph header")?;
        let mut it = header.split_whitespace();
        let n: usize = parse_int(input, cur.line() - 1, it.next().unwrap_or(""))? as usize;
        let label = parse_int(input, cur.line() - 1, it.next().unwrap_or(""))?;
        let mut tags = Vec::with_capacity(n);
        let mut edges = BTreeSet::new();
        for node in 0..n {
            let line = cur.next("node row")?;
            let line_no = cur.line();
            let mut it = line.split_whitespace();
            let tag = parse_int(input, line_no - 1, it.next().unwrap_or(""))?;
            let degree = parse_int(input, line_no - 1, it.next().unwrap_or(""))? as usize;
            tags.push(tag);
            all_tags.insert(tag);
            for _ in 0..degree {
                let nb = parse_int(input, line_no - 1, it.next().unwrap_or(""))? as usize;
                if nb >= n {
                    return Err(DataError::Malformed {
                        path: path_s.clone(),
                        line: line_no,
                        message: format!("neighbor {nb} out of range for {n} nodes"),
                    });
                }
                if nb != node {
                    edges.insert((node.min(nb), node.max(nb)));
                }
            }
        }
        raw.push((tags, edges.into_iter().collect(), label));
    }

    let vocab: Vec<i64> = all_tags.into_iter().collect();
    let index: BTreeMap<i64, usize> = vocab.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let raw_graph_labels: Vec<i64> = raw.iter().map(|r| r.2).collect();
    let distinct: BTreeSet<i64> = raw_graph_labels.iter().copied().collect();
    if distinct.len() != 2 {
        return Err(DataError::NonBinaryLabels(distinct.into_iter().collect()));
    }
    let distinct: Vec<i64> = distinct.into_iter().collect();
    let count_of = |v: i64| raw_graph_labels.iter().filter(|&&x| x == v).count();
    let minority_raw =
        if count_of(distinct[1]) <= count_of(distinct[0]) { distinct[1] } else { distinct[0] };

    for (gi, (tags, edges, label)) in raw.into_iter().enumerate() {
        let mut features = Tensor::zeros(tags.len(), vocab.len());
        for (i, tag) in tags.iter().enumerate() {
            features.set(i, index[tag], 1.0);
        }
        graphs.push(Graph::new(features, edges, u8::from(label == minority_raw), gi)?);
    }
    let ds = GraphDataset::new(graphs, name, FeatureKind::NodeLabelOneHot { vocab });
    write_tudataset(&ds, out_dir, name)?;
    Ok(ds.len())
}
