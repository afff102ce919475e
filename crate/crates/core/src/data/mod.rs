//! Dataset ingestion: TUDataset-format parsing and writing, synthetic
//! imbalanced corpora for testing, and stratified cross-validation folds.

mod folds;
mod synthetic;
mod tudataset;

pub use folds::{stratified_kfold, FoldSplit};
pub use synthetic::{generate_synthetic, Motif, SyntheticSpec};
pub use tudataset::{convert_adjacency_list, parse_tudataset, write_tudataset};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("missing mandatory file {0}")]
    MissingFile(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("edge ({u}, {v}) crosses graphs {gu} and {gv}")]
    CrossGraphEdge { u: usize, v: usize, gu: usize, gv: usize },
    #[error("label set {0:?} is not binary")]
    NonBinaryLabels(Vec<i64>),
    #[error("class {class} has {count} samples, fewer than k = {k}")]
    TooFewForFolds { class: u8, count: usize, k: usize },
    #[error("fold split leaves class {class} empty in the {part} partition")]
    EmptyClassInSplit { class: u8, part: &'static str },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}
