//! Stratified k-fold splits with a validation slice carved out of each
//! fold's training portion.

use super::DataError;
use crate::graph::{GraphDataset, MINORITY};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Disjoint train/validation/test graph-id sets covering the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

impl FoldSplit {
    pub fn assert_disjoint(&self) {
        use std::collections::BTreeSet;
        let train: BTreeSet<_> = self.train_ids.iter().collect();
        let val: BTreeSet<_> = self.val_ids.iter().collect();
        let test: BTreeSet<_> = self.test_ids.iter().collect();
        assert!(train.intersection(&val).next().is_none(), "train/val overlap");
        assert!(train.intersection(&test).next().is_none(), "train/test leak");
        assert!(val.intersection(&test).next().is_none(), "val/test leak");
    }
}

/// Stratified k-fold: per-class ids are shuffled and cut into k chunks whose
/// sizes differ by at most one, so each fold's class proportions stay within
/// one sample of the global proportions. `val_fraction` of each fold's
/// training portion (per class, at least one graph) becomes the validation
/// slice used for threshold selection.
pub fn stratified_kfold(
    ds: &GraphDataset,
    k: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<Vec<FoldSplit>, DataError> {
    if k < 2 {
        return Err(DataError::InvalidSpec(format!("k = {k} must be >= 2")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(DataError::InvalidSpec("val_fraction outside [0, 1)".into()));
    }
    let all_ids: Vec<usize> = (0..ds.len()).collect();
    let (majority, minority) = ds.ids_by_class(&all_ids);
    for (class, ids) in [(0u8, &majority), (1u8, &minority)] {
        if ids.len() < k {
            return Err(DataError::TooFewForFolds { class, count: ids.len(), k });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunk = |ids: &[usize], rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        let mut shuffled = ids.to_vec();
        shuffled.shuffle(rng);
        let base = shuffled.len() / k;
        let extra = shuffled.len() % k;
        let mut chunks = Vec::with_capacity(k);
        let mut at = 0;
        for i in 0..k {
            let size = base + usize::from(i < extra);
            chunks.push(shuffled[at..at + size].to_vec());
            at += size;
        }
        chunks
    };
    let maj_chunks = chunk(&majority, &mut rng);
    let min_chunks = chunk(&minority, &mut rng);

    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let mut test_ids = maj_chunks[fold].clone();
        test_ids.extend(&min_chunks[fold]);
        test_ids.sort_unstable();

        let mut train_ids = Vec::new();
        let mut val_ids = Vec::new();
        for (class, chunks) in [(0u8, &maj_chunks), (1u8, &min_chunks)] {
            let mut pool: Vec<usize> = chunks
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != fold)
                .flat_map(|(_, c)| c.iter().copied())
                .collect();
            pool.shuffle(&mut rng);
            let n_val = ((pool.len() as f64 * val_fraction).round() as usize).max(1);
            if pool.len() <= n_val {
                return Err(DataError::EmptyClassInSplit { class, part: "train" });
            }
            val_ids.extend(pool.drain(..n_val));
            train_ids.extend(pool);
        }
        train_ids.sort_unstable();
        val_ids.sort_unstable();

        let split = FoldSplit { train_ids, val_ids, test_ids };
        split.assert_disjoint();
        for (part, ids) in
            [("train", &split.train_ids), ("val", &split.val_ids), ("test", &split.test_ids)]
        {
            if !ids.iter().any(|&id| ds.label_of(id) == MINORITY) {
                return Err(DataError::EmptyClassInSplit { class: 1, part });
            }
            if !ids.iter().any(|&id| ds.label_of(id) != MINORITY) {
                return Err(DataError::EmptyClassInSplit { class: 0, part });
            }
        }
        folds.push(split);
    }
    Ok(folds)
}
