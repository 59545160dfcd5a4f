use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Row indices of one cross-validation split, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold assignment. Rows of each class are shuffled with a
/// seeded RNG, then all classes are dealt round-robin onto the folds with
/// one running counter, so per-class and total fold sizes both differ by
/// at most one.
pub fn stratified_folds(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if k > ds.len() {
        return Err(Error::KTooLarge { k, rows: ds.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.label_set().len()];
    for (row, &t) in ds.targets().iter().enumerate() {
        by_class[t].push(row);
    }
    let mut assignment = vec![0usize; ds.len()];
    let mut counter = 0usize;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            assignment[r] = counter % k;
            counter += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&r| assignment[r] == f);
            Fold { train, test }
        })
        .collect())
}
