use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{DolceError, Result};
use crate::rng::rng_from_seed;

/// Partition of sample indices into cross-fitting folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(DolceError::InvalidConfig(format!("K_cf must be at least 2, got {k}")));
    }
    if n < 2 * k {
        return Err(DolceError::InvalidConfig(format!("n = {n} is too small for {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

impl FoldAssignment {
    /// Wraps an explicit assignment after checking the fold invariants.
    pub fn from_vec(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0usize; k];
        for &f in &fold_of {
            if f >= k {
                return Err(DolceError::InvalidConfig(format!("fold id {f} >= {k}")));
            }
            sizes[f] += 1;
        }
        if sizes.iter().any(|s| *s == 0) {
            return Err(DolceError::InvalidConfig("every fold must be nonempty".into()));
        }
        Ok(Self { fold_of, k })
    }

    pub fn num_folds(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    #[inline]
    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn test_indices(&self, j: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] == j).collect()
    }

    pub fn train_indices(&self, j: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] != j).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}
