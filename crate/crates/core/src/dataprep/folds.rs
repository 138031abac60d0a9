use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    /// Ids in fold `i`, sorted.
    pub fn fold(&self, i: usize) -> Vec<&str> {
        self.assignment.iter().filter(|&(_, &f)| f == i).map(|(id, _)| id.as_str()).collect()
    }

    /// Ids outside fold `i`, sorted.
    pub fn complement(&self, i: usize) -> Vec<&str> {
        self.assignment.iter().filter(|&(_, &f)| f != i).map(|(id, _)| id.as_str()).collect()
    }
}

/// Seeded shuffle followed by round-robin assignment to `k` folds.
pub fn make_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldSplit> {
    if k == 0 || ids.len() < k {
        return Err(Error::invalid(format!("cannot split {} ids into {k} folds", ids.len())));
    }
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(Error::invalid("fold ids must be unique"));
    }
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = sorted.into_iter().enumerate().map(|(i, id)| (id.clone(), i % k)).collect();
    Ok(FoldSplit { k, seed, assignment })
}
