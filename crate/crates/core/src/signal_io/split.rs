//! Group-level k-fold splitting (subject- or session-independent).
//!
//! Groups are shuffled by a seeded permutation. Fold `i`'s test window
//! starts at the `i`-th partition offset (remainders of `G / k` go to the
//! earliest folds) and spans `h = max(1, floor(G / (k + 2)))` groups; the
//! validation window is the next `h` groups (cyclically) and every other
//! group trains. This reproduces the 44/5/5 (G=54), 33/4/4 (G=41) and
//! 6/1/1 (G=8) allocations for k = 8, and reduces to a plain partition of
//! test groups when `k == G`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{CssmError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl FoldSplit {
    pub fn all_groups(&self) -> impl Iterator<Item = &u32> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<u32> = self.all_groups().copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }
}

/// Sizing metadata reported alongside a set of folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_groups: usize,
    pub k: usize,
    pub holdout_groups: usize,
    pub fold_offsets: Vec<usize>,
}

pub fn plan_split(n_groups: usize, k: usize) -> Result<SplitPlan> {
    if k < 1 {
        return Err(CssmError::config("k must be at least 1"));
    }
    if n_groups < k {
        return Err(CssmError::config(format!(
            "k = {k} exceeds the number of distinct groups ({n_groups})"
        )));
    }
    let holdout = (n_groups / (k + 2)).max(1);
    if n_groups < 2 * holdout + 1 {
        return Err(CssmError::config(format!(
            "{n_groups} groups cannot fill train/val/test"
        )));
    }
    let base = n_groups / k;
    let rem = n_groups % k;
    let mut offsets = Vec::with_capacity(k);
    let mut acc = 0;
    for i in 0..k {
        offsets.push(acc);
        acc += base + usize::from(i < rem);
    }
    Ok(SplitPlan {
        n_groups,
        k,
        holdout_groups: holdout,
        fold_offsets: offsets,
    })
}

pub fn kfold_groups(groups: &[u32], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let mut order = groups.to_vec();
    order.sort_unstable();
    order.dedup();
    let plan = plan_split(order.len(), k)?;
    let mut r = rng::seeded(seed, rng::stream::SPLIT);
    order.shuffle(&mut r);
    let g = order.len();
    let h = plan.holdout_groups;
    Ok(plan
        .fold_offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| {
            let pick =
                |start: usize| -> Vec<u32> { (0..h).map(|j| order[(start + j) % g]).collect() };
            let test = pick(off);
            let val = pick(off + h);
            let train = (0..g - 2 * h)
                .map(|j| order[(off + 2 * h + j) % g])
                .collect();
            FoldSplit {
                fold_index: i,
                train,
                val,
                test,
            }
        })
        .collect())
}

pub fn kfold_split(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    kfold_groups(&dataset.groups, k, seed)
}
