use crate::error::{Error, Result};
use crate::strategy::{StageId, StageParams, Strategy};

/// Every subset of `stages` (duplicates ignored), each in canonical stage
/// order, sorted by size and then lexicographically by stage position.
/// Includes the empty baseline.
pub fn enumerate_subsets(stages: &[StageId], params: &StageParams) -> Vec<Strategy> {
    let mut pool = stages.to_vec();
    pool.sort();
    pool.dedup();
    let n = pool.len();
    let mut subsets: Vec<Vec<StageId>> =
        (0u32..1 << n).map(|bits| (0..n).filter(|i| bits & (1 << i) != 0).map(|i| pool[i]).collect()).collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| Strategy::new(s, params.clone()).expect("subsets of a deduplicated pool have no repeats"))
        .collect()
}

/// All orderings of `strategy`'s stages in lexicographic order (by
/// canonical stage position), sharing its parameters.
pub fn enumerate_permutations(strategy: &Strategy) -> Result<Vec<Strategy>> {
    if strategy.is_empty() {
        return Err(Error::EmptyStrategy);
    }
    let mut current = strategy.stages().to_vec();
    current.sort();
    let mut out = Vec::new();
    loop {
        out.push(Strategy::new(current.clone(), strategy.params().clone())?);
        // Standard next-permutation step.
        let Some(i) = (0..current.len() - 1).rev().find(|&i| current[i] < current[i + 1]) else {
            return Ok(out);
        };
        let j = (i + 1..current.len()).rev().find(|&j| current[j] > current[i]).expect("a larger element exists");
        current.swap(i, j);
        current[i + 1..].reverse();
    }
}
