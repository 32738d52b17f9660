use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// Rounds `fractions * n` per subset; the test subset absorbs rounding
    /// so the total never exceeds `n`.
    pub fn from_fractions(n: usize, fractions: [f64; 3]) -> Result<Self> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || sum > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!("split fractions {fractions:?} must be in [0, 1] and sum to at most 1")));
        }
        let train = (fractions[0] * n as f64).round() as usize;
        let val = ((fractions[1] * n as f64).round() as usize).min(n - train.min(n));
        let test = ((fractions[2] * n as f64).round() as usize).min(n - (train + val).min(n));
        Ok(Self { train: train.min(n), val, test })
    }
}

/// Seeded shuffle, then consecutive train / val / test slices.
pub fn split(dataset: Dataset, counts: SplitCounts, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    if counts.total() > dataset.len() {
        return Err(Error::InsufficientData { needed: counts.total(), available: dataset.len() });
    }
    let classes = dataset.classes.clone();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut slots: Vec<Option<_>> = dataset.items.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>| -> Dataset {
        let items = order[range].iter().map(|&i| slots[i].take().expect("each index taken once")).collect();
        Dataset { items, classes: classes.clone() }
    };
    let a = counts.train;
    let b = a + counts.val;
    let c = b + counts.test;
    Ok((take(0..a), take(a..b), take(b..c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DataItem;
    use crate::image::ImageBuffer;
    use crate::mask::MaskSet;
    use std::collections::HashSet;

    fn dataset(n: usize) -> Dataset {
        let items = (0..n)
            .map(|i| DataItem { id: format!("img{i}"), image: ImageBuffer::filled(1, 1, [0.0; 3]), masks: MaskSet::empty(1, 1) })
            .collect();
        Dataset::new(items, Dataset::default_classes()).unwrap()
    }

    fn ids(d: &Dataset) -> Vec<String> {
        d.items().iter().map(|i| i.id.clone()).collect()
    }

    #[test]
    fn exact_sizes_and_disjoint() {
        let counts = SplitCounts { train: 500, val: 200, test: 55 };
        let (tr, va, te) = split(dataset(755), counts, 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (500, 200, 55));
        let all: HashSet<String> = ids(&tr).into_iter().chain(ids(&va)).chain(ids(&te)).collect();
        assert_eq!(all.len(), 755);
    }

    #[test]
    fn deterministic_per_seed() {
        let counts = SplitCounts { train: 5, val: 3, test: 2 };
        let a = split(dataset(12), counts, 1).unwrap();
        let b = split(dataset(12), counts, 1).unwrap();
        assert_eq!(ids(&a.0), ids(&b.0));
        assert_eq!(ids(&a.2), ids(&b.2));
        let c = split(dataset(12), counts, 2).unwrap();
        assert_ne!((ids(&a.0), ids(&a.1)), (ids(&c.0), ids(&c.1)));
    }

    #[test]
    fn all_to_train() {
        let (tr, va, te) = split(dataset(10), SplitCounts { train: 10, val: 0, test: 0 }, 0).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (10, 0, 0));
    }

    #[test]
    fn too_many_requested() {
        let err = split(dataset(3), SplitCounts { train: 2, val: 1, test: 1 }, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 4, available: 3 }));
    }

    #[test]
    fn fractions() {
        assert_eq!(SplitCounts::from_fractions(40, [0.6, 0.2, 0.2]).unwrap(), SplitCounts { train: 24, val: 8, test: 8 });
        assert_eq!(SplitCounts::from_fractions(3, [0.5, 0.5, 0.5]).is_err(), true);
        let c = SplitCounts::from_fractions(7, [0.5, 0.25, 0.25]).unwrap();
        assert!(c.total() <= 7);
    }
}
