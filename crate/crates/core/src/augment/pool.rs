use std::collections::VecDeque;

use crate::data::{DataPoint, Origin};
use crate::error::{Error, Result};

/// Pool capacity: the total generation budget, but never more than half of
/// the training set.
pub fn pool_cap(samples_per_round: usize, rounds: usize, train_len: usize) -> usize {
    samples_per_round.saturating_mul(rounds.max(1)).min(train_len / 2)
}

/// FIFO store of synthetic points; the oldest are evicted first.
#[derive(Clone, Debug, Default)]
pub struct SyntheticPool {
    cap: usize,
    items: VecDeque<DataPoint>,
}

impl SyntheticPool {
    pub fn new(cap: usize) -> Self {
        Self { cap, items: VecDeque::new() }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&DataPoint> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DataPoint> {
        self.items.iter()
    }

    /// Append in order, then drop from the front until within capacity.
    /// Returns how many items were evicted.
    pub fn insert(&mut self, items: impl IntoIterator<Item = DataPoint>) -> Result<usize> {
        let before = self.items.len();
        let mut added = 0;
        for x in items {
            if x.origin != Origin::Synthetic {
                return Err(Error::Validation("only synthetic points may enter the pool".into()));
            }
            if let Some(last) = self.items.back() {
                if x.created_epoch < last.created_epoch {
                    return Err(Error::Validation("pool insertions must be in creation order".into()));
                }
            }
            self.items.push_back(x);
            added += 1;
        }
        let excess = self.items.len().saturating_sub(self.cap);
        self.items.drain(..excess);
        Ok(before + added - self.items.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Mask, Mat};
    use proptest::prelude::*;

    fn syn(tag: f64, epoch: usize) -> DataPoint {
        DataPoint::original(Mat::from_vec(1, 1, vec![tag]).unwrap(), Mat::zeros(1, 1), Mask::zeros(1, 1))
            .synthetic_from(Mat::from_vec(1, 1, vec![tag]).unwrap(), epoch)
    }

    #[test]
    fn fifo_eviction() {
        let mut pool = SyntheticPool::new(3);
        let evicted = pool.insert((0..5).map(|i| syn(i as f64, 0))).unwrap();
        assert_eq!(evicted, 2);
        let tags: Vec<f64> = pool.iter().map(|x| x.e.get(0, 0)).collect();
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
        assert_eq!(pool.insert(std::iter::empty()).unwrap(), 0);
        assert_eq!(pool.len(), 3);
    }

    #[test]
    fn half_training_set_cap() {
        let mut pool = SyntheticPool::new(pool_cap(32_000, 10, 100));
        pool.insert((0..60).map(|i| syn(i as f64, 1))).unwrap();
        assert_eq!(pool.len(), 50);
    }

    #[test]
    fn originals_rejected() {
        let mut pool = SyntheticPool::new(3);
        let x = DataPoint::original(Mat::zeros(1, 1), Mat::zeros(1, 1), Mask::zeros(1, 1));
        assert!(pool.insert([x]).is_err());
        assert!(pool.insert([syn(0.0, 2), syn(1.0, 1)]).is_err());
    }

    proptest! {
        #[test]
        fn never_exceeds_cap(train_len in 0usize..200, batches in proptest::collection::vec(0usize..40, 1..30)) {
            let cap = pool_cap(32_000, 1, train_len);
            let mut pool = SyntheticPool::new(cap);
            let mut epoch = 0;
            for b in batches {
                epoch += 1;
                pool.insert((0..b).map(|i| syn(i as f64, epoch))).unwrap();
                prop_assert!(pool.len() <= cap);
                prop_assert!(pool.len() <= train_len / 2);
                let epochs: Vec<usize> = pool.iter().map(|x| x.created_epoch).collect();
                prop_assert!(epochs.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
