//! Median-of-means primitives shared by every tournament phase.

use std::ops::Range;

use crate::error::{invalid, Result};

/// A split of `0..N` into `n` contiguous blocks of `m` indices each.
///
/// When `n` does not divide `N`, the trailing `N - n*m` indices are left out
/// of every block and counted in `dropped`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    n: usize,
    m: usize,
    dropped: usize,
}

impl BlockPartition {
    pub fn new(sample_count: usize, block_count: usize) -> Result<Self> {
        if block_count < 1 || block_count > sample_count {
            return invalid(format!(
                "block count {block_count} must lie in 1..={sample_count}"
            ));
        }
        let m = sample_count / block_count;
        Ok(Self {
            n: block_count,
            m,
            dropped: sample_count - block_count * m,
        })
    }

    /// Number of blocks.
    pub fn blocks(&self) -> usize {
        self.n
    }

    /// Samples per block.
    pub fn block_size(&self) -> usize {
        self.m
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Total number of samples the partition was built for.
    pub fn sample_count(&self) -> usize {
        self.n * self.m + self.dropped
    }

    pub fn block(&self, j: usize) -> Range<usize> {
        debug_assert!(j < self.n);
        j * self.m..(j + 1) * self.m
    }

    pub fn index_sets(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n).map(move |j| self.block(j))
    }

    /// Per-block means of `values`, each summed in increasing index order.
    pub fn block_means(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len())?;
        let m = self.m as f64;
        Ok(self
            .index_sets()
            .map(|r| values[r].iter().sum::<f64>() / m)
            .collect())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len < self.n * self.m {
            return invalid(format!(
                "{len} values do not cover a partition of {} blocks of size {}",
                self.n, self.m
            ));
        }
        Ok(())
    }
}

pub fn partition_blocks(sample_count: usize, block_count: usize) -> Result<BlockPartition> {
    BlockPartition::new(sample_count, block_count)
}

/// Lower median: the element of rank `(n-1)/2` (0-based) after sorting.
pub fn lower_median(values: &mut [f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("median of an empty list");
    }
    let k = (values.len() - 1) / 2;
    let (_, med, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    Ok(*med)
}

pub fn median_of_block_means(values: &[f64], partition: &BlockPartition) -> Result<f64> {
    let mut means = partition.block_means(values)?;
    lower_median(&mut means)
}

/// `true` iff strictly more than half of the votes are `true`.
pub fn strict_majority(votes: &[bool]) -> bool {
    majority_count(votes.iter().filter(|v| **v).count(), votes.len())
}

#[inline]
pub(crate) fn majority_count(yes: usize, total: usize) -> bool {
    2 * yes > total
}
