//! Deterministic partition of query indices into contiguous class groups.
//!
//! `N` queries split into `K` groups: with `n = N / K` and `r = N - K * n`,
//! the first `r` groups receive `n + 1` queries and the remaining `K - r`
//! groups receive `n`.  Groups are contiguous index ranges, so group 0 is
//! `0..size_0`, group 1 starts at `size_0`, and so on.

use std::ops::Range;

use crate::error::{Error, Result};

/// A partition of `N` query indices into `K` contiguous groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    total: usize,
    sizes: Vec<usize>,
    starts: Vec<usize>,
    group_of: Vec<usize>,
}

impl PartitionSpec {
    /// Number of queries covered by the partition.
    pub fn total_queries(&self) -> usize {
        self.total
    }

    /// Number of groups.
    pub fn classes(&self) -> usize {
        self.sizes.len()
    }

    /// Sizes of all groups in order.
    pub fn group_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Group index of query `i`.
    #[inline]
    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    /// Index range of the queries in group `k`.
    pub fn members(&self, k: usize) -> Range<usize> {
        self.starts[k]..self.starts[k] + self.sizes[k]
    }

    /// Number of groups that received the larger size `n + 1`.
    pub fn larger_group_count(&self) -> usize {
        self.total - self.classes() * (self.total / self.classes())
    }

    /// True when queries `a` and `b` belong to the same group.
    #[inline]
    pub fn same_group(&self, a: usize, b: usize) -> bool {
        self.group_of[a] == self.group_of[b]
    }
}

/// Partitions `n` query indices into `k` contiguous groups.
///
/// Fails when `k == 0`, `n == 0`, or `k > n` (a group would be empty).
pub fn partition_queries(n: usize, k: usize) -> Result<PartitionSpec> {
    if n == 0 {
        return Err(Error::InvalidConfig("partition needs at least one query".into()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("partition needs at least one group".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "cannot partition {n} queries into {k} non-empty groups"
        )));
    }
    let base = n / k;
    let remainder = n - k * base;
    let mut sizes = Vec::with_capacity(k);
    let mut starts = Vec::with_capacity(k);
    let mut group_of = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for g in 0..k {
        let size = if g < remainder { base + 1 } else { base };
        starts.push(cursor);
        sizes.push(size);
        group_of.extend(std::iter::repeat(g).take(size));
        cursor += size;
    }
    debug_assert_eq!(cursor, n);
    Ok(PartitionSpec { total: n, sizes, starts, group_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split() {
        let p = partition_queries(30, 5).unwrap();
        assert_eq!(p.group_sizes(), &[6, 6, 6, 6, 6]);
        assert_eq!(p.members(0), 0..6);
        assert_eq!(p.members(4), 24..30);
        assert_eq!(p.larger_group_count(), 0);
    }

    #[test]
    fn remainder_goes_to_leading_groups() {
        let p = partition_queries(10, 3).unwrap();
        assert_eq!(p.group_sizes(), &[4, 3, 3]);
        assert_eq!(p.members(0), 0..4);
        assert_eq!(p.members(1), 4..7);
        assert_eq!(p.members(2), 7..10);
        assert_eq!(p.larger_group_count(), 1);
        assert_eq!(p.group_of(3), 0);
        assert_eq!(p.group_of(4), 1);
    }

    #[test]
    fn singleton_groups() {
        let p = partition_queries(4, 4).unwrap();
        assert_eq!(p.group_sizes(), &[1, 1, 1, 1]);
    }

    #[test]
    fn one_group_takes_everything() {
        let p = partition_queries(7, 1).unwrap();
        assert_eq!(p.group_sizes(), &[7]);
        assert!(p.same_group(0, 6));
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(partition_queries(3, 5).is_err());
        assert!(partition_queries(0, 1).is_err());
        assert!(partition_queries(3, 0).is_err());
    }

    #[test]
    fn exhaustive_small_cases_cover_and_order() {
        for n in 1..=60 {
            for k in 1..=n {
                let p = partition_queries(n, k).unwrap();
                assert_eq!(p.group_sizes().iter().sum::<usize>(), n);
                let base = n / k;
                let r = n - k * base;
                for (g, &s) in p.group_sizes().iter().enumerate() {
                    assert_eq!(s, if g < r { base + 1 } else { base });
                }
                // Contiguity: group indices are non-decreasing over queries.
                for i in 1..n {
                    assert!(p.group_of(i) >= p.group_of(i - 1));
                }
            }
        }
    }
}
