use std::ops::Range;

use super::shard::{ShardDims, TokenFrame};
use crate::{Error, Result};

/// A re-streamable sequence of token frames. Multi-pass algorithms (maximum
/// scan, tiled accumulation) stream the same source more than once, and
/// workers stream disjoint position ranges of it concurrently.
pub trait FrameSource: Sync {
    fn dims(&self) -> ShardDims;

    fn n_tokens(&self) -> u64;

    /// Splits the position space into at most `n` contiguous ranges that
    /// together cover `0..n_tokens`.
    fn partitions(&self, n: usize) -> Vec<Range<u64>> {
        even_partitions(self.n_tokens(), n)
    }

    /// Calls `f` on every frame whose position lies in `range`, in order.
    fn for_each_frame(&self, range: Range<u64>, f: &mut dyn FnMut(&TokenFrame) -> Result<()>) -> Result<()>;
}

pub(crate) fn even_partitions(n_tokens: u64, n: usize) -> Vec<Range<u64>> {
    let n = (n.max(1) as u64).min(n_tokens.max(1));
    let per = n_tokens.div_ceil(n).max(1);
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n_tokens {
        let end = (start + per).min(n_tokens);
        parts.push(start..end);
        start = end;
    }
    if parts.is_empty() {
        parts.push(0..0);
    }
    parts
}

/// In-memory frames; positions must equal their index.
pub struct VecSource {
    dims: ShardDims,
    frames: Vec<TokenFrame>,
}

impl VecSource {
    pub fn new(dims: ShardDims, frames: Vec<TokenFrame>) -> Result<Self> {
        for (i, frame) in frames.iter().enumerate() {
            if frame.position != i as u64 {
                return Err(Error::Invalid(format!("frame {i} has position {}", frame.position)));
            }
            frame.validate(dims)?;
        }
        Ok(Self { dims, frames })
    }

    pub fn frames(&self) -> &[TokenFrame] {
        &self.frames
    }
}

impl FrameSource for VecSource {
    fn dims(&self) -> ShardDims {
        self.dims
    }

    fn n_tokens(&self) -> u64 {
        self.frames.len() as u64
    }

    fn for_each_frame(&self, range: Range<u64>, f: &mut dyn FnMut(&TokenFrame) -> Result<()>) -> Result<()> {
        let end = (range.end as usize).min(self.frames.len());
        let start = (range.start as usize).min(end);
        self.frames[start..end].iter().try_for_each(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_partitions_cover_the_range() {
        for (n_tokens, n) in [(0, 3), (1, 4), (10, 3), (10, 10), (7, 1), (5, 9)] {
            let parts = even_partitions(n_tokens, n);
            assert!(parts.len() <= n.max(1));
            assert_eq!(parts.first().unwrap().start, 0);
            assert_eq!(parts.last().unwrap().end, n_tokens);
            for w in parts.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
        }
    }
}
