//! Block partitions: the sizes d_1..d_g dividing the M rows of a frame into
//! contiguous blocks. Sizes need not be equal.

use crate::error::{Result, StcsError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(StcsError::InvalidDimension(
                "partition needs at least one block".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(StcsError::InvalidDimension(
                "every block size must be at least 1".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0usize;
        for &d in &sizes {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self { sizes, offsets })
    }

    /// Equal blocks of `block` rows; when `block` does not divide `m`, the
    /// final block absorbs the remainder (so a 500-row frame with block 33
    /// yields 14 blocks of 33 and one of 38).
    pub fn uniform(m: usize, block: usize) -> Result<Self> {
        if m == 0 || block == 0 {
            return Err(StcsError::InvalidDimension(format!(
                "uniform partition needs positive m and block size, got m={m}, block={block}"
            )));
        }
        if block >= m {
            return Self::new(vec![m]);
        }
        let g = m / block;
        let mut sizes = vec![block; g];
        let rem = m - g * block;
        if rem > 0 {
            *sizes.last_mut().unwrap() += rem;
        }
        Self::new(sizes)
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Row range of block `i`.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    /// Total number of rows covered (must equal M wherever the partition is
    /// applied to a frame; callers validate that).
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> + '_ {
        (0..self.n_blocks()).map(|i| (i, self.range(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_divides_evenly() {
        let p = BlockPartition::uniform(500, 25).unwrap();
        assert_eq!(p.n_blocks(), 20);
        assert!(p.sizes().iter().all(|&d| d == 25));
        assert_eq!(p.total(), 500);
    }

    #[test]
    fn uniform_last_block_absorbs_remainder() {
        let p = BlockPartition::uniform(500, 33).unwrap();
        assert_eq!(p.n_blocks(), 15);
        assert_eq!(p.size(14), 33 + 5);
        assert_eq!(p.total(), 500);
    }

    #[test]
    fn uniform_block_larger_than_m_collapses() {
        let p = BlockPartition::uniform(10, 25).unwrap();
        assert_eq!(p.n_blocks(), 1);
        assert_eq!(p.size(0), 10);
    }

    #[test]
    fn ranges_tile_the_rows() {
        let p = BlockPartition::new(vec![3, 1, 4]).unwrap();
        assert_eq!(p.range(0), 0..3);
        assert_eq!(p.range(1), 3..4);
        assert_eq!(p.range(2), 4..8);
        assert_eq!(p.total(), 8);
    }

    #[test]
    fn zero_block_rejected() {
        assert!(BlockPartition::new(vec![2, 0, 3]).is_err());
        assert!(BlockPartition::new(vec![]).is_err());
    }
}
