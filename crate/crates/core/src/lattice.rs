//! Frequency lattice `{-K..K}^d` in column-stack order (axis 0 fastest).
//!
//! Every coefficient vector in the crate uses this layout. Negating a
//! frequency maps index `i` to `len - 1 - i`, and the zero frequency sits at
//! the center index.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lattice {
    pub dim: usize,
    pub bandwidth: usize,
}

impl Lattice {
    pub fn new(dim: usize, bandwidth: usize) -> Self {
        Self { dim, bandwidth }
    }

    /// Points per axis, `2K + 1`.
    pub fn side(&self) -> usize {
        2 * self.bandwidth + 1
    }

    /// `(2K + 1)^d`.
    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self) -> usize {
        (self.len() - 1) / 2
    }

    pub fn mirror(&self, index: usize) -> usize {
        self.len() - 1 - index
    }

    pub fn frequency(&self, mut index: usize) -> Vec<i64> {
        let side = self.side();
        let k = self.bandwidth as i64;
        (0..self.dim)
            .map(|_| {
                let v = (index % side) as i64 - k;
                index /= side;
                v
            })
            .collect()
    }

    /// Index of `freq`, or `None` when it lies outside the lattice.
    pub fn index_of(&self, freq: &[i64]) -> Option<usize> {
        debug_assert_eq!(freq.len(), self.dim);
        let side = self.side();
        let k = self.bandwidth as i64;
        let mut index = 0;
        let mut stride = 1;
        for &f in freq {
            if f < -k || f > k {
                return None;
            }
            index += (f + k) as usize * stride;
            stride *= side;
        }
        Some(index)
    }

    pub fn frequencies(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|i| self.frequency(i))
    }
}

pub fn norm_inf(k: &[i64]) -> u64 {
    k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0)
}

pub fn norm_1(k: &[i64]) -> u64 {
    k.iter().map(|v| v.unsigned_abs()).sum()
}
