//! Binary layer vectors and full RBM configurations.

use serde::{Deserialize, Serialize};

/// A vector of bits, one `u8` per unit (always 0 or 1).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinaryVector(Vec<u8>);

impl BinaryVector {
    pub fn zeros(len: usize) -> Self {
        BinaryVector(vec![0; len])
    }

    pub fn ones(len: usize) -> Self {
        BinaryVector(vec![1; len])
    }

    /// Builds a vector from arbitrary bytes, mapping every nonzero byte to 1.
    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Self {
        BinaryVector(bits.into_iter().map(|b| u8::from(b != 0)).collect())
    }

    /// Bit `j` of the result is bit `j` of `index` (little-endian enumeration order).
    pub fn from_index(len: usize, index: u64) -> Self {
        BinaryVector((0..len).map(|j| ((index >> j) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> u8 {
        self.0[j]
    }

    pub fn set(&mut self, j: usize, bit: u8) {
        self.0[j] = u8::from(bit != 0);
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn ones_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| (b == 1).then_some(j))
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    /// Inverse of [`BinaryVector::from_index`]; only meaningful for `len <= 64`.
    pub fn to_index(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &b)| acc | (u64::from(b) << j))
    }

    pub fn concat(&self, other: &BinaryVector) -> BinaryVector {
        let mut bits = self.0.clone();
        bits.extend_from_slice(&other.0);
        BinaryVector(bits)
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }
}

impl From<Vec<u8>> for BinaryVector {
    fn from(bits: Vec<u8>) -> Self {
        BinaryVector::from_bits(bits)
    }
}

/// A full `(v, h)` configuration of an RBM.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointState {
    pub v: BinaryVector,
    pub h: BinaryVector,
}

impl JointState {
    pub fn new(v: BinaryVector, h: BinaryVector) -> Self {
        JointState { v, h }
    }

    /// Splits a flat `visible ++ hidden` bit vector.
    pub fn from_flat(bits: &BinaryVector, n_visible: usize) -> Self {
        let (v, h) = bits.as_slice().split_at(n_visible);
        JointState {
            v: BinaryVector(v.to_vec()),
            h: BinaryVector(h.to_vec()),
        }
    }

    pub fn to_flat(&self) -> BinaryVector {
        self.v.concat(&self.h)
    }

    /// Enumeration order used by every exhaustive oracle: visible bits are the low bits.
    pub fn from_index(n_visible: usize, n_hidden: usize, index: u64) -> Self {
        JointState {
            v: BinaryVector::from_index(n_visible, index),
            h: BinaryVector::from_index(n_hidden, index >> n_visible),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for idx in 0..64u64 {
            let b = BinaryVector::from_index(6, idx);
            assert_eq!(b.to_index(), idx);
        }
        let s = JointState::from_index(3, 2, 0b10110);
        assert_eq!(s.v.as_slice(), &[0, 1, 1]);
        assert_eq!(s.h.as_slice(), &[0, 1]);
        assert_eq!(JointState::from_flat(&s.to_flat(), 3), s);
    }

    #[test]
    fn from_bits_normalizes() {
        let b = BinaryVector::from_bits([0, 3, 1, 255]);
        assert_eq!(b.as_slice(), &[0, 1, 1, 1]);
        assert_eq!(b.count_ones(), 3);
        assert_eq!(b.ones_indices().collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}
