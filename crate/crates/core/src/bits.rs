//! Packed bit vectors used by the hashing stages.

use alloc::vec;
use alloc::vec::Vec;

/// Bits packed little-endian into `u64` words (bit `i` lives in word `i / 64`,
/// position `i % 64`). Bits past `len` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PackedBits {
    words: Vec<u64>,
    len: usize,
}

impl PackedBits {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.words[i / 64] |= 1 << (i % 64);
            }
        }
        out
    }

    /// Takes `len` bits from the given words; stray high bits are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(len.div_ceil(64), 0);
        let tail = len % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Self { words, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Reads 64 bits starting at bit `offset`; positions past the end read as 0.
    pub fn window64(&self, offset: usize) -> u64 {
        let w = offset / 64;
        let s = offset % 64;
        let lo = self.words.get(w).copied().unwrap_or(0);
        if s == 0 {
            return lo;
        }
        let hi = self.words.get(w + 1).copied().unwrap_or(0);
        (lo >> s) | (hi << (64 - s))
    }

    /// Parity of `self AND other` over the common length.
    pub fn and_parity(&self, other: &PackedBits) -> bool {
        let acc = self
            .words
            .iter()
            .zip(&other.words)
            .fold(0u64, |acc, (a, b)| acc ^ (a & b));
        acc.count_ones() & 1 == 1
    }

    /// Big-endian-within-byte packing: bit `8k` is the MSB of byte `k`.
    /// A trailing partial byte is dropped.
    pub fn to_bytes_truncated(&self) -> Vec<u8> {
        (0..self.len / 8)
            .map(|k| (0..8).fold(0u8, |acc, j| (acc << 1) | self.get(8 * k + j) as u8))
            .collect()
    }
}

/// Parity (XOR) of a bool slice.
pub fn parity(bits: impl IntoIterator<Item = bool>) -> bool {
    bits.into_iter().fold(false, |acc, b| acc ^ b)
}

/// Number of positions where the two sequences differ.
pub fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_crosses_word_boundary() {
        let bools: Vec<bool> = (0..150).map(|i| i % 3 == 0).collect();
        let p = PackedBits::from_bools(&bools);
        for off in [0, 1, 63, 64, 70, 100, 149] {
            let w = p.window64(off);
            for j in 0..64 {
                let expect = bools.get(off + j).copied().unwrap_or(false);
                assert_eq!((w >> j) & 1 == 1, expect, "offset {off} bit {j}");
            }
        }
    }

    #[test]
    fn from_words_clears_tail() {
        let p = PackedBits::from_words(vec![u64::MAX, u64::MAX], 70);
        assert_eq!(p.words()[1], 0b11_1111);
        assert_eq!(p.to_bools().iter().filter(|&&b| b).count(), 70);
    }

    #[test]
    fn bytes_are_msb_first() {
        let p = PackedBits::from_bools(&[true, false, false, false, false, false, false, true, true]);
        assert_eq!(p.to_bytes_truncated(), vec![0b1000_0001]);
    }
}
