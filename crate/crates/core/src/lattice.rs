//! Fixed-width bit vectors ordered by bit containment.
//!
//! A [`BitVector`] is an element of the Boolean lattice `{0,1}^d`. The order
//! used throughout the crate is `a <= x` iff every bit set in `a` is also set
//! in `x`. In rule terms, `a <= x` means "the rule `a` fires on sample `x`".
//!
//! Bit indices are zero-based internally. The textual form writes bit `0`
//! leftmost, so `"11001"` has bits `0`, `1` and `4` set.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("bit index {index} out of range for width {width}")]
    IndexOutOfRange { index: usize, width: usize },
    #[error("invalid bit string `{0}`")]
    Parse(String),
}

/// An element of `{0,1}^width`, word-packed, with a cached popcount.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    words: Vec<u64>,
    width: usize,
    ones: usize,
}

impl BitVector {
    /// The all-zeros vector (the bottom of the lattice).
    pub fn zeros(width: usize) -> Self {
        BitVector {
            words: vec![0; width.div_ceil(WORD)],
            width,
            ones: 0,
        }
    }

    /// The all-ones vector (the top of the lattice).
    pub fn ones(width: usize) -> Self {
        let mut v = Self::zeros(width);
        for w in v.words.iter_mut() {
            *w = u64::MAX;
        }
        v.trim();
        v.ones = width;
        v
    }

    /// Builds the vector whose set bits are exactly `indices`.
    pub fn from_indices<I>(indices: I, width: usize) -> Result<Self, LatticeError>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut v = Self::zeros(width);
        for i in indices {
            if i >= width {
                return Err(LatticeError::IndexOutOfRange { index: i, width });
            }
            v.words[i / WORD] |= 1 << (i % WORD);
        }
        v.recount();
        Ok(v)
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            v.words[i / WORD] |= 1 << (i % WORD);
        }
        v.recount();
        v
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of set bits.
    #[inline]
    pub fn count_ones(&self) -> usize {
        self.ones
    }

    #[inline]
    pub fn count_zeros(&self) -> usize {
        self.width - self.ones
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.width, "bit {index} out of range for width {}", self.width);
        self.words[index / WORD] >> (index % WORD) & 1 == 1
    }

    pub fn set(&mut self, index: usize, value: bool) {
        assert!(index < self.width, "bit {index} out of range for width {}", self.width);
        let mask = 1u64 << (index % WORD);
        let word = &mut self.words[index / WORD];
        let was = *word & mask != 0;
        if value && !was {
            *word |= mask;
            self.ones += 1;
        } else if !value && was {
            *word &= !mask;
            self.ones -= 1;
        }
    }

    /// Clears bit `index` in place. Clearing a zero bit is a no-op.
    #[inline]
    pub fn clear(&mut self, index: usize) {
        self.set(index, false);
    }

    /// Returns a copy with bit `index` cleared.
    pub fn flip_off(&self, index: usize) -> Result<Self, LatticeError> {
        if index >= self.width {
            return Err(LatticeError::IndexOutOfRange {
                index,
                width: self.width,
            });
        }
        let mut z = self.clone();
        z.clear(index);
        Ok(z)
    }

    /// `self <= x`: every bit set in `self` is set in `x`.
    ///
    /// Panics if the widths differ; see [`BitVector::checked_leq`].
    #[inline]
    pub fn leq(&self, x: &BitVector) -> bool {
        assert_eq!(self.width, x.width, "width mismatch");
        self.words.iter().zip(&x.words).all(|(a, b)| a & !b == 0)
    }

    pub fn checked_leq(&self, x: &BitVector) -> Result<bool, LatticeError> {
        self.same_width(x)?;
        Ok(self.leq(x))
    }

    /// Number of positions where `self` has a 1 and `y` has a 0.
    ///
    /// Zero exactly when `self <= y`. Not symmetric.
    #[inline]
    pub fn distance(&self, y: &BitVector) -> usize {
        assert_eq!(self.width, y.width, "width mismatch");
        self.words
            .iter()
            .zip(&y.words)
            .map(|(a, b)| (a & !b).count_ones() as usize)
            .sum()
    }

    pub fn checked_distance(&self, y: &BitVector) -> Result<usize, LatticeError> {
        self.same_width(y)?;
        Ok(self.distance(y))
    }

    /// Minimum [`distance`](BitVector::distance) to any member of `set`,
    /// or `None` when the set is empty.
    pub fn distance_to_set<'a, I>(&self, set: I) -> Option<usize>
    where
        I: IntoIterator<Item = &'a BitVector>,
    {
        set.into_iter().map(|y| self.distance(y)).min()
    }

    /// Indices of the set bits, ascending.
    pub fn ones_indices(&self) -> Vec<usize> {
        self.iter_ones().collect()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + tz)
            })
        })
    }

    /// Indices of the zero bits, ascending.
    pub fn zeros_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, &w) in self.words.iter().enumerate() {
            let valid = (self.width - wi * WORD).min(WORD);
            let mut rest = !w & if valid == WORD { u64::MAX } else { (1 << valid) - 1 };
            while rest != 0 {
                out.push(wi * WORD + rest.trailing_zeros() as usize);
                rest &= rest - 1;
            }
        }
        out
    }

    /// Keeps the bits selected by `mask`, packed in order into a narrower vector.
    pub fn project(&self, mask: &BitVector) -> Result<BitVector, LatticeError> {
        self.same_width(mask)?;
        let mut out = BitVector::zeros(mask.count_ones());
        let mut pos = 0;
        for (start, len) in mask.runs() {
            let mut done = 0;
            while done < len {
                let n = (len - done).min(WORD);
                out.put_chunk(pos + done, n, self.chunk(start + done, n));
                done += n;
            }
            pos += len;
        }
        out.recount();
        Ok(out)
    }

    /// Inverse of [`project`](BitVector::project): scatters `self` into the
    /// positions selected by `mask`, leaving every other bit zero.
    pub fn embed(&self, mask: &BitVector) -> Result<BitVector, LatticeError> {
        if self.width != mask.count_ones() {
            return Err(LatticeError::WidthMismatch {
                left: self.width,
                right: mask.count_ones(),
            });
        }
        let mut out = BitVector::zeros(mask.width);
        let mut pos = 0;
        for (start, len) in mask.runs() {
            let mut done = 0;
            while done < len {
                let n = (len - done).min(WORD);
                out.put_chunk(start + done, n, self.chunk(pos + done, n));
                done += n;
            }
            pos += len;
        }
        out.recount();
        Ok(out)
    }

    /// Maximal runs of ones as `(start, len)`.
    fn runs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        while let Some(start) = self.next_from(i, false) {
            let end = self.next_from(start, true).unwrap_or(self.width);
            out.push((start, end - start));
            i = end;
        }
        out
    }

    /// First index `>= from` holding a one (or a zero when `zero` is set).
    fn next_from(&self, from: usize, zero: bool) -> Option<usize> {
        let mut wi = from / WORD;
        let mut w = *self.words.get(wi)?;
        if zero {
            w = !w;
        }
        w &= u64::MAX << (from % WORD);
        loop {
            if w != 0 {
                let i = wi * WORD + w.trailing_zeros() as usize;
                return (i < self.width).then_some(i);
            }
            wi += 1;
            w = *self.words.get(wi)?;
            if zero {
                w = !w;
            }
        }
    }

    /// `len <= 64` bits starting at `start`, low bit first.
    fn chunk(&self, start: usize, len: usize) -> u64 {
        let (wi, off) = (start / WORD, start % WORD);
        let mut v = self.words[wi] >> off;
        if off > 0 && off + len > WORD {
            v |= self.words[wi + 1] << (WORD - off);
        }
        if len < WORD {
            v &= (1u64 << len) - 1;
        }
        v
    }

    /// ORs `len` low bits of `v` in at `start`. Does not update the count.
    fn put_chunk(&mut self, start: usize, len: usize, v: u64) {
        let (wi, off) = (start / WORD, start % WORD);
        self.words[wi] |= v << off;
        if off > 0 && off + len > WORD {
            self.words[wi + 1] |= v >> (WORD - off);
        }
    }

    /// Renders the bits grouped by the given span widths, e.g. `"110 01"`.
    pub fn to_grouped_string(&self, widths: &[usize]) -> String {
        let mut s = String::with_capacity(self.width + widths.len());
        let mut pos = 0;
        for (g, &w) in widths.iter().enumerate() {
            if g > 0 {
                s.push(' ');
            }
            for i in pos..(pos + w).min(self.width) {
                s.push(if self.get(i) { '1' } else { '0' });
            }
            pos += w;
        }
        for i in pos..self.width {
            s.push(if self.get(i) { '1' } else { '0' });
        }
        s
    }

    /// Raw words; bits past `width` are always zero.
    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    fn same_width(&self, other: &BitVector) -> Result<(), LatticeError> {
        if self.width == other.width {
            Ok(())
        } else {
            Err(LatticeError::WidthMismatch {
                left: self.width,
                right: other.width,
            })
        }
    }

    fn trim(&mut self) {
        let rem = self.width % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn recount(&mut self) {
        self.ones = self.words.iter().map(|w| w.count_ones() as usize).sum();
    }
}

impl Ord for BitVector {
    /// Lexicographic on the textual form (bit 0 most significant), then width.
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.width.min(other.width);
        for i in 0..n {
            match (self.get(i), other.get(i)) {
                (true, false) => return Ordering::Greater,
                (false, true) => return Ordering::Less,
                _ => {}
            }
        }
        self.width.cmp(&other.width)
    }
}

impl PartialOrd for BitVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = LatticeError;

    /// Parses `0`/`1` characters; whitespace between feature groups is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: Result<Vec<bool>, _> = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(LatticeError::Parse(s.to_string())),
            })
            .collect();
        Ok(BitVector::from_bools(&bits?))
    }
}

/// Bit positions of a sample under generalization: `flippable` bits may still
/// be cleared, `frozen` bits must stay set to avoid a conflict.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub flippable: Vec<usize>,
    pub frozen: Vec<usize>,
}

impl IndexSets {
    /// Starts with every set bit of `x` flippable.
    pub fn for_sample(x: &BitVector) -> Self {
        IndexSets {
            flippable: x.ones_indices(),
            frozen: Vec::new(),
        }
    }

    /// The lattice element with exactly the flippable and frozen bits set.
    pub fn materialize(&self, width: usize) -> Result<BitVector, LatticeError> {
        BitVector::from_indices(self.flippable.iter().chain(&self.frozen).copied(), width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVector {
        s.parse().unwrap()
    }

    #[test]
    fn leq_examples() {
        assert!(bv("01001").leq(&bv("01101")));
        assert!(!bv("110").leq(&bv("011")));
        assert!(!bv("011").leq(&bv("110")));
        let x = bv("10110");
        assert!(x.leq(&x));
    }

    #[test]
    fn width_mismatch_is_reported() {
        assert_eq!(
            bv("101").checked_leq(&bv("1011")),
            Err(LatticeError::WidthMismatch { left: 3, right: 4 })
        );
        assert!(bv("101").checked_distance(&bv("10")).is_err());
    }

    #[test]
    #[should_panic(expected = "width mismatch")]
    fn leq_panics_on_mismatch() {
        bv("101").leq(&bv("1011"));
    }

    #[test]
    fn flip_off_examples() {
        // bit 5 in one-based numbering
        assert_eq!(bv("11001").flip_off(4).unwrap(), bv("11000"));
        assert_eq!(bv("10110").flip_off(2).unwrap(), bv("10010"));
        assert_eq!(bv("10110").flip_off(1).unwrap(), bv("10110"));
        assert!(bv("101").flip_off(3).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(bv("10101").distance(&bv("11010")), 2);
        assert_eq!(bv("10101").distance(&bv("10110")), 1);
        assert_eq!(bv("10101").distance(&bv("10101")), 0);
        assert_eq!(bv("10101").distance_to_set(&[]), None);
        assert_eq!(bv("11001").distance_to_set(&[bv("01101"), bv("01110")]), Some(1));
    }

    #[test]
    fn distance_is_asymmetric() {
        let (x, y) = (bv("1100"), bv("1000"));
        assert_eq!(x.distance(&y), 1);
        assert_eq!(y.distance(&x), 0);
    }

    #[test]
    fn materialize_examples() {
        let sets = IndexSets {
            flippable: vec![],
            frozen: vec![0, 1],
        };
        assert_eq!(sets.materialize(5).unwrap(), bv("11000"));
        assert_eq!(IndexSets::default().materialize(7).unwrap(), BitVector::zeros(7));
        assert!(BitVector::from_indices([9], 5).is_err());
    }

    #[test]
    fn wide_vectors_cross_word_boundaries() {
        let x = BitVector::from_indices([0, 63, 64, 129], 130).unwrap();
        assert_eq!(x.count_ones(), 4);
        assert_eq!(x.ones_indices(), vec![0, 63, 64, 129]);
        let ones = BitVector::ones(130);
        assert_eq!(ones.count_ones(), 130);
        assert!(x.leq(&ones));
        assert_eq!(ones.distance(&x), 126);
    }

    #[test]
    fn grouped_text_form() {
        let x = bv("11001");
        assert_eq!(x.to_grouped_string(&[3, 2]), "110 01");
        assert_eq!(bv("110 01"), x);
        assert!("1x0".parse::<BitVector>().is_err());
    }

    #[test]
    fn project_embed() {
        let mask = bv("10110");
        let a = bv("101");
        let full = a.embed(&mask).unwrap();
        assert_eq!(full, bv("10010"));
        assert_eq!(full.project(&mask).unwrap(), a);
        assert!(bv("10").embed(&mask).is_err());
    }

    #[test]
    fn project_embed_match_bitwise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let width = rng.gen_range(1..300);
            let x = BitVector::from_bools(&(0..width).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>());
            let p = rng.gen_range(0.05..0.95);
            let mask = BitVector::from_bools(&(0..width).map(|_| rng.gen_bool(p)).collect::<Vec<_>>());
            let kept: Vec<bool> = mask.iter_ones().map(|i| x.get(i)).collect();
            let y = x.project(&mask).unwrap();
            assert_eq!(y, BitVector::from_bools(&kept));
            let back = y.embed(&mask).unwrap();
            let masked: Vec<bool> = (0..width).map(|i| x.get(i) && mask.get(i)).collect();
            assert_eq!(back, BitVector::from_bools(&masked));
        }
    }
}
