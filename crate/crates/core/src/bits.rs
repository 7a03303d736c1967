//! Plain bit strings.
//!
//! Everything in the lab (programs, outputs, aux tapes, mind-states) is a
//! short string of bits. `Bits` keeps one `bool` per bit, orders
//! lexicographically with a prefix sorting before its extensions, and
//! round-trips through the ASCII `"0101"` form used on the command line and
//! in config files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new() -> Self {
        Bits(Vec::new())
    }

    pub fn with_capacity(n: usize) -> Self {
        Bits(Vec::with_capacity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Bits(vec![false; n])
    }

    /// The `width` low bits of `value`, most significant first.
    pub fn from_uint(value: u64, width: usize) -> Self {
        Bits((0..width).rev().map(|i| i < 64 && (value >> i) & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        self.0.get(i).copied()
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn truncate(&mut self, n: usize) {
        self.0.truncate(n);
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn slice(&self, start: usize, end: usize) -> Bits {
        Bits(self.0[start..end].to_vec())
    }

    pub fn prefix(&self, n: usize) -> Bits {
        self.slice(0, n)
    }

    pub fn starts_with(&self, other: &Bits) -> bool {
        self.0.starts_with(&other.0)
    }

    pub fn concat(&self, other: &Bits) -> Bits {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Bits(v)
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// Interprets the bits as an unsigned integer, most significant first.
    /// Only meaningful for strings of at most 64 bits.
    pub fn to_uint(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, b| (acc << 1) | *b as u64)
    }

    /// Packs the bits into bytes, most significant bit first, zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.0.len().div_ceil(8)];
        for (i, b) in self.0.iter().enumerate() {
            if *b {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Bits {
        Bits((0..len).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
    }

    /// Splits into consecutive blocks of `width` bits, dropping an incomplete tail.
    pub fn blocks(&self, width: usize) -> impl Iterator<Item = Bits> + '_ {
        self.0.chunks_exact(width).map(|c| Bits(c.to_vec()))
    }

    /// Bijective binary image of `n >= 1`: the binary expansion of `n` with the
    /// leading 1 removed, so 1 ↦ "", 2 ↦ "0", 3 ↦ "1", 4 ↦ "00", ...
    pub fn from_natural(n: u64) -> Option<Bits> {
        if n == 0 {
            return None;
        }
        let width = 63 - n.leading_zeros() as usize;
        Some(Bits::from_uint(n, width))
    }

    /// Inverse of [`Bits::from_natural`].
    pub fn to_natural(&self) -> Option<u64> {
        if self.0.len() >= 64 {
            return None;
        }
        Some((1u64 << self.0.len()) | self.to_uint())
    }
}

impl From<Vec<bool>> for Bits {
    fn from(v: Vec<bool>) -> Self {
        Bits(v)
    }
}

impl FromIterator<bool> for Bits {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Bits(iter.into_iter().collect())
    }
}

impl FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidBits {
                    input: s.to_string(),
                    found: other,
                }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Bits)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Shorthand for tests and examples: panics on anything but `0`/`1`.
pub fn bits(s: &str) -> Bits {
    s.parse().expect("bit string literal")
}
