use std::fmt;

use crate::error::{Error, Result};

/// A point of `{0,1}^n`, bit `i` holding `x_i`.
///
/// The dimension is carried by whatever owns the input (a tree, a dataset);
/// bits at positions `>= n` are always zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Input(pub u64);

impl Input {
    pub const ZERO: Input = Input(0);

    pub fn from_bits(bits: &[bool]) -> Result<Input> {
        if bits.len() > crate::MAX_VARIABLES {
            return Err(Error::TooManyVariables(bits.len()));
        }
        Ok(Input(
            bits.iter()
                .enumerate()
                .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i)),
        ))
    }

    #[inline]
    pub fn bit(self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }

    #[inline]
    pub fn with_bit(self, i: usize, value: bool) -> Input {
        if value {
            Input(self.0 | (1 << i))
        } else {
            Input(self.0 & !(1 << i))
        }
    }

    #[inline]
    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }

    /// Renders `x_0 x_1 ... x_{n-1}` as a string of `0`/`1` characters.
    pub fn to_bit_string(self, n: usize) -> String {
        (0..n).map(|i| if self.bit(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_bits(s: &str) -> Option<(Input, usize)> {
        if s.len() > crate::MAX_VARIABLES {
            return None;
        }
        let mut bits = 0u64;
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << i,
                _ => return None,
            }
        }
        Some((Input(bits), s.len()))
    }

    /// All `2^n` inputs in increasing bitmask order.
    pub fn all(n: usize) -> impl Iterator<Item = Input> {
        debug_assert!(n < 64);
        (0..(1u64 << n)).map(Input)
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

pub(crate) fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

pub(crate) fn check_dimension(n: usize) -> Result<()> {
    if n > crate::MAX_VARIABLES {
        Err(Error::TooManyVariables(n))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_string_round_trip() {
        let x = Input::from_bits(&[true, false, true, true]).unwrap();
        assert_eq!(x.to_bit_string(4), "1011");
        assert_eq!(Input::parse_bits("1011"), Some((x, 4)));
        assert_eq!(Input::parse_bits("10x1"), None);
    }

    #[test]
    fn with_bit_sets_and_clears() {
        let x = Input::ZERO.with_bit(3, true);
        assert!(x.bit(3));
        assert_eq!(x.with_bit(3, false), Input::ZERO);
        assert_eq!(mask(3), 0b111);
    }
}
