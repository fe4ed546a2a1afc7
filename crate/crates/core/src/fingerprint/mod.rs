//! Fixed-width bit fingerprints, the Tanimoto kernel, and the minimal
//! structure parser / circular fingerprint used when a dataset carries
//! line-notation structures instead of precomputed bits.

mod circular;
mod index;
mod smiles;

pub use circular::{circular_fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH};
pub use index::SimilarityIndex;
pub use smiles::{parse_structure, render_structure, Atom, Bond, BondOrder, MolGraph};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FingerprintError {
    #[error("fingerprint width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("fingerprint width {0} is not a positive power of two")]
    BadWidth(usize),
    #[error("bit index {index} out of range for width {width}")]
    BitOutOfRange { index: usize, width: usize },
    #[error("invalid hex fingerprint: {0}")]
    BadHex(String),
    #[error("cannot fingerprint an empty molecular graph")]
    EmptyGraph,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// A fixed-width bit vector with a cached popcount.
///
/// Bits are stored little-endian in 64-bit words: bit `k` lives in word
/// `k / 64` at position `k % 64`. The popcount cache is maintained by every
/// constructor; there is no mutable access to the words.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fingerprint {
    words: Vec<u64>,
    width: usize,
    popcount: u32,
}

fn check_width(width: usize) -> Result<(), FingerprintError> {
    if width == 0 || !width.is_power_of_two() {
        return Err(FingerprintError::BadWidth(width));
    }
    Ok(())
}

impl Fingerprint {
    pub fn zeros(width: usize) -> Result<Self, FingerprintError> {
        check_width(width)?;
        Ok(Self {
            words: vec![0; width.div_ceil(64)],
            width,
            popcount: 0,
        })
    }

    /// Builds a fingerprint with the given bit indices set. Duplicates are fine.
    pub fn from_indices<I>(width: usize, bits: I) -> Result<Self, FingerprintError>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut words = Self::zeros(width)?.words;
        for index in bits {
            if index >= width {
                return Err(FingerprintError::BitOutOfRange { index, width });
            }
            words[index / 64] |= 1u64 << (index % 64);
        }
        Ok(Self::from_words_unchecked(words, width))
    }

    fn from_words_unchecked(words: Vec<u64>, width: usize) -> Self {
        let popcount = words.iter().map(|w| w.count_ones()).sum();
        Self {
            words,
            width,
            popcount,
        }
    }

    /// Parses lowercase or uppercase hex, most-significant nibble first.
    ///
    /// The string is read as one big-endian integer of `width` bits, so the
    /// last hex digit carries bits 0..4 and bit 0 is its least significant bit.
    pub fn from_hex(text: &str) -> Result<Self, FingerprintError> {
        let text = text.trim();
        let width = text.len() * 4;
        if width == 0 || !width.is_power_of_two() {
            return Err(FingerprintError::BadHex(format!(
                "{} hex digits does not give a power-of-two width",
                text.len()
            )));
        }
        let mut words = vec![0u64; width.div_ceil(64)];
        for (pos, ch) in text.bytes().rev().enumerate() {
            let nibble = (ch as char)
                .to_digit(16)
                .ok_or_else(|| FingerprintError::BadHex(format!("invalid digit {:?}", ch as char)))?
                as u64;
            let bit = pos * 4;
            words[bit / 64] |= nibble << (bit % 64);
        }
        Ok(Self::from_words_unchecked(words, width))
    }

    /// Lowercase hex, most-significant nibble first; inverse of [`Self::from_hex`].
    pub fn to_hex(&self) -> String {
        let digits = self.width / 4;
        let mut out = String::with_capacity(digits);
        for pos in (0..digits).rev() {
            let bit = pos * 4;
            let nibble = (self.words[bit / 64] >> (bit % 64)) & 0xf;
            out.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.width && (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    /// Set bit indices in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + tz)
            })
        })
    }

    pub fn intersection_count(&self, other: &Self) -> Result<u32, FingerprintError> {
        if self.width != other.width {
            return Err(FingerprintError::WidthMismatch(self.width, other.width));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum())
    }
}

impl TryFrom<String> for Fingerprint {
    type Error = FingerprintError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::from_hex(&value)
    }
}

impl From<Fingerprint> for String {
    fn from(fp: Fingerprint) -> Self {
        fp.to_hex()
    }
}

/// Tanimoto similarity from an intersection count and the two popcounts.
///
/// Both-empty fingerprints score 0.
#[inline]
pub fn tanimoto_from_counts(intersection: u32, popcount_a: u32, popcount_b: u32) -> f64 {
    let union = popcount_a + popcount_b - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// `|a ∧ b| / |a ∨ b|`, with 0 for two all-zero fingerprints.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    let inter = a.intersection_count(b)?;
    Ok(tanimoto_from_counts(inter, a.popcount, b.popcount))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fp(bits: &[usize]) -> Fingerprint {
        Fingerprint::from_indices(64, bits.iter().copied()).unwrap()
    }

    #[test]
    fn identical_nonempty_is_one() {
        let a = fp(&[3, 9, 40]);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(tanimoto(&fp(&[1, 2]), &fp(&[3, 4])).unwrap(), 0.0);
    }

    #[test]
    fn two_of_four() {
        assert_eq!(tanimoto(&fp(&[1, 2, 3]), &fp(&[2, 3, 4])).unwrap(), 0.5);
    }

    #[test]
    fn both_empty_is_zero() {
        let z = Fingerprint::zeros(64).unwrap();
        assert_eq!(tanimoto(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn width_mismatch_is_error() {
        let a = Fingerprint::zeros(64).unwrap();
        let b = Fingerprint::zeros(128).unwrap();
        assert_eq!(
            tanimoto(&a, &b),
            Err(FingerprintError::WidthMismatch(64, 128))
        );
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(Fingerprint::zeros(0).is_err());
        assert!(Fingerprint::zeros(48).is_err());
        assert!(Fingerprint::from_indices(64, [64]).is_err());
        assert!(Fingerprint::from_hex("abc").is_err());
        assert!(Fingerprint::from_hex("zz").is_err());
    }

    #[test]
    fn hex_is_msb_nibble_first() {
        let a = Fingerprint::from_indices(8, [0, 7]).unwrap();
        assert_eq!(a.to_hex(), "81");
        let b = Fingerprint::from_hex("0010").unwrap();
        assert_eq!(b.width(), 16);
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![4]);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_cached(
            a in proptest::collection::btree_set(0usize..256, 0..40),
            b in proptest::collection::btree_set(0usize..256, 0..40),
        ) {
            let fa = Fingerprint::from_indices(256, a.iter().copied()).unwrap();
            let fb = Fingerprint::from_indices(256, b.iter().copied()).unwrap();
            let ab = tanimoto(&fa, &fb).unwrap();
            prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, !a.is_empty() && a == b);
            prop_assert_eq!(fa.popcount() as usize, a.len());
            let back = Fingerprint::from_hex(&fa.to_hex()).unwrap();
            prop_assert_eq!(back.popcount(), fa.popcount());
            prop_assert_eq!(back.ones().collect::<Vec<_>>(), a.iter().copied().collect::<Vec<_>>());
        }
    }
}
