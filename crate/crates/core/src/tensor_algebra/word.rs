use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};

pub(crate) type Letters = SmallVec<[u8; 16]>;

/// A word over the alphabet `{1, ..., d}`; indexes one iterated-integral
/// coordinate. The empty word is the unit.
///
/// Words order by length first, then lexicographically, which is the order
/// used for serialization and for parameter vectors.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    d: u8,
    letters: Letters,
}

impl MultiIndex {
    pub fn new(d: usize, letters: &[u8]) -> Result<Self> {
        let d8 = check_alphabet(d)?;
        for &l in letters {
            if l == 0 || l > d8 {
                return Err(Error::LetterOutOfRange { letter: l as usize, d });
            }
        }
        Ok(Self { d: d8, letters: Letters::from_slice(letters) })
    }

    pub fn empty(d: usize) -> Result<Self> {
        Ok(Self { d: check_alphabet(d)?, letters: Letters::new() })
    }

    pub fn letter(d: usize, a: u8) -> Result<Self> {
        Self::new(d, &[a])
    }

    /// Caller guarantees every letter is in range.
    pub(crate) fn from_letters_unchecked(d: u8, letters: Letters) -> Self {
        debug_assert!(letters.iter().all(|&l| l >= 1 && l <= d));
        Self { d, letters }
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    pub(crate) fn d_u8(&self) -> u8 {
        self.d
    }

    pub fn letters(&self) -> &[u8] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn last(&self) -> Option<u8> {
        self.letters.last().copied()
    }

    /// Letters of `self` followed by letters of `other`.
    pub fn concat(&self, other: &MultiIndex) -> Result<MultiIndex> {
        same_alphabet(self.d(), other.d())?;
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Ok(Self { d: self.d, letters })
    }

    /// `self` with one more letter appended.
    pub fn push(&self, a: u8) -> Result<MultiIndex> {
        if a == 0 || a > self.d {
            return Err(Error::LetterOutOfRange { letter: a as usize, d: self.d() });
        }
        let mut letters = self.letters.clone();
        letters.push(a);
        Ok(Self { d: self.d, letters })
    }

    /// Split off the final letter: `w = prefix ⊗ (a)`.
    pub fn split_last(&self) -> Option<(MultiIndex, u8)> {
        let (&a, rest) = self.letters.split_last()?;
        Some((Self { d: self.d, letters: Letters::from_slice(rest) }, a))
    }

    /// Same letters read in a larger alphabet.
    pub fn embed(&self, d: usize) -> Result<MultiIndex> {
        if d < self.d() {
            return Err(Error::AlphabetMismatch { left: self.d(), right: d });
        }
        Ok(Self { d: check_alphabet(d)?, letters: self.letters.clone() })
    }

    /// Count of occurrences of letter `a`.
    pub fn count(&self, a: u8) -> usize {
        self.letters.iter().filter(|&&l| l == a).count()
    }

    /// All words of length `0..=max_len` in length-then-lexicographic order.
    pub fn all_words(d: usize, max_len: usize) -> Result<Vec<MultiIndex>> {
        let d8 = check_alphabet(d)?;
        let mut out = vec![Self { d: d8, letters: Letters::new() }];
        let mut level_start = 0;
        for _ in 0..max_len {
            let level_end = out.len();
            for i in level_start..level_end {
                for a in 1..=d8 {
                    let mut letters = out[i].letters.clone();
                    letters.push(a);
                    out.push(Self { d: d8, letters });
                }
            }
            level_start = level_end;
        }
        Ok(out)
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d
            .cmp(&other.d)
            .then(self.letters.len().cmp(&other.letters.len()))
            .then_with(|| self.letters.cmp(&other.letters))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "∅");
        }
        write!(f, "(")?;
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub(crate) fn check_alphabet(d: usize) -> Result<u8> {
    if d == 0 || d > u8::MAX as usize {
        return Err(Error::InvalidAlphabet(d));
    }
    Ok(d as u8)
}

pub(crate) fn same_alphabet(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::AlphabetMismatch { left, right });
    }
    Ok(())
}

/// Concatenation product of two words.
pub fn concat(i: &MultiIndex, j: &MultiIndex) -> Result<MultiIndex> {
    i.concat(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(d: usize, l: &[u8]) -> MultiIndex {
        MultiIndex::new(d, l).unwrap()
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat(&w(3, &[1, 3]), &w(3, &[2, 2])).unwrap(), w(3, &[1, 3, 2, 2]));
        assert_eq!(concat(&w(3, &[2, 2]), &w(3, &[])).unwrap(), w(3, &[2, 2]));
        assert_eq!(concat(&w(3, &[]), &w(3, &[])).unwrap(), w(3, &[]));
    }

    #[test]
    fn concat_rejects_alphabet_mismatch() {
        assert_eq!(
            concat(&w(2, &[1]), &w(3, &[1])),
            Err(Error::AlphabetMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn letters_are_range_checked() {
        assert!(MultiIndex::new(2, &[3]).is_err());
        assert!(MultiIndex::new(2, &[0]).is_err());
        assert!(MultiIndex::new(0, &[]).is_err());
    }

    #[test]
    fn ordering_is_length_then_lex() {
        let words = MultiIndex::all_words(2, 2).unwrap();
        let shown: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        assert_eq!(shown, ["∅", "(1)", "(2)", "(1,1)", "(1,2)", "(2,1)", "(2,2)"]);
        let mut sorted = words.clone();
        sorted.sort();
        assert_eq!(sorted, words);
        assert!(w(2, &[2]) < w(2, &[1, 1]));
    }

    #[test]
    fn concat_is_associative_on_small_words() {
        let words = MultiIndex::all_words(2, 3).unwrap();
        for a in &words {
            for b in &words {
                for c in &words {
                    let left = a.concat(b).unwrap().concat(c).unwrap();
                    let right = a.concat(&b.concat(c).unwrap()).unwrap();
                    assert_eq!(left, right);
                    assert_eq!(left.len(), a.len() + b.len() + c.len());
                }
            }
        }
    }
}
