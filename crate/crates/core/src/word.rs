//! Words over a finite alphabet, the only data domain of the language.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::Error;

/// Letter used to encode the truth value `tt` as a one-letter word.
pub const TT_LETTER: u8 = b'T';
/// Letter used to encode the truth value `ff` as a one-letter word.
pub const FF_LETTER: u8 = b'F';

/// A finite sequence of letters. The empty word is `ε`.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn tt() -> Self {
        Word(vec![TT_LETTER])
    }

    pub fn ff() -> Self {
        Word(vec![FF_LETTER])
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Self::tt()
        } else {
            Self::ff()
        }
    }

    /// Unary encoding of `n`: the letter `1` repeated `n` times.
    pub fn unary(n: usize) -> Self {
        Word(vec![b'1'; n])
    }

    pub fn from_letters(letters: impl Into<Vec<u8>>) -> Self {
        Word(letters.into())
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_tt(&self) -> bool {
        self.0 == [TT_LETTER]
    }

    pub fn is_ff(&self) -> bool {
        self.0 == [FF_LETTER]
    }

    pub fn is_truth_value(&self) -> bool {
        self.is_tt() || self.is_ff()
    }

    pub fn first(&self) -> Option<u8> {
        self.0.first().copied()
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// `self . other`
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Drops the first letter; `ε` stays `ε`.
    pub fn tail(&self) -> Word {
        Word(self.0.get(1..).unwrap_or_default().to_vec())
    }

    /// Contiguous-factor containment: `self ⊑ other`.
    pub fn is_subword_of(&self, other: &Word) -> bool {
        subword(self, other)
    }

    /// Renders the word for reports; `ε` for the empty word.
    pub fn display(&self) -> String {
        self.to_string()
    }

    /// Raw letters as text, empty string for `ε`.
    pub fn as_text(&self) -> String {
        String::from_utf8_lossy(&self.0).into_owned()
    }
}

impl From<&str> for Word {
    fn from(s: &str) -> Self {
        Word(s.as_bytes().to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("ε")
        } else {
            f.write_str(&String::from_utf8_lossy(&self.0))
        }
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_text())
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_text())
    }
}

/// `v ⊑ w` iff `w = u.v.u'` for some words `u`, `u'`.
pub fn subword(v: &Word, w: &Word) -> bool {
    let (v, w) = (v.letters(), w.letters());
    v.is_empty() || (v.len() <= w.len() && w.windows(v.len()).any(|win| win == v))
}

/// The letter set Σ. The truth letters are always members.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet {
    letters: BTreeSet<u8>,
}

impl Alphabet {
    /// Builds an alphabet from user letters. Letters must be ASCII
    /// alphanumerics or `_`, and may not be the reserved truth letters.
    pub fn new(letters: impl IntoIterator<Item = u8>) -> Result<Self, Error> {
        let mut set = BTreeSet::new();
        for l in letters {
            if l == TT_LETTER || l == FF_LETTER {
                return Err(Error::Alphabet(format!(
                    "letter '{}' is reserved for truth values",
                    l as char
                )));
            }
            if !(l.is_ascii_alphanumeric() || l == b'_') {
                return Err(Error::Alphabet(format!(
                    "letter {:?} is not an ASCII alphanumeric or '_'",
                    l as char
                )));
            }
            set.insert(l);
        }
        Ok(Alphabet { letters: set })
    }

    /// User letters, without the truth letters.
    pub fn user_letters(&self) -> impl Iterator<Item = u8> + '_ {
        self.letters.iter().copied()
    }

    /// Every letter of Σ, truth letters last.
    pub fn all_letters(&self) -> Vec<u8> {
        let mut v: Vec<u8> = self.letters.iter().copied().collect();
        v.push(TT_LETTER);
        v.push(FF_LETTER);
        v
    }

    pub fn contains(&self, letter: u8) -> bool {
        letter == TT_LETTER || letter == FF_LETTER || self.letters.contains(&letter)
    }

    pub fn admits(&self, w: &Word) -> bool {
        w.letters().iter().all(|&l| self.contains(l))
    }

    /// Adds letters, ignoring the reserved ones.
    pub fn extend(&mut self, letters: impl IntoIterator<Item = u8>) -> Result<(), Error> {
        let other = Alphabet::new(letters.into_iter().filter(|&l| l != TT_LETTER && l != FF_LETTER))?;
        self.letters.extend(other.letters);
        Ok(())
    }

    /// All words over Σ with length at most `max_len`, shortest first.
    pub fn words_up_to(&self, max_len: usize) -> Vec<Word> {
        let letters = self.all_letters();
        let mut out = vec![Word::empty()];
        let mut layer = vec![Word::empty()];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(layer.len() * letters.len());
            for w in &layer {
                for &l in &letters {
                    let mut v = w.letters().to_vec();
                    v.push(l);
                    next.push(Word(v));
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet {
            letters: (*b"01").into_iter().collect(),
        }
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.letters.iter().map(|&l| (l as char).to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}
