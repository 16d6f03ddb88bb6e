//! Letters, letter classes and within-class letter contrasts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LetterClass {
    Vowel,
    Consonant,
}

/// One of the 26 lowercase English letters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "char", into = "char")]
pub struct Letter(u8);

impl Letter {
    pub fn new(c: char) -> Result<Letter> {
        if c.is_ascii_lowercase() {
            Ok(Letter(c as u8))
        } else {
            Err(Error::InvalidInput(format!(
                "`{c}` is not a lowercase letter"
            )))
        }
    }

    pub fn from_index(i: usize) -> Letter {
        assert!(i < 26, "letter index out of range: {i}");
        Letter(b'a' + i as u8)
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }

    /// Alphabet position, `a` = 0.
    pub fn index(self) -> usize {
        (self.0 - b'a') as usize
    }

    pub fn class(self) -> LetterClass {
        if VOWELS.contains(&self.as_char()) {
            LetterClass::Vowel
        } else {
            LetterClass::Consonant
        }
    }

    pub fn is_vowel(self) -> bool {
        self.class() == LetterClass::Vowel
    }

    pub fn all() -> impl Iterator<Item = Letter> {
        (0..26).map(Letter::from_index)
    }

    pub fn of_class(class: LetterClass) -> impl Iterator<Item = Letter> {
        Letter::all().filter(move |l| l.class() == class)
    }
}

impl TryFrom<char> for Letter {
    type Error = Error;
    fn try_from(c: char) -> Result<Letter> {
        Letter::new(c)
    }
}

impl From<Letter> for char {
    fn from(l: Letter) -> char {
        l.as_char()
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairClass {
    #[serde(rename = "VV")]
    Vv,
    #[serde(rename = "CC")]
    Cc,
}

impl PairClass {
    pub fn letter_class(self) -> LetterClass {
        match self {
            PairClass::Vv => LetterClass::Vowel,
            PairClass::Cc => LetterClass::Consonant,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairClass::Vv => "VV",
            PairClass::Cc => "CC",
        }
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "VV" | "vv" => Ok(PairClass::Vv),
            "CC" | "cc" => Ok(PairClass::Cc),
            other => Err(Error::InvalidInput(format!("unknown pair class `{other}`"))),
        }
    }
}

/// Two distinct letters of the same class.
///
/// Pairs built by [`LetterPair::new`] keep the caller's order; the corpus and
/// every analysis table use the canonical (alphabetical) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LetterPair {
    first: Letter,
    second: Letter,
}

impl LetterPair {
    pub fn new(first: Letter, second: Letter) -> Result<LetterPair> {
        if first == second {
            return Err(Error::InvalidInput(format!(
                "a contrast needs two different letters, got {first}-{second}"
            )));
        }
        if first.class() != second.class() {
            return Err(Error::InvalidInput(format!(
                "{first}-{second} mixes a vowel and a consonant"
            )));
        }
        Ok(LetterPair { first, second })
    }

    pub fn canonical(a: Letter, b: Letter) -> Result<LetterPair> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        LetterPair::new(lo, hi)
    }

    pub fn first(self) -> Letter {
        self.first
    }

    pub fn second(self) -> Letter {
        self.second
    }

    pub fn class(self) -> PairClass {
        match self.first.class() {
            LetterClass::Vowel => PairClass::Vv,
            LetterClass::Consonant => PairClass::Cc,
        }
    }

    pub fn is_canonical(self) -> bool {
        self.first < self.second
    }

    pub fn swapped(self) -> LetterPair {
        LetterPair {
            first: self.second,
            second: self.first,
        }
    }

    pub fn contains(self, l: Letter) -> bool {
        self.first == l || self.second == l
    }

    /// +1 when `focal` is the second letter, -1 when it is the first.
    ///
    /// Effects are signed so that positive means the second letter scores
    /// higher; multiplying by this orients them toward the focal letter.
    pub fn orientation(self, focal: Letter) -> Option<f64> {
        if focal == self.second {
            Some(1.0)
        } else if focal == self.first {
            Some(-1.0)
        } else {
            None
        }
    }

    /// All 220 canonical contrasts: 10 vowel-vowel then 210 consonant-consonant,
    /// each block in lexicographic order.
    pub fn all() -> Vec<LetterPair> {
        let mut out = Vec::with_capacity(220);
        for class in [LetterClass::Vowel, LetterClass::Consonant] {
            let letters: Vec<Letter> = Letter::of_class(class).collect();
            for (i, &a) in letters.iter().enumerate() {
                for &b in &letters[i + 1..] {
                    out.push(LetterPair {
                        first: a,
                        second: b,
                    });
                }
            }
        }
        out
    }

    pub fn all_of_class(class: PairClass) -> Vec<LetterPair> {
        LetterPair::all()
            .into_iter()
            .filter(|p| p.class() == class)
            .collect()
    }
}

impl fmt::Display for LetterPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.first, self.second)
    }
}

impl FromStr for LetterPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        match chars.as_slice() {
            [a, '-', b] => LetterPair::new(Letter::new(*a)?, Letter::new(*b)?),
            _ => Err(Error::InvalidInput(format!(
                "contrast `{s}` is not of the form x-y"
            ))),
        }
    }
}

impl TryFrom<String> for LetterPair {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LetterPair> for String {
    fn from(p: LetterPair) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_vowels_and_twenty_one_consonants() {
        assert_eq!(Letter::of_class(LetterClass::Vowel).count(), 5);
        assert_eq!(Letter::of_class(LetterClass::Consonant).count(), 21);
    }

    #[test]
    fn enumerates_220_canonical_contrasts() {
        let all = LetterPair::all();
        assert_eq!(all.len(), 220);
        assert_eq!(
            all.iter().filter(|p| p.class() == PairClass::Vv).count(),
            10
        );
        assert_eq!(
            all.iter().filter(|p| p.class() == PairClass::Cc).count(),
            210
        );
        assert!(all.iter().all(|p| p.is_canonical()));
        let unique: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 220);
    }

    #[test]
    fn rejects_self_and_cross_class_pairs() {
        let x = Letter::new('x').unwrap();
        let a = Letter::new('a').unwrap();
        assert!(LetterPair::new(x, x).is_err());
        assert!(LetterPair::new(a, x).is_err());
    }

    #[test]
    fn parses_and_displays() {
        let p: LetterPair = "e-o".parse().unwrap();
        assert_eq!(p.to_string(), "e-o");
        assert!("eo".parse::<LetterPair>().is_err());
        assert!("E-o".parse::<LetterPair>().is_err());
        assert_eq!(LetterPair::canonical(p.second(), p.first()).unwrap(), p);
    }

    #[test]
    fn orientation_signs() {
        let p: LetterPair = "b-p".parse().unwrap();
        assert_eq!(p.orientation(Letter::new('p').unwrap()), Some(1.0));
        assert_eq!(p.orientation(Letter::new('b').unwrap()), Some(-1.0));
        assert_eq!(p.orientation(Letter::new('t').unwrap()), None);
    }
}
