//! Real-word lexicon and edit-distance screening.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/lexicon.txt");

/// Levenshtein distance with unit-cost insertion, deletion and substitution.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    words: HashSet<String>,
    digest: String,
}

impl Lexicon {
    /// Frequency-sorted English list shipped with the crate (40,000 words).
    pub fn bundled() -> Lexicon {
        Lexicon::parse("bundled lexicon", BUNDLED).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&path.display().to_string(), &text)
    }

    /// One word per line; blank lines are skipped.
    pub fn parse(source: &str, text: &str) -> Result<Lexicon> {
        let mut words = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let w = line.trim();
            if w.is_empty() {
                continue;
            }
            if !w.chars().all(|c| c.is_ascii_lowercase()) {
                return Err(Error::format(
                    source,
                    i + 1,
                    format!("`{w}` is not lowercase alphabetic"),
                ));
            }
            words.insert(w.to_string());
        }
        Lexicon::from_words(words).map_err(|_| Error::Config(format!("{source}: lexicon is empty")))
    }

    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Lexicon> {
        let words: HashSet<String> = words.into_iter().map(Into::into).collect();
        if words.is_empty() {
            return Err(Error::Config("lexicon is empty".into()));
        }
        if let Some(bad) = words
            .iter()
            .find(|w| w.is_empty() || !w.chars().all(|c| c.is_ascii_lowercase()))
        {
            return Err(Error::InvalidInput(format!(
                "lexicon word `{bad}` is not lowercase alphabetic"
            )));
        }
        let mut sorted: Vec<&str> = words.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        let digest = crate::seed::short_hash(sorted.join("\n").as_bytes());
        Ok(Lexicon { words, digest })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    /// Content hash of the sorted word set.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Returns a lexicon word within edit distance 1 of `text`, if any.
    ///
    /// Enumerates every string one edit away and probes the hash set, which is
    /// exact for distance <= 1 and independent of lexicon size.
    pub fn near_word(&self, text: &str) -> Option<String> {
        if self.words.contains(text) {
            return Some(text.to_string());
        }
        let chars: Vec<char> = text.chars().collect();
        let mut probe = String::with_capacity(chars.len() + 1);
        let check = |probe: &String| self.words.get(probe.as_str()).cloned();
        for i in 0..chars.len() {
            probe.clear();
            probe.extend(chars[..i].iter().chain(&chars[i + 1..]));
            if let Some(w) = check(&probe) {
                return Some(w);
            }
        }
        for i in 0..chars.len() {
            for c in 'a'..='z' {
                if c == chars[i] {
                    continue;
                }
                probe.clear();
                probe.extend(&chars[..i]);
                probe.push(c);
                probe.extend(&chars[i + 1..]);
                if let Some(w) = check(&probe) {
                    return Some(w);
                }
            }
        }
        for i in 0..=chars.len() {
            for c in 'a'..='z' {
                probe.clear();
                probe.extend(&chars[..i]);
                probe.push(c);
                probe.extend(&chars[i..]);
                if let Some(w) = check(&probe) {
                    return Some(w);
                }
            }
        }
        None
    }

    /// True when no lexicon word lies within edit distance 1 of `text`.
    pub fn screen(&self, text: &str) -> bool {
        self.near_word(text).is_none()
    }
}

/// Accepts `text` iff no word of `lexicon` is within edit distance 1.
pub fn screen_word(text: &str, lexicon: &Lexicon) -> Result<bool> {
    if lexicon.is_empty() {
        return Err(Error::Config("lexicon is empty".into()));
    }
    Ok(lexicon.screen(text))
}
