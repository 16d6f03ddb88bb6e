//! Minimal-pair pseudoword corpus: phonotactic validation, lexicon screening,
//! generation and on-disk format.

mod generate;
mod io;
pub mod lexicon;
pub mod phonotactics;

use serde::{Deserialize, Serialize};

use crate::letters::{LetterPair, PairClass};

pub use generate::{
    generate_corpus, generate_corpus_with, generate_pair_set, CorpusConfig, Diversity,
};
pub use io::{read_corpus, write_corpus, CORPUS_SCHEMA};
pub use lexicon::{edit_distance, screen_word, Lexicon};
pub use phonotactics::Phonotactics;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pseudoword {
    pub text: String,
    /// Zero-based indices of the target letter.
    pub target_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonwordPair {
    pub pair_id: String,
    pub contrast: LetterPair,
    /// Carries `contrast.first()` at every target position.
    pub word_a: Pseudoword,
    /// Carries `contrast.second()` at every target position.
    pub word_b: Pseudoword,
    pub occurrence_count: u8,
}

impl NonwordPair {
    pub fn class(&self) -> PairClass {
        self.contrast.class()
    }

    /// Frame with target positions blanked, e.g. `br_v`.
    pub fn frame(&self) -> String {
        mask(&self.word_a.text, &self.word_a.target_positions)
    }

    /// Checks every structural invariant plus phonotactic legality and lexicon
    /// distance of both members. Returns a description of the first violation.
    pub fn check(&self, phon: &Phonotactics, lexicon: &Lexicon) -> Result<(), String> {
        let a: Vec<char> = self.word_a.text.chars().collect();
        let b: Vec<char> = self.word_b.text.chars().collect();
        let (first, second) = (
            self.contrast.first().as_char(),
            self.contrast.second().as_char(),
        );
        let k = self.occurrence_count as usize;
        if !(1..=2).contains(&k) {
            return Err(format!(
                "{}: occurrence_count {k} not in 1..=2",
                self.pair_id
            ));
        }
        if a.len() != b.len() || !(4..=7).contains(&a.len()) {
            return Err(format!(
                "{}: lengths {} / {}",
                self.pair_id,
                a.len(),
                b.len()
            ));
        }
        if self.word_a.target_positions != self.word_b.target_positions
            || self.word_a.target_positions.len() != k
        {
            return Err(format!("{}: inconsistent target positions", self.pair_id));
        }
        let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        if diff != self.word_a.target_positions {
            return Err(format!("{}: words differ at {diff:?}", self.pair_id));
        }
        for &i in &diff {
            if a[i] != first || b[i] != second {
                return Err(format!(
                    "{}: position {i} is not a {first}/{second} swap",
                    self.pair_id
                ));
            }
        }
        if a.iter().filter(|&&c| c == first).count() != k
            || b.iter().filter(|&&c| c == second).count() != k
            || a.contains(&second)
            || b.contains(&first)
        {
            return Err(format!(
                "{}: target letter count differs from {k}",
                self.pair_id
            ));
        }
        for w in [&self.word_a.text, &self.word_b.text] {
            match phon.validate(w) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(format!(
                        "{}: `{w}` is phonotactically illegal",
                        self.pair_id
                    ))
                }
                Err(e) => return Err(format!("{}: {e}", self.pair_id)),
            }
            if let Some(near) = lexicon.near_word(w) {
                return Err(format!(
                    "{}: `{w}` is within distance 1 of `{near}`",
                    self.pair_id
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn mask(text: &str, positions: &[usize]) -> String {
    text.chars()
        .enumerate()
        .map(|(i, c)| if positions.contains(&i) { '_' } else { c })
        .collect()
}

/// Per-contrast yield recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastCount {
    pub contrast: LetterPair,
    pub class: PairClass,
    pub single: usize,
    pub double: usize,
    pub total: usize,
    /// Pairs that needed relaxed frame diversity or cross-occurrence top-up.
    pub supplemented: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub seed: u64,
    pub config_hash: String,
    pub lexicon_digest: String,
    pub phonotactics_digest: String,
    pub n_single: usize,
    pub n_double: usize,
    pub min_per_contrast: usize,
    pub total_pairs: usize,
    pub contrasts: Vec<ContrastCount>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub pairs: Vec<NonwordPair>,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn pairs_for(&self, contrast: LetterPair) -> impl Iterator<Item = &NonwordPair> {
        self.pairs.iter().filter(move |p| p.contrast == contrast)
    }

    /// Validates every pair, returning all violations.
    pub fn validate(&self, phon: &Phonotactics, lexicon: &Lexicon) -> Vec<String> {
        use rayon::prelude::*;
        let mut errors: Vec<String> = self
            .pairs
            .par_iter()
            .filter_map(|p| p.check(phon, lexicon).err())
            .collect();
        let mut seen = std::collections::HashSet::new();
        for p in &self.pairs {
            if !seen.insert(&p.pair_id) {
                errors.push(format!("duplicate pair_id {}", p.pair_id));
            }
        }
        errors
    }

    /// Every distinct pseudoword in corpus order, with the first pair that uses it.
    pub fn unique_words(&self) -> Vec<(&str, &str)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for p in &self.pairs {
            for w in [&p.word_a.text, &p.word_b.text] {
                if seen.insert(w.as_str()) {
                    out.push((w.as_str(), p.pair_id.as_str()));
                }
            }
        }
        out
    }
}
