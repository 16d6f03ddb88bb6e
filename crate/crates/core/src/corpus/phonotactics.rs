//! Onset/coda cluster tables and the syllable-structure validator.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::letters::VOWELS;

const BUNDLED: &str = include_str!("../../data/phonotactics.toml");

#[derive(Debug, Clone, Deserialize)]
struct PhonotacticsFile {
    onsets: Vec<String>,
    codas: Vec<String>,
    nuclei: Vec<String>,
    frame_templates: Vec<String>,
}

/// Slot kind in a CV frame skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    C,
    V,
}

#[derive(Debug, Clone)]
pub struct Phonotactics {
    onsets: BTreeSet<String>,
    codas: BTreeSet<String>,
    nuclei: BTreeSet<String>,
    templates: Vec<Vec<Slot>>,
    source_text: String,
}

fn is_vowel(c: char) -> bool {
    VOWELS.contains(&c)
}

impl Phonotactics {
    pub fn bundled() -> Phonotactics {
        Phonotactics::parse("bundled phonotactics", BUNDLED)
            .expect("bundled phonotactics table is valid")
    }

    pub fn load(path: &Path) -> Result<Phonotactics> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Phonotactics::parse(&path.display().to_string(), &text)
    }

    pub fn parse(source: &str, text: &str) -> Result<Phonotactics> {
        let file: PhonotacticsFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
        let check_cluster = |kind: &str, s: &String, want_vowels: bool| -> Result<()> {
            let ok = !s.is_empty()
                && s.chars()
                    .all(|c| c.is_ascii_lowercase() && is_vowel(c) == want_vowels);
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{source}: invalid {kind} `{s}`")))
            }
        };
        for s in &file.onsets {
            check_cluster("onset", s, false)?;
        }
        for s in &file.codas {
            check_cluster("coda", s, false)?;
        }
        for s in &file.nuclei {
            check_cluster("nucleus", s, true)?;
        }
        let templates = file
            .frame_templates
            .iter()
            .map(|t| {
                let slots: Vec<Slot> = t
                    .chars()
                    .map(|c| match c {
                        'C' => Ok(Slot::C),
                        'V' => Ok(Slot::V),
                        other => Err(Error::Config(format!(
                            "{source}: template `{t}` has unknown slot `{other}`"
                        ))),
                    })
                    .collect::<Result<_>>()?;
                if !(4..=7).contains(&slots.len()) || !slots.contains(&Slot::V) {
                    return Err(Error::Config(format!(
                        "{source}: template `{t}` must have 4-7 slots and a vowel"
                    )));
                }
                Ok(slots)
            })
            .collect::<Result<Vec<_>>>()?;
        if file.onsets.is_empty() || file.nuclei.is_empty() || templates.is_empty() {
            return Err(Error::Config(format!(
                "{source}: onsets, nuclei and frame_templates must be nonempty"
            )));
        }
        Ok(Phonotactics {
            onsets: file.onsets.into_iter().collect(),
            codas: file.codas.into_iter().collect(),
            nuclei: file.nuclei.into_iter().collect(),
            templates,
            source_text: text.to_string(),
        })
    }

    pub fn onsets(&self) -> &BTreeSet<String> {
        &self.onsets
    }

    pub fn codas(&self) -> &BTreeSet<String> {
        &self.codas
    }

    pub fn templates(&self) -> &[Vec<Slot>] {
        &self.templates
    }

    /// Raw table text, hashed into corpus provenance.
    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    fn onset_ok(&self, cluster: &str) -> bool {
        cluster.is_empty() || self.onsets.contains(cluster)
    }

    fn coda_ok(&self, cluster: &str) -> bool {
        cluster.is_empty() || self.codas.contains(cluster)
    }

    /// True when a word-internal consonant run can be split into a legal coda
    /// followed by a legal onset.
    pub fn medial_ok(&self, cluster: &str) -> bool {
        (0..=cluster.len()).any(|k| self.coda_ok(&cluster[..k]) && self.onset_ok(&cluster[k..]))
    }

    /// Checks whether `text` is a legal word under the configured tables.
    pub fn validate(&self, text: &str) -> Result<bool> {
        if text.is_empty() || !text.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(Error::InvalidInput(format!(
                "`{text}` is not a lowercase alphabetic string"
            )));
        }
        let bytes = text.as_bytes();
        if bytes.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
            return Ok(false);
        }

        // Alternating maximal runs of consonants and vowels.
        let mut runs: Vec<(bool, &str)> = Vec::new();
        let mut start = 0;
        for i in 1..=bytes.len() {
            if i == bytes.len() || is_vowel(bytes[i] as char) != is_vowel(bytes[start] as char) {
                runs.push((is_vowel(bytes[start] as char), &text[start..i]));
                start = i;
            }
        }
        let n_nuclei = runs.iter().filter(|(v, _)| *v).count();
        if n_nuclei == 0 {
            return Ok(false);
        }
        for (idx, &(vowel, run)) in runs.iter().enumerate() {
            let ok = if vowel {
                self.nuclei.contains(run)
            } else if idx == 0 {
                self.onset_ok(run)
            } else if idx == runs.len() - 1 {
                self.coda_ok(run)
            } else {
                self.medial_ok(run)
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
