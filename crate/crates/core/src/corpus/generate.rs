use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phonotactics::{Phonotactics, Slot};
use super::{mask, ContrastCount, Corpus, Lexicon, Manifest, NonwordPair, Pseudoword};
use crate::error::{Error, Result};
use crate::letters::{LetterClass, LetterPair};
use crate::seed;

pub const MANIFEST_SCHEMA: &str = "phonosem-corpus-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_single: usize,
    pub n_double: usize,
    pub seed: u64,
    /// Contrasts below this count get a manifest warning.
    pub min_per_contrast: usize,
    pub attempts_per_pair: usize,
    /// Restrict generation to these contrasts (e.g. `["e-o"]`); empty means all 220.
    pub contrasts: Vec<String>,
    pub lexicon_path: Option<PathBuf>,
    pub phonotactics_path: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_single: 10,
            n_double: 10,
            seed: 42,
            min_per_contrast: 20,
            attempts_per_pair: 1000,
            contrasts: Vec::new(),
            lexicon_path: None,
            phonotactics_path: None,
        }
    }
}

impl CorpusConfig {
    pub fn selected_contrasts(&self) -> Result<Vec<LetterPair>> {
        if self.contrasts.is_empty() {
            return Ok(LetterPair::all());
        }
        let mut out = Vec::new();
        for s in &self.contrasts {
            let p: LetterPair = s.parse()?;
            let p = LetterPair::canonical(p.first(), p.second())?;
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn load_lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon_path {
            Some(p) => Lexicon::load(p),
            None => Ok(Lexicon::bundled()),
        }
    }

    pub fn load_phonotactics(&self) -> Result<Phonotactics> {
        match &self.phonotactics_path {
            Some(p) => Phonotactics::load(p),
            None => Ok(Phonotactics::bundled()),
        }
    }
}

/// How different carrier frames within one contrast must be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diversity {
    /// Same-length frames must differ in at least two non-target letters.
    Strict,
    /// Frames must merely be distinct.
    Relaxed,
}

impl Diversity {
    fn admits(self, frame: &str, used: &BTreeSet<String>) -> bool {
        if used.contains(frame) {
            return false;
        }
        match self {
            Diversity::Relaxed => true,
            Diversity::Strict => used.iter().all(|u| {
                u.len() != frame.len()
                    || u.bytes().zip(frame.bytes()).filter(|(x, y)| x != y).count() >= 2
            }),
        }
    }
}

/// Random cluster proposals for each consonant-run position.
struct FrameSampler<'a> {
    phon: &'a Phonotactics,
    onsets: Vec<Vec<String>>,
    codas: Vec<Vec<String>>,
    medials: Vec<Vec<String>>,
    vowels: Vec<char>,
}

impl<'a> FrameSampler<'a> {
    const MAX_RUN: usize = 4;

    fn new(phon: &'a Phonotactics) -> Self {
        let by_len = |set: &BTreeSet<String>| {
            let mut v = vec![Vec::new(); Self::MAX_RUN + 1];
            for s in set {
                if s.len() <= Self::MAX_RUN {
                    v[s.len()].push(s.clone());
                }
            }
            v
        };
        let onsets = by_len(phon.onsets());
        let codas = by_len(phon.codas());
        let mut medial_sets = vec![BTreeSet::new(); Self::MAX_RUN + 1];
        let with_empty = |v: &Vec<Vec<String>>| {
            let mut all = vec![String::new()];
            all.extend(v.iter().flatten().cloned());
            all
        };
        for c in with_empty(&codas) {
            for o in with_empty(&onsets) {
                let len = c.len() + o.len();
                if (1..=Self::MAX_RUN).contains(&len) {
                    medial_sets[len].insert(format!("{c}{o}"));
                }
            }
        }
        let medials = medial_sets
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();
        FrameSampler {
            phon,
            onsets,
            codas,
            medials,
            vowels: crate::letters::VOWELS.to_vec(),
        }
    }

    /// Fills a template with sampled letters. Returns None if some run length
    /// has no candidates.
    fn fill(&self, template: &[Slot], rng: &mut ChaCha8Rng) -> Option<Vec<char>> {
        let mut out = Vec::with_capacity(template.len());
        let mut i = 0;
        while i < template.len() {
            if template[i] == Slot::V {
                out.push(*self.vowels.choose(rng)?);
                i += 1;
                continue;
            }
            let start = i;
            while i < template.len() && template[i] == Slot::C {
                i += 1;
            }
            let len = i - start;
            let pool = if start == 0 {
                self.onsets.get(len)?
            } else if i == template.len() {
                self.codas.get(len)?
            } else {
                self.medials.get(len)?
            };
            out.extend(pool.choose(rng)?.chars());
        }
        Some(out)
    }

    /// One attempt at a pair for `contrast` with `k` target occurrences.
    fn attempt(
        &self,
        contrast: LetterPair,
        k: usize,
        lexicon: &Lexicon,
        rng: &mut ChaCha8Rng,
    ) -> Option<(String, String, Vec<usize>)> {
        let class_slot = match contrast.first().class() {
            LetterClass::Vowel => Slot::V,
            LetterClass::Consonant => Slot::C,
        };
        let template = self.phon.templates().choose(rng)?;
        let slots: Vec<usize> = (0..template.len())
            .filter(|&i| template[i] == class_slot)
            .collect();
        if slots.len() < k {
            return None;
        }
        let mut targets: Vec<usize> = slots.choose_multiple(rng, k).copied().collect();
        targets.sort_unstable();
        if targets.windows(2).any(|w| w[1] == w[0] + 1) {
            return None;
        }
        let mut letters = self.fill(template, rng)?;
        let (first, second) = (contrast.first().as_char(), contrast.second().as_char());
        if letters
            .iter()
            .enumerate()
            .any(|(i, c)| !targets.contains(&i) && (*c == first || *c == second))
        {
            return None;
        }
        for &t in &targets {
            letters[t] = first;
        }
        let word_a: String = letters.iter().collect();
        for &t in &targets {
            letters[t] = second;
        }
        let word_b: String = letters.iter().collect();
        for w in [&word_a, &word_b] {
            if !self.phon.validate(w).unwrap_or(false) || !lexicon.screen(w) {
                return None;
            }
        }
        Some((word_a, word_b, targets))
    }
}

struct ContrastRun<'a> {
    contrast: LetterPair,
    sampler: &'a FrameSampler<'a>,
    lexicon: &'a Lexicon,
    rng: ChaCha8Rng,
    frames: BTreeSet<String>,
    singles: Vec<NonwordPair>,
    doubles: Vec<NonwordPair>,
    supplemented: usize,
    attempts_per_pair: usize,
}

impl<'a> ContrastRun<'a> {
    fn new(
        contrast: LetterPair,
        master_seed: u64,
        sampler: &'a FrameSampler<'a>,
        lexicon: &'a Lexicon,
        attempts_per_pair: usize,
    ) -> Self {
        ContrastRun {
            contrast,
            sampler,
            lexicon,
            rng: ChaCha8Rng::seed_from_u64(seed::derive(master_seed, &contrast.to_string())),
            frames: BTreeSet::new(),
            singles: Vec::new(),
            doubles: Vec::new(),
            supplemented: 0,
            attempts_per_pair,
        }
    }

    fn group(&mut self, k: usize) -> &mut Vec<NonwordPair> {
        if k == 1 {
            &mut self.singles
        } else {
            &mut self.doubles
        }
    }

    /// Adds up to `wanted` pairs with `k` occurrences; returns how many were added.
    fn fill(&mut self, k: usize, wanted: usize, diversity: Diversity) -> usize {
        let mut added = 0;
        let mut budget = wanted * self.attempts_per_pair;
        while added < wanted && budget > 0 {
            budget -= 1;
            let Some((a, b, targets)) =
                self.sampler
                    .attempt(self.contrast, k, self.lexicon, &mut self.rng)
            else {
                continue;
            };
            let frame = mask(&a, &targets);
            if !diversity.admits(&frame, &self.frames) {
                continue;
            }
            self.frames.insert(frame);
            let tag = if k == 1 { 's' } else { 'd' };
            let idx = self.group(k).len() + 1;
            let pair = NonwordPair {
                pair_id: format!("{}.{tag}{idx:02}", self.contrast),
                contrast: self.contrast,
                word_a: Pseudoword {
                    text: a,
                    target_positions: targets.clone(),
                },
                word_b: Pseudoword {
                    text: b,
                    target_positions: targets,
                },
                occurrence_count: k as u8,
            };
            self.group(k).push(pair);
            added += 1;
        }
        added
    }

    /// Strict pass, then a relaxed-diversity retry for any shortfall.
    fn fill_exact(&mut self, k: usize, wanted: usize) {
        let got = self.fill(k, wanted, Diversity::Strict);
        if got < wanted {
            self.supplemented += self.fill(k, wanted - got, Diversity::Relaxed);
        }
    }

    fn into_pairs(self) -> Vec<NonwordPair> {
        let mut v = self.singles;
        v.extend(self.doubles);
        v
    }
}

/// Generates exactly `n_single` one-occurrence and `n_double` two-occurrence
/// pairs for `contrast`, or reports how many could be built.
pub fn generate_pair_set(
    contrast: LetterPair,
    n_single: usize,
    n_double: usize,
    seed: u64,
    lexicon: &Lexicon,
    phon: &Phonotactics,
) -> Result<Vec<NonwordPair>> {
    let contrast = LetterPair::canonical(contrast.first(), contrast.second())?;
    let sampler = FrameSampler::new(phon);
    let mut run = ContrastRun::new(
        contrast,
        seed,
        &sampler,
        lexicon,
        CorpusConfig::default().attempts_per_pair,
    );
    run.fill_exact(1, n_single);
    run.fill_exact(2, n_double);
    let produced = run.singles.len() + run.doubles.len();
    if produced < n_single + n_double {
        return Err(Error::Exhausted {
            contrast: contrast.to_string(),
            requested: n_single + n_double,
            produced,
        });
    }
    Ok(run.into_pairs())
}

/// Builds the full corpus over every configured contrast.
///
/// Contrasts are generated independently in parallel from seeds derived from
/// `(config.seed, contrast)`. A contrast that stays short after the relaxed
/// retry is topped up with the other occurrence count; anything still below
/// `min_per_contrast` is recorded as a manifest warning.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    let lexicon = config.load_lexicon()?;
    let phon = config.load_phonotactics()?;
    generate_corpus_with(config, &lexicon, &phon)
}

pub fn generate_corpus_with(
    config: &CorpusConfig,
    lexicon: &Lexicon,
    phon: &Phonotactics,
) -> Result<Corpus> {
    if config.attempts_per_pair == 0 {
        return Err(Error::Config("attempts_per_pair must be positive".into()));
    }
    let contrasts = config.selected_contrasts()?;
    let sampler = FrameSampler::new(phon);
    let target = config.n_single + config.n_double;

    let results: Vec<(Vec<NonwordPair>, ContrastCount)> = contrasts
        .par_iter()
        .map(|&contrast| {
            let mut run = ContrastRun::new(
                contrast,
                config.seed,
                &sampler,
                lexicon,
                config.attempts_per_pair,
            );
            run.fill_exact(1, config.n_single);
            run.fill_exact(2, config.n_double);
            let short = target.saturating_sub(run.singles.len() + run.doubles.len());
            if short > 0 {
                let k = if run.singles.len() < config.n_single {
                    2
                } else {
                    1
                };
                run.supplemented += run.fill(k, short, Diversity::Relaxed);
            }
            let (single, double) = (run.singles.len(), run.doubles.len());
            let total = single + double;
            let warning = if total < config.min_per_contrast {
                Some(format!(
                    "{contrast}: {total} pairs is below the minimum of {}",
                    config.min_per_contrast
                ))
            } else if total < target {
                Some(format!(
                    "{contrast}: produced {total} of {target} requested pairs"
                ))
            } else {
                None
            };
            let count = ContrastCount {
                contrast,
                class: contrast.class(),
                single,
                double,
                total,
                supplemented: run.supplemented,
                warning,
            };
            (run.into_pairs(), count)
        })
        .collect();

    let mut pairs = Vec::new();
    let mut counts = Vec::new();
    let mut warnings = Vec::new();
    for (p, c) in results {
        pairs.extend(p);
        if let Some(w) = &c.warning {
            log::warn!("{w}");
            warnings.push(w.clone());
        }
        counts.push(c);
    }
    let config_json = serde_json::to_string(config).expect("corpus config serializes");
    let phon_digest = seed::short_hash(phon.source_text().as_bytes());
    let config_hash =
        seed::short_hash(format!("{config_json}|{}|{phon_digest}", lexicon.digest()).as_bytes());
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        seed: config.seed,
        config_hash,
        lexicon_digest: lexicon.digest().to_string(),
        phonotactics_digest: phon_digest,
        n_single: config.n_single,
        n_double: config.n_double,
        min_per_contrast: config.min_per_contrast,
        total_pairs: pairs.len(),
        contrasts: counts,
        warnings,
    };
    Ok(Corpus { pairs, manifest })
}
