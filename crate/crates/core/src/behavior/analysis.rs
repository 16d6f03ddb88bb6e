use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::binomial::exact_binomial_p;
use super::trials::{ParticipantRecord, TrialRecord};
use crate::error::{Error, Result};
use crate::ratings::Dimension;
use crate::stats::{mean, pearson, pearson_p};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub correct: u64,
    pub n: u64,
    pub accuracy: f64,
    /// Exact binomial against chance (0.5).
    pub p_two_sided: f64,
    pub p_greater: f64,
    pub log10_p_two_sided: f64,
    pub log10_p_greater: f64,
}

impl AccuracyCell {
    pub fn new(correct: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InsufficientData("accuracy over zero trials".into()));
        }
        let p = exact_binomial_p(correct, n, 0.5)?;
        Ok(AccuracyCell {
            correct,
            n,
            accuracy: correct as f64 / n as f64,
            p_two_sided: p.two_sided,
            p_greater: p.greater,
            log10_p_two_sided: p.ln_two_sided / std::f64::consts::LN_10,
            log10_p_greater: p.ln_greater / std::f64::consts::LN_10,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub n_participants: usize,
    pub excluded: Vec<String>,
    pub overall: AccuracyCell,
    pub per_dimension: Vec<(Dimension, AccuracyCell)>,
    pub per_pair: Vec<(String, AccuracyCell)>,
    pub per_language: Vec<(String, AccuracyCell)>,
}

/// One record per participant; attention passes only if every attention-check
/// trial was answered as planted.
pub fn derive_participants(trials: &[TrialRecord]) -> Vec<ParticipantRecord> {
    let mut map: BTreeMap<&str, ParticipantRecord> = BTreeMap::new();
    for t in trials {
        let entry = map
            .entry(&t.participant_id)
            .or_insert_with(|| ParticipantRecord {
                participant_id: t.participant_id.clone(),
                language: t.language.clone(),
                set_assignment: 0,
                attention_pass: true,
            });
        if t.is_attention_check && !t.correct() {
            entry.attention_pass = false;
        }
    }
    map.into_values().collect()
}

/// Trials that count: attention checks dropped, excluded participants dropped entirely.
pub fn analyzable<'a>(
    trials: &'a [TrialRecord],
    participants: &[ParticipantRecord],
) -> Vec<&'a TrialRecord> {
    let excluded: BTreeSet<&str> = participants
        .iter()
        .filter(|p| !p.attention_pass)
        .map(|p| p.participant_id.as_str())
        .collect();
    trials
        .iter()
        .filter(|t| !t.is_attention_check && !excluded.contains(t.participant_id.as_str()))
        .collect()
}

fn tally<K: Ord + Clone>(
    trials: &[&TrialRecord],
    key: impl Fn(&TrialRecord) -> K,
) -> BTreeMap<K, (u64, u64)> {
    let mut map: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for t in trials {
        let slot = map.entry(key(t)).or_default();
        slot.0 += u64::from(t.correct());
        slot.1 += 1;
    }
    map
}

fn cells<K: Ord + Clone>(map: BTreeMap<K, (u64, u64)>) -> Result<Vec<(K, AccuracyCell)>> {
    map.into_iter()
        .map(|(k, (c, n))| Ok((k, AccuracyCell::new(c, n)?)))
        .collect()
}

/// Accuracy of choosing the predicted member, overall and broken down, with
/// exact binomial tests against chance.
pub fn analyze_study(
    trials: &[TrialRecord],
    participants: &[ParticipantRecord],
) -> Result<StudyResult> {
    let kept = analyzable(trials, participants);
    if kept.is_empty() {
        return Err(Error::InsufficientData(
            "no analyzable trials after exclusions".into(),
        ));
    }
    let correct = kept.iter().filter(|t| t.correct()).count() as u64;
    let kept_ids: BTreeSet<&str> = kept.iter().map(|t| t.participant_id.as_str()).collect();
    Ok(StudyResult {
        n_participants: kept_ids.len(),
        excluded: participants
            .iter()
            .filter(|p| !p.attention_pass)
            .map(|p| p.participant_id.clone())
            .collect(),
        overall: AccuracyCell::new(correct, kept.len() as u64)?,
        per_dimension: cells(tally(&kept, |t| t.dimension))?,
        per_pair: cells(tally(&kept, |t| t.pair_id.clone()))?,
        per_language: cells(tally(&kept, |t| t.language.clone()))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
}

/// Pearson r between LLM and human per-pair accuracy with a two-sided t-test p.
pub fn llm_human_pair_correlation(llm: &[f64], human: &[f64]) -> Result<Correlation> {
    if llm.len() != human.len() || llm.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need two equal-length vectors of at least 3, got {} and {}",
            llm.len(),
            human.len()
        )));
    }
    let r = pearson(llm, human);
    if r.is_none() {
        log::warn!("pair correlation undefined: zero variance");
    }
    Ok(Correlation {
        r,
        p: r.and_then(|r| pearson_p(r, llm.len())),
        n: llm.len(),
    })
}

/// How per-pair accuracy is pooled over language groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Every trial weighs the same.
    #[default]
    Trials,
    /// Every language group weighs the same.
    Languages,
}

/// Per-pair accuracy pooled across languages.
pub fn pooled_pair_accuracy(trials: &[&TrialRecord], pooling: Pooling) -> BTreeMap<String, f64> {
    match pooling {
        Pooling::Trials => tally(trials, |t| t.pair_id.clone())
            .into_iter()
            .map(|(k, (c, n))| (k, c as f64 / n as f64))
            .collect(),
        Pooling::Languages => {
            let mut per_pair: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for ((_, pair), (c, n)) in tally(trials, |t| (t.language.clone(), t.pair_id.clone())) {
                per_pair.entry(pair).or_default().push(c as f64 / n as f64);
            }
            per_pair.into_iter().map(|(k, v)| (k, mean(&v))).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub language_a: String,
    pub language_b: String,
    pub r: Option<f64>,
    pub n_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossLanguageTable {
    pub per_language: Vec<(String, AccuracyCell)>,
    pub correlations: Vec<LanguagePair>,
    pub mean_r: Option<f64>,
    pub min_r: Option<f64>,
    pub max_r: Option<f64>,
    pub excluded_languages: Vec<String>,
}

/// Per-language accuracy and inter-group correlations of per-pair accuracy.
pub fn cross_language_table(trials: &[&TrialRecord]) -> Result<CrossLanguageTable> {
    let per_language = cells(tally(trials, |t| t.language.clone()))?;
    if per_language.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "cross-language comparison needs at least 2 language groups, got {}",
            per_language.len()
        )));
    }
    let mut by_lang: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((lang, pair), (c, n)) in tally(trials, |t| (t.language.clone(), t.pair_id.clone())) {
        by_lang
            .entry(lang)
            .or_default()
            .insert(pair, c as f64 / n as f64);
    }
    let (kept, dropped): (Vec<_>, Vec<_>) =
        by_lang.into_iter().partition(|(_, pairs)| pairs.len() >= 2);
    let excluded_languages: Vec<String> = dropped.into_iter().map(|(l, _)| l).collect();
    for l in &excluded_languages {
        log::warn!("language group {l} has fewer than 2 pairs; left out of correlations");
    }
    let mut correlations = Vec::new();
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            let (x, y): (Vec<f64>, Vec<f64>) = kept[i]
                .1
                .iter()
                .filter_map(|(pair, a)| Some((*a, *kept[j].1.get(pair)?)))
                .unzip();
            correlations.push(LanguagePair {
                language_a: kept[i].0.clone(),
                language_b: kept[j].0.clone(),
                r: pearson(&x, &y),
                n_pairs: x.len(),
            });
        }
    }
    let rs: Vec<f64> = correlations.iter().filter_map(|c| c.r).collect();
    Ok(CrossLanguageTable {
        per_language,
        mean_r: (!rs.is_empty()).then(|| mean(&rs)),
        min_r: rs.iter().copied().reduce(f64::min),
        max_r: rs.iter().copied().reduce(f64::max),
        correlations,
        excluded_languages,
    })
}
