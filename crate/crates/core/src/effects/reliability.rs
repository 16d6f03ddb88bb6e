use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cells::{contrast_index, PairRatings};
use super::stats::pair_cohens_d;
use crate::corpus::Corpus;
use crate::letters::LetterPair;
use crate::ratings::Dimension;
use crate::seed;
use crate::stats::{mean, pearson, sample_variance};

pub fn spearman_brown(r: f64) -> f64 {
    (2.0 * r / (1.0 + r)).clamp(-1.0, 1.0)
}

/// Spearman-Brown corrected Pearson r between two half-sample d vectors.
pub fn split_correlation(half_a: &[f64], half_b: &[f64]) -> Option<f64> {
    pearson(half_a, half_b).map(spearman_brown)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEntry {
    pub rater_id: String,
    pub dimension: Dimension,
    pub mean_r: Option<f64>,
    pub min_r: Option<f64>,
    pub max_r: Option<f64>,
    /// Splits that produced a defined correlation.
    pub n_splits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub entries: Vec<ReliabilityEntry>,
    /// Contrasts with fewer than four carriers.
    pub excluded: Vec<LetterPair>,
}

fn half_d(rater: &PairRatings, pairs: &[usize], dim: Dimension) -> Option<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter_map(|&i| rater.values[i][dim.index()])
        .unzip();
    if a.len() < 2 {
        return None;
    }
    pair_cohens_d(&a, &b).ok().flatten()
}

/// Random split-half reliability of the contrast-level d vectors.
///
/// Each split shuffles the carriers of every contrast with its own seeded
/// stream and cuts them in half; the same split serves every rater and
/// dimension.
pub fn split_half_reliability(
    corpus: &Corpus,
    joined: &[PairRatings],
    n_splits: usize,
    seed_value: u64,
) -> ReliabilityReport {
    let index = contrast_index(corpus);
    let (usable, excluded): (Vec<_>, Vec<_>) = index.into_iter().partition(|(_, p)| p.len() >= 4);
    let excluded: Vec<LetterPair> = excluded.into_iter().map(|(c, _)| c).collect();
    if !excluded.is_empty() {
        log::warn!(
            "{} contrasts have fewer than 4 carriers and are left out of reliability",
            excluded.len()
        );
    }
    let splits: Vec<Vec<(Vec<usize>, Vec<usize>)>> = (0..n_splits)
        .map(|s| {
            usable
                .iter()
                .map(|(c, pairs)| {
                    let mut shuffled = pairs.clone();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
                        seed_value,
                        &format!("split|{c}|{s}"),
                    ));
                    shuffled.shuffle(&mut rng);
                    let rest = shuffled.split_off(shuffled.len() / 2);
                    (shuffled, rest)
                })
                .collect()
        })
        .collect();
    let jobs: Vec<(&PairRatings, Dimension)> = joined
        .iter()
        .flat_map(|r| Dimension::ALL.into_iter().map(move |d| (r, d)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(rater, dim)| {
            let rs: Vec<f64> = splits
                .iter()
                .filter_map(|split| {
                    let (xa, xb): (Vec<f64>, Vec<f64>) = split
                        .iter()
                        .filter_map(|(h1, h2)| {
                            Some((half_d(rater, h1, dim)?, half_d(rater, h2, dim)?))
                        })
                        .unzip();
                    split_correlation(&xa, &xb)
                })
                .collect();
            ReliabilityEntry {
                rater_id: rater.rater_id.clone(),
                dimension: dim,
                mean_r: (!rs.is_empty()).then(|| mean(&rs)),
                min_r: rs.iter().copied().reduce(f64::min),
                max_r: rs.iter().copied().reduce(f64::max),
                n_splits: rs.len(),
            }
        })
        .collect();
    ReliabilityReport { entries, excluded }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosageRow {
    pub dimension: Dimension,
    pub n_single: usize,
    pub n_double: usize,
    /// Mean |rating difference| over all single-occurrence pairs.
    pub single_mean_abs: Option<f64>,
    pub double_mean_abs: Option<f64>,
    pub raw_ratio: Option<f64>,
    /// Ratio of noise-corrected RMS cell effects, double over single.
    pub corrected_ratio: Option<f64>,
    pub flag: Option<String>,
}

/// Single- versus double-occurrence effect magnitude per dimension.
///
/// `raw_ratio` divides mean |Δ| values and is pulled toward 1 whenever noise
/// is present. `corrected_ratio` works per (rater, contrast, dimension,
/// occurrence) cell: with mean difference m, variance s² and n pairs,
/// `m² - s²/n` is an unbiased estimate of the squared true effect. Averaging
/// those over cells and taking the square root of the double/single quotient
/// recovers the dosage factor of an additive rater.
pub fn dosage_analysis(corpus: &Corpus, joined: &[PairRatings]) -> Vec<DosageRow> {
    let index = contrast_index(corpus);
    Dimension::ALL
        .into_iter()
        .map(|dim| {
            let mut abs: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
            let mut signal: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
            let mut noise: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
            for rater in joined {
                for pairs in index.values() {
                    for occ in [1u8, 2] {
                        let diffs: Vec<f64> = pairs
                            .iter()
                            .filter(|&&i| corpus.pairs[i].occurrence_count == occ)
                            .filter_map(|&i| rater.values[i][dim.index()].map(|(a, b)| b - a))
                            .collect();
                        abs.entry(occ)
                            .or_default()
                            .extend(diffs.iter().map(|d| d.abs()));
                        if diffs.len() >= 2 {
                            let n = diffs.len() as f64;
                            let m = mean(&diffs);
                            let s2n = sample_variance(&diffs) / n;
                            signal.entry(occ).or_default().push(m * m - s2n);
                            noise.entry(occ).or_default().push(s2n);
                        }
                    }
                }
            }
            let avg = |map: &BTreeMap<u8, Vec<f64>>, k: u8| {
                map.get(&k).filter(|v| !v.is_empty()).map(|v| mean(v))
            };
            let single = avg(&abs, 1);
            let double = avg(&abs, 2);
            let mut flag = None;
            let raw_ratio = match (single, double) {
                (Some(s), Some(d)) if s > 0.0 => Some(d / s),
                (None, _) | (_, None) => {
                    flag = Some("missing occurrence group".to_string());
                    None
                }
                _ => {
                    flag = Some("no single-occurrence effect".to_string());
                    None
                }
            };
            let corrected_ratio = match (avg(&signal, 1), avg(&signal, 2), avg(&noise, 1)) {
                (Some(s), Some(d), Some(ns)) if s > 0.25 * ns && s > 0.0 && d > 0.0 => {
                    Some((d / s).sqrt())
                }
                _ => {
                    flag.get_or_insert_with(|| {
                        "single-occurrence effect indistinguishable from noise".to_string()
                    });
                    None
                }
            };
            DosageRow {
                dimension: dim,
                n_single: abs.get(&1).map_or(0, Vec::len),
                n_double: abs.get(&2).map_or(0, Vec::len),
                single_mean_abs: single,
                double_mean_abs: double,
                raw_ratio,
                corrected_ratio,
                flag,
            }
        })
        .collect()
}
