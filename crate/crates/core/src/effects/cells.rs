use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{bh_fdr, one_sample_t_p, pair_cohens_d, permutation_test};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::letters::{LetterPair, PairClass};
use crate::ratings::{Dimension, RatingStore};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectsOptions {
    pub n_iter: usize,
    pub seed: u64,
    pub q_threshold: f64,
    pub min_agree: usize,
    pub n_splits: usize,
    pub pca_components: usize,
}

impl Default for EffectsOptions {
    fn default() -> Self {
        EffectsOptions {
            n_iter: 10_000,
            seed: 42,
            q_threshold: 0.05,
            min_agree: 2,
            n_splits: 100,
            pca_components: 2,
        }
    }
}

/// Ratings of both members of every corpus pair, for one rater.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRatings {
    pub rater_id: String,
    /// Indexed like `Corpus::pairs`; `None` where either word lacks a rating.
    pub values: Vec<[Option<(f64, f64)>; Dimension::COUNT]>,
}

/// Joins ratings to corpus pairs through the word text.
pub fn join_ratings(corpus: &Corpus, store: &RatingStore) -> Vec<PairRatings> {
    store
        .raters()
        .into_iter()
        .map(|rater| {
            let values = corpus
                .pairs
                .iter()
                .map(|p| {
                    Dimension::ALL.map(|dim| {
                        let a = store.get(&rater, &p.word_a.text, dim)?;
                        let b = store.get(&rater, &p.word_b.text, dim)?;
                        Some((a, b))
                    })
                })
                .collect();
            PairRatings {
                rater_id: rater,
                values,
            }
        })
        .collect()
}

/// Corpus pair indices per contrast, in canonical contrast order.
pub fn contrast_index(corpus: &Corpus) -> BTreeMap<LetterPair, Vec<usize>> {
    let mut map: BTreeMap<LetterPair, Vec<usize>> = BTreeMap::new();
    for (i, p) in corpus.pairs.iter().enumerate() {
        map.entry(p.contrast).or_default().push(i);
    }
    map
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectCell {
    pub contrast: LetterPair,
    pub dimension: Dimension,
    pub rater_id: String,
    pub n_pairs: usize,
    pub mean_diff: f64,
    /// `None` when the pooled SD is zero or fewer than two pairs are complete.
    pub d: Option<f64>,
    pub p: f64,
    pub q: f64,
    /// One-sample t-test on the same differences, reported alongside.
    pub t_p: Option<f64>,
}

impl EffectCell {
    pub fn sign(&self) -> f64 {
        match self.d {
            Some(d) if d != 0.0 => d.signum(),
            _ => 0.0,
        }
    }
}

/// Multi-rater agreement for one (contrast, dimension).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCell {
    pub contrast: LetterPair,
    pub dimension: Dimension,
    /// Mean of the raters' defined d values.
    pub d: Option<f64>,
    pub n_raters: usize,
    /// Raters with q below threshold that share the majority significant sign.
    pub n_agree: usize,
    /// `None` with fewer than two raters.
    pub significant: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub raters: Vec<String>,
    /// Ordered by rater, then canonical contrast, then dimension.
    pub cells: Vec<EffectCell>,
    /// Ordered by canonical contrast, then dimension.
    pub consensus: Vec<ConsensusCell>,
}

impl EffectTable {
    pub fn consensus_for(&self, contrast: LetterPair, dim: Dimension) -> Option<&ConsensusCell> {
        self.consensus
            .iter()
            .find(|c| c.contrast == contrast && c.dimension == dim)
    }

    pub fn cells_for(
        &self,
        contrast: LetterPair,
        dim: Dimension,
    ) -> impl Iterator<Item = &EffectCell> {
        self.cells
            .iter()
            .filter(move |c| c.contrast == contrast && c.dimension == dim)
    }

    pub fn rater_cells<'a>(&'a self, rater: &'a str) -> impl Iterator<Item = &'a EffectCell> + 'a {
        self.cells.iter().filter(move |c| c.rater_id == rater)
    }

    /// Consensus d per contrast of a class, by dimension, in canonical order.
    pub fn consensus_targets(
        &self,
        class: PairClass,
    ) -> Vec<(LetterPair, [Option<f64>; Dimension::COUNT])> {
        let mut out: BTreeMap<LetterPair, [Option<f64>; Dimension::COUNT]> = BTreeMap::new();
        for c in self
            .consensus
            .iter()
            .filter(|c| c.contrast.class() == class)
        {
            out.entry(c.contrast).or_insert([None; Dimension::COUNT])[c.dimension.index()] = c.d;
        }
        out.into_iter().collect()
    }
}

/// True iff at least `min_agree` raters reach q < threshold with the same sign of d.
pub fn consensus_significance(
    cells: &[&EffectCell],
    q_threshold: f64,
    min_agree: usize,
) -> Result<bool> {
    Ok(agreeing(cells, q_threshold, min_agree)? >= min_agree)
}

fn agreeing(cells: &[&EffectCell], q_threshold: f64, min_agree: usize) -> Result<usize> {
    if cells.len() < 2 || cells.len() < min_agree {
        return Err(Error::InsufficientData(format!(
            "consensus needs at least {} raters, got {}",
            min_agree.max(2),
            cells.len()
        )));
    }
    let count = |sign: f64| {
        cells
            .iter()
            .filter(|c| c.q < q_threshold && c.sign() == sign)
            .count()
    };
    Ok(count(1.0).max(count(-1.0)))
}

fn cell(
    rater: &PairRatings,
    contrast: LetterPair,
    pairs: &[usize],
    dim: Dimension,
    opts: &EffectsOptions,
) -> Result<EffectCell> {
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for &i in pairs {
        if let Some((x, y)) = rater.values[i][dim.index()] {
            a.push(x);
            b.push(y);
        }
    }
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| y - x).collect();
    let n = diffs.len();
    let (mean_diff, d, p, t_p) = if n == 0 {
        (0.0, None, 1.0, None)
    } else {
        let label = format!("perm|{}|{contrast}|{dim}", rater.rater_id);
        let p = permutation_test(&diffs, opts.n_iter, seed::derive(opts.seed, &label))?;
        let d = if n >= 2 { pair_cohens_d(&a, &b)? } else { None };
        (crate::stats::mean(&diffs), d, p, one_sample_t_p(&diffs))
    };
    Ok(EffectCell {
        contrast,
        dimension: dim,
        rater_id: rater.rater_id.clone(),
        n_pairs: n,
        mean_diff,
        d,
        p,
        q: p,
        t_p,
    })
}

/// Per-rater effect cells with per-rater BH-FDR (one family of 220 x 9 tests
/// per rater), followed by multi-rater consensus.
pub fn compute_effects(
    corpus: &Corpus,
    store: &RatingStore,
    opts: &EffectsOptions,
) -> Result<EffectTable> {
    if store.is_empty() {
        return Err(Error::InsufficientData("rating store is empty".into()));
    }
    if corpus.pairs.is_empty() {
        return Err(Error::InsufficientData("corpus has no pairs".into()));
    }
    let joined = join_ratings(corpus, store);
    compute_effects_joined(corpus, &joined, opts)
}

pub fn compute_effects_joined(
    corpus: &Corpus,
    joined: &[PairRatings],
    opts: &EffectsOptions,
) -> Result<EffectTable> {
    let index = contrast_index(corpus);
    let mut cells = Vec::new();
    for rater in joined {
        let jobs: Vec<(LetterPair, &Vec<usize>, Dimension)> = index
            .iter()
            .flat_map(|(c, pairs)| Dimension::ALL.into_iter().map(move |d| (*c, pairs, d)))
            .collect();
        let mut rater_cells = jobs
            .par_iter()
            .map(|(c, pairs, d)| cell(rater, *c, pairs, *d, opts))
            .collect::<Result<Vec<_>>>()?;
        let ps: Vec<f64> = rater_cells.iter().map(|c| c.p).collect();
        for (c, q) in rater_cells.iter_mut().zip(bh_fdr(&ps)?) {
            c.q = q;
        }
        cells.extend(rater_cells);
    }
    let raters: Vec<String> = joined.iter().map(|r| r.rater_id.clone()).collect();
    let mut consensus = Vec::new();
    for contrast in index.keys() {
        for dim in Dimension::ALL {
            let group: Vec<&EffectCell> = cells
                .iter()
                .filter(|c| c.contrast == *contrast && c.dimension == dim)
                .collect();
            let ds: Vec<f64> = group.iter().filter_map(|c| c.d).collect();
            let (n_agree, significant) = match agreeing(&group, opts.q_threshold, opts.min_agree) {
                Ok(n) => (n, Some(n >= opts.min_agree)),
                Err(_) => (0, None),
            };
            consensus.push(ConsensusCell {
                contrast: *contrast,
                dimension: dim,
                d: (!ds.is_empty()).then(|| crate::stats::mean(&ds)),
                n_raters: group.len(),
                n_agree,
                significant,
            });
        }
    }
    Ok(EffectTable {
        raters,
        cells,
        consensus,
    })
}
