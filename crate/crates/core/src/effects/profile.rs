use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cells::EffectTable;
use crate::error::{Error, Result};
use crate::letters::Letter;
use crate::ratings::Dimension;
use crate::stats::{mean, pearson, population_sd};

pub type LetterMatrix = [[Option<f64>; Dimension::COUNT]; 26];

/// Mean focal-oriented d for each letter and dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterProfile {
    /// Mean over raters of the per-rater values.
    pub consensus: LetterMatrix,
    pub per_rater: BTreeMap<String, LetterMatrix>,
}

impl LetterProfile {
    /// Wraps a fully specified matrix (used for planted profiles and tests).
    pub fn from_values(values: &[[f64; Dimension::COUNT]; 26]) -> Self {
        let consensus = values.map(|row| row.map(Some));
        LetterProfile {
            consensus,
            per_rater: BTreeMap::new(),
        }
    }

    pub fn get(&self, letter: Letter, dim: Dimension) -> Option<f64> {
        self.consensus[letter.index()][dim.index()]
    }

    pub fn missing(&self) -> Vec<(Letter, Dimension)> {
        Letter::all()
            .flat_map(|l| Dimension::ALL.into_iter().map(move |d| (l, d)))
            .filter(|&(l, d)| self.get(l, d).is_none())
            .collect()
    }

    /// Same profile with every value negated.
    pub fn negated(&self) -> Self {
        let neg = |m: &LetterMatrix| m.map(|row| row.map(|v| v.map(|x| -x)));
        LetterProfile {
            consensus: neg(&self.consensus),
            per_rater: self
                .per_rater
                .iter()
                .map(|(k, m)| (k.clone(), neg(m)))
                .collect(),
        }
    }
}

/// Averages each contrast's d over the contrasts containing a letter, re-signed
/// so that positive means the letter pushes the dimension toward its high pole.
pub fn letter_profiles(table: &EffectTable) -> LetterProfile {
    let mut per_rater = BTreeMap::new();
    for rater in &table.raters {
        let mut sums = [[(0.0, 0usize); Dimension::COUNT]; 26];
        for c in table.rater_cells(rater) {
            let Some(d) = c.d else { continue };
            for letter in [c.contrast.first(), c.contrast.second()] {
                let sign = c
                    .contrast
                    .orientation(letter)
                    .expect("letter is in its contrast");
                let slot = &mut sums[letter.index()][c.dimension.index()];
                slot.0 += sign * d;
                slot.1 += 1;
            }
        }
        per_rater.insert(
            rater.clone(),
            sums.map(|row| row.map(|(s, n)| (n > 0).then(|| s / n as f64))),
        );
    }
    let mut consensus = [[None; Dimension::COUNT]; 26];
    for (li, row) in consensus.iter_mut().enumerate() {
        for (di, slot) in row.iter_mut().enumerate() {
            let vals: Vec<f64> = per_rater
                .values()
                .filter_map(|m: &LetterMatrix| m[li][di])
                .collect();
            if !vals.is_empty() {
                *slot = Some(mean(&vals));
            }
        }
    }
    LetterProfile {
        consensus,
        per_rater,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Unit loading vectors over the nine dimensions, one per component.
    pub components: Vec<[f64; Dimension::COUNT]>,
    pub explained_variance_ratio: Vec<f64>,
    /// Letter coordinates, 26 rows of k values.
    pub scores: Vec<Vec<f64>>,
    pub imputed_cells: usize,
    pub zero_variance: Vec<Dimension>,
}

/// Column z-scores (population SD) of the profile; missing cells are
/// mean-imputed first. Returns the matrix, the imputed count and any
/// zero-variance columns (left at zero).
pub fn zscore_profile(profile: &LetterProfile) -> (DMatrix<f64>, usize, Vec<Dimension>) {
    let mut z = DMatrix::zeros(26, Dimension::COUNT);
    let mut imputed = 0;
    let mut flat = Vec::new();
    for dim in Dimension::ALL {
        let present: Vec<f64> = profile
            .consensus
            .iter()
            .filter_map(|r| r[dim.index()])
            .collect();
        let fill = if present.is_empty() {
            0.0
        } else {
            mean(&present)
        };
        let col: Vec<f64> = profile
            .consensus
            .iter()
            .map(|r| {
                r[dim.index()].unwrap_or_else(|| {
                    imputed += 1;
                    fill
                })
            })
            .collect();
        let (m, sd) = (mean(&col), population_sd(&col));
        if sd <= 1e-12 * (1.0 + m.abs()) {
            flat.push(dim);
            continue;
        }
        for (i, v) in col.iter().enumerate() {
            z[(i, dim.index())] = (v - m) / sd;
        }
    }
    (z, imputed, flat)
}

/// PCA of the z-scored 26 x 9 profile through the SVD.
pub fn pca(profile: &LetterProfile, k: usize) -> Result<PcaResult> {
    if k == 0 || k > Dimension::COUNT {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..=9, got {k}"
        )));
    }
    let (z, imputed_cells, zero_variance) = zscore_profile(profile);
    if imputed_cells > 0 {
        log::warn!("{imputed_cells} missing profile cells were mean-imputed before PCA");
    }
    let svd = z.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::InsufficientData("profile has no variance".into()));
    }
    let mut components = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    let mut scores: Vec<Vec<f64>> = (0..26).map(|_| Vec::with_capacity(k)).collect();
    for &j in order.iter().take(k) {
        let s = svd.singular_values[j];
        let mut loading = [0.0; Dimension::COUNT];
        for (c, slot) in loading.iter_mut().enumerate() {
            *slot = vt[(j, c)];
        }
        let pivot = loading
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let flip = if pivot < 0.0 { -1.0 } else { 1.0 };
        components.push(loading.map(|v| v * flip));
        ratios.push(s * s / total);
        for (i, row) in scores.iter_mut().enumerate() {
            row.push(u[(i, j)] * s * flip);
        }
    }
    Ok(PcaResult {
        components,
        explained_variance_ratio: ratios,
        scores,
        imputed_cells,
        zero_variance,
    })
}

impl PcaResult {
    /// Rebuilds the z-scored matrix from the retained components.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        DMatrix::from_fn(26, Dimension::COUNT, |i, c| {
            self.components
                .iter()
                .enumerate()
                .map(|(j, comp)| self.scores[i][j] * comp[c])
                .sum()
        })
    }
}

fn column(m: &LetterMatrix, dim: Dimension) -> Vec<Option<f64>> {
    m.iter().map(|r| r[dim.index()]).collect()
}

fn complete_pairs(x: &[Option<f64>], y: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip()
}

/// 9 x 9 Pearson matrix across letters; `None` where a column has no variance.
pub fn inter_dimension_correlations(
    profile: &LetterProfile,
) -> [[Option<f64>; Dimension::COUNT]; Dimension::COUNT] {
    let mut out = [[None; Dimension::COUNT]; Dimension::COUNT];
    for a in Dimension::ALL {
        for b in Dimension::ALL {
            let (x, y) = complete_pairs(
                &column(&profile.consensus, a),
                &column(&profile.consensus, b),
            );
            out[a.index()][b.index()] = if a == b && pearson(&x, &x).is_some() {
                Some(1.0)
            } else {
                pearson(&x, &y)
            };
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub rater_a: String,
    pub rater_b: String,
    pub r: Option<f64>,
    pub n_points: usize,
}

/// Pearson r between two raters' letter x dimension profiles (234 points when complete).
pub fn cross_model_agreement(profile: &LetterProfile) -> Vec<Agreement> {
    let flat = |m: &LetterMatrix| m.iter().flat_map(|r| r.iter().copied()).collect::<Vec<_>>();
    let raters: Vec<(&String, Vec<Option<f64>>)> = profile
        .per_rater
        .iter()
        .map(|(k, m)| (k, flat(m)))
        .collect();
    let mut out = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            let (x, y) = complete_pairs(&raters[i].1, &raters[j].1);
            out.push(Agreement {
                rater_a: raters[i].0.clone(),
                rater_b: raters[j].0.clone(),
                r: pearson(&x, &y),
                n_points: x.len(),
            });
        }
    }
    out
}
