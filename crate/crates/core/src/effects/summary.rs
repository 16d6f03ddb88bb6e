use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cells::{ConsensusCell, EffectCell};
use crate::letters::LetterPair;
use crate::ratings::Dimension;
use crate::stats::{mean, median};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n_cells: usize,
    pub mean_abs_d: f64,
    pub frac_medium: f64,
    pub frac_large: f64,
    /// Mean |d| per dimension in canonical order.
    pub per_dimension_mean_abs: Vec<(Dimension, f64)>,
    /// Contrasts consensus-significant on at least one dimension.
    pub frac_contrasts_significant: f64,
    pub median_significant_dims: f64,
}

/// Descriptive aggregates over consensus cells with a defined d.
pub fn summary_stats(cells: &[ConsensusCell]) -> SummaryStats {
    let defined: Vec<(&ConsensusCell, f64)> =
        cells.iter().filter_map(|c| Some((c, c.d?.abs()))).collect();
    let abs: Vec<f64> = defined.iter().map(|(_, a)| *a).collect();
    let frac = |t: f64| {
        if abs.is_empty() {
            0.0
        } else {
            abs.iter().filter(|&&a| a >= t).count() as f64 / abs.len() as f64
        }
    };
    let per_dimension_mean_abs = Dimension::ALL
        .into_iter()
        .map(|dim| {
            let v: Vec<f64> = defined
                .iter()
                .filter(|(c, _)| c.dimension == dim)
                .map(|(_, a)| *a)
                .collect();
            (dim, if v.is_empty() { 0.0 } else { mean(&v) })
        })
        .collect();
    let mut per_contrast: BTreeMap<LetterPair, usize> = BTreeMap::new();
    for c in cells {
        *per_contrast.entry(c.contrast).or_default() += usize::from(c.significant == Some(true));
    }
    let counts: Vec<f64> = per_contrast.values().map(|&n| n as f64).collect();
    SummaryStats {
        n_cells: abs.len(),
        mean_abs_d: if abs.is_empty() { 0.0 } else { mean(&abs) },
        frac_medium: frac(0.5),
        frac_large: frac(0.8),
        per_dimension_mean_abs,
        frac_contrasts_significant: if counts.is_empty() {
            0.0
        } else {
            counts.iter().filter(|&&n| n > 0.0).count() as f64 / counts.len() as f64
        },
        median_significant_dims: if counts.is_empty() {
            0.0
        } else {
            median(&counts)
        },
    }
}

/// How the permutation and t-test verdicts line up for one rater.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestAgreement {
    pub rater_id: String,
    pub n_cells: usize,
    pub permutation_significant: usize,
    pub t_significant: usize,
    /// Cells where exactly one of the two uncorrected tests is below .05.
    pub disagreements: usize,
    /// Contrasts with q < .05 on at least one dimension.
    pub contrasts_significant: usize,
}

pub fn test_agreement(rater: &str, cells: &[&EffectCell], q_threshold: f64) -> TestAgreement {
    let perm = |c: &EffectCell| c.p < 0.05;
    let t = |c: &EffectCell| c.t_p.is_some_and(|p| p < 0.05);
    let mut sig_contrasts: BTreeMap<LetterPair, bool> = BTreeMap::new();
    for c in cells {
        *sig_contrasts.entry(c.contrast).or_default() |= c.q < q_threshold;
    }
    TestAgreement {
        rater_id: rater.to_string(),
        n_cells: cells.len(),
        permutation_significant: cells.iter().filter(|c| perm(c)).count(),
        t_significant: cells.iter().filter(|c| t(c)).count(),
        disagreements: cells.iter().filter(|c| perm(c) != t(c)).count(),
        contrasts_significant: sig_contrasts.values().filter(|&&s| s).count(),
    }
}
