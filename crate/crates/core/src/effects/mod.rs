//! Pair-level effect sizes, permutation inference, FDR, consensus, letter
//! profiles, PCA, reliability and dosage.

mod cells;
mod io;
mod profile;
mod reliability;
mod stats;
mod summary;

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::Result;
use crate::ratings::{Dimension, RatingStore};

pub use cells::{
    compute_effects, compute_effects_joined, consensus_significance, contrast_index, join_ratings,
    ConsensusCell, EffectCell, EffectTable, EffectsOptions, PairRatings,
};
pub use io::{
    read_consensus, read_profile, write_analysis, CONSENSUS_FILE, EFFECTS_SCHEMA, PROFILE_FILE,
};
pub use profile::{
    cross_model_agreement, inter_dimension_correlations, letter_profiles, pca, zscore_profile,
    Agreement, LetterMatrix, LetterProfile, PcaResult,
};
pub use reliability::{
    dosage_analysis, spearman_brown, split_correlation, split_half_reliability, DosageRow,
    ReliabilityEntry, ReliabilityReport,
};
pub use stats::{
    bh_fdr, one_sample_t_p, pair_cohens_d, permutation_test, permutation_test_exact,
    permutation_test_sampled,
};
pub use summary::{summary_stats, test_agreement, SummaryStats, TestAgreement};

/// Everything the analyze stage produces.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub table: EffectTable,
    pub profile: LetterProfile,
    pub pca: Option<PcaResult>,
    pub reliability: ReliabilityReport,
    pub dosage: Vec<DosageRow>,
    pub agreement: Vec<Agreement>,
    pub inter_dimension: [[Option<f64>; Dimension::COUNT]; Dimension::COUNT],
    pub summary: SummaryStats,
    pub tests: Vec<TestAgreement>,
    pub warnings: Vec<String>,
}

/// Structured part of the analysis written as JSON.
#[derive(Serialize)]
pub struct AnalysisReport<'a> {
    pub raters: &'a [String],
    pub summary: &'a SummaryStats,
    pub tests: &'a [TestAgreement],
    pub pca_explained_variance_ratio: Option<&'a [f64]>,
    pub reliability: &'a ReliabilityReport,
    pub dosage: &'a [DosageRow],
    pub cross_model_agreement: &'a [Agreement],
    pub inter_dimension: Vec<Vec<Option<f64>>>,
    pub missing_profile_cells: usize,
    pub warnings: &'a [String],
}

impl Analysis {
    pub fn report(&self) -> AnalysisReport<'_> {
        AnalysisReport {
            raters: &self.table.raters,
            summary: &self.summary,
            tests: &self.tests,
            pca_explained_variance_ratio: self
                .pca
                .as_ref()
                .map(|p| p.explained_variance_ratio.as_slice()),
            reliability: &self.reliability,
            dosage: &self.dosage,
            cross_model_agreement: &self.agreement,
            inter_dimension: self.inter_dimension.iter().map(|r| r.to_vec()).collect(),
            missing_profile_cells: self.profile.missing().len(),
            warnings: &self.warnings,
        }
    }
}

/// Runs the full effects stage over a corpus and rating store.
pub fn analyze(corpus: &Corpus, store: &RatingStore, opts: &EffectsOptions) -> Result<Analysis> {
    if store.is_empty() {
        return Err(crate::Error::InsufficientData(
            "rating store is empty".into(),
        ));
    }
    let joined = join_ratings(corpus, store);
    let table = compute_effects_joined(corpus, &joined, opts)?;
    let mut warnings = Vec::new();
    if table.raters.len() < opts.min_agree.max(2) {
        warnings.push(format!(
            "only {} rater(s): consensus significance is undefined",
            table.raters.len()
        ));
    }
    let profile = letter_profiles(&table);
    let missing = profile.missing().len();
    if missing > 0 {
        warnings.push(format!(
            "{missing} letter x dimension profile cells have no valid effect"
        ));
    }
    let pca = match pca(&profile, opts.pca_components) {
        Ok(p) => Some(p),
        Err(e) => {
            warnings.push(format!("PCA skipped: {e}"));
            None
        }
    };
    let reliability = split_half_reliability(corpus, &joined, opts.n_splits, opts.seed);
    if !reliability.excluded.is_empty() {
        warnings.push(format!(
            "{} contrasts with fewer than 4 carriers left out of reliability",
            reliability.excluded.len()
        ));
    }
    let dosage = dosage_analysis(corpus, &joined);
    let tests = table
        .raters
        .iter()
        .map(|r| {
            let cells: Vec<&EffectCell> = table.rater_cells(r).collect();
            test_agreement(r, &cells, opts.q_threshold)
        })
        .collect();
    Ok(Analysis {
        summary: summary_stats(&table.consensus),
        agreement: cross_model_agreement(&profile),
        inter_dimension: inter_dimension_correlations(&profile),
        table,
        profile,
        pca,
        reliability,
        dosage,
        tests,
        warnings,
    })
}
