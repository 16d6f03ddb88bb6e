//! Articulatory prediction of consensus effects: ridge regression with nested
//! cross-validation, feature-class ablation, feature x dimension correlations,
//! classical hypotheses and group-level classic findings.

mod classic;
mod cv;
mod hypotheses;
mod ridge;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::{bh_fdr, ConsensusCell, LetterProfile};
use crate::error::{Error, Result};
use crate::letters::{LetterPair, PairClass};
use crate::phonfeat::{feature_index, FeatureClass, PhonFeat};
use crate::ratings::Dimension;
use crate::seed;
use crate::stats::{pearson, pearson_p};
use crate::tsv::{self, fmt_f64, fmt_opt, Table};

pub use classic::{classic_findings, ClassicFinding, FindingResult, FindingSet, Pattern};
pub use cv::{
    ablate, cv_with_folds, fold_assignment, nested_cv, r_squared, select_alpha, CvOptions, CvResult,
};
pub use hypotheses::{
    bundled_hypotheses, consistent_count, evaluate_hypotheses, load_hypotheses, parse_hypotheses,
    Hypothesis, HypothesisResult, Verdict,
};
pub use ridge::{ridge_fit, RidgeFit, RidgeOptions};

pub const PREDICT_SCHEMA: &str = "phonosem-predict/1";

/// Consensus d per contrast, by dimension.
pub type Targets = Vec<(LetterPair, [Option<f64>; Dimension::COUNT])>;

/// Groups consensus cells into per-class target tables (CC first, then VV).
pub fn targets_from_consensus(cells: &[ConsensusCell]) -> Vec<(PairClass, Targets)> {
    let mut by_class: BTreeMap<PairClass, BTreeMap<LetterPair, [Option<f64>; Dimension::COUNT]>> =
        BTreeMap::new();
    for c in cells {
        by_class
            .entry(c.contrast.class())
            .or_default()
            .entry(c.contrast)
            .or_insert([None; Dimension::COUNT])[c.dimension.index()] = c.d;
    }
    [PairClass::Cc, PairClass::Vv]
        .into_iter()
        .filter_map(|class| Some((class, by_class.remove(&class)?.into_iter().collect())))
        .collect()
}

/// Builds targets directly from a function of the contrast (used for planted data).
pub fn targets_from_fn(
    contrasts: &[LetterPair],
    f: impl Fn(LetterPair, Dimension) -> Option<f64>,
) -> Vec<(PairClass, Targets)> {
    [PairClass::Cc, PairClass::Vv]
        .into_iter()
        .filter_map(|class| {
            let rows: Targets = contrasts
                .iter()
                .filter(|c| c.class() == class)
                .map(|&c| (c, Dimension::ALL.map(|d| f(c, d))))
                .collect();
            (!rows.is_empty()).then_some((class, rows))
        })
        .collect()
}

/// Feature-delta design matrix for a set of contrasts.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub contrasts: Vec<LetterPair>,
    pub features: Vec<&'static str>,
    pub x: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn build(phonfeat: &PhonFeat, contrasts: &[LetterPair], features: &[&'static str]) -> Self {
        let idx: Vec<usize> = features
            .iter()
            .map(|f| feature_index(f).expect("configured feature exists"))
            .collect();
        let deltas: Vec<_> = contrasts
            .iter()
            .map(|c| phonfeat.feature_delta(*c))
            .collect();
        let x = DMatrix::from_fn(contrasts.len(), features.len(), |i, j| {
            deltas[i].values()[idx[j]]
        });
        DesignMatrix {
            contrasts: contrasts.to_vec(),
            features: features.to_vec(),
            x,
        }
    }

    fn columns_of(&self, phonfeat: &PhonFeat, class: FeatureClass) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| phonfeat.feature_class(f) == Some(class))
            .map(|(i, _)| i)
            .collect()
    }
}

fn complete_rows(rows: &Targets, dim: Dimension) -> (Vec<LetterPair>, DVector<f64>) {
    let (c, y): (Vec<LetterPair>, Vec<f64>) = rows
        .iter()
        .filter_map(|(c, ds)| Some((*c, ds[dim.index()]?)))
        .unzip();
    (c, DVector::from_vec(y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub class: PairClass,
    pub dimension: Dimension,
    pub n: usize,
    pub r2: f64,
    pub alpha: f64,
    pub fold_alphas: Vec<f64>,
    /// (feature, standardized coefficient) of the all-rows fit.
    pub coefficients: Vec<(String, f64)>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub class: PairClass,
    pub dimension: Dimension,
    pub feature_class: String,
    pub n_columns: usize,
    pub full_r2: Option<f64>,
    pub reduced_r2: Option<f64>,
    /// `None` when the class contributes no design columns.
    pub delta_r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub class: PairClass,
    pub feature: String,
    pub dimension: Dimension,
    /// `None` (n/a) for zero-variance features.
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

/// Signed Pearson r of each correlation feature with each dimension's
/// consensus d, BH-corrected over all defined cells of the class.
pub fn feature_dimension_correlations(
    phonfeat: &PhonFeat,
    class: PairClass,
    rows: &Targets,
) -> Vec<CorrelationCell> {
    let features = phonfeat.correlation_features(class);
    let mut cells = Vec::new();
    for f in &features {
        let fi = feature_index(f).expect("configured feature exists");
        for dim in Dimension::ALL {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|(c, ds)| {
                    Some((phonfeat.feature_delta(*c).values()[fi], ds[dim.index()]?))
                })
                .unzip();
            let r = if phonfeat.varies_within(class, fi) {
                pearson(&x, &y)
            } else {
                None
            };
            cells.push(CorrelationCell {
                class,
                feature: f.to_string(),
                dimension: dim,
                r,
                p: r.and_then(|r| pearson_p(r, x.len()))
                    .map(|p| p.max(f64::MIN_POSITIVE)),
                q: None,
            });
        }
    }
    let defined: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].p.is_some()).collect();
    let ps: Vec<f64> = defined
        .iter()
        .map(|&i| cells[i].p.expect("filtered"))
        .collect();
    if let Ok(qs) = bh_fdr(&ps) {
        for (&i, q) in defined.iter().zip(qs) {
            cells[i].q = Some(q);
        }
    }
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictOptions {
    pub seed: u64,
    pub cv: CvOptions,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            seed: 42,
            cv: CvOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cv: Vec<CvRow>,
    pub ablation: Vec<AblationRow>,
    pub correlations: Vec<CorrelationCell>,
    pub hypotheses: Vec<HypothesisResult>,
    pub hypotheses_consistent: usize,
    pub classic: Vec<FindingResult>,
    pub warnings: Vec<String>,
}

/// Ablated feature classes, as in the regression analysis.
pub const ABLATED: [FeatureClass; 3] = [
    FeatureClass::Manner,
    FeatureClass::Place,
    FeatureClass::Laryngeal,
];

fn model_class(
    phonfeat: &PhonFeat,
    class: PairClass,
    rows: &Targets,
    opts: &PredictOptions,
) -> Result<(Vec<CvRow>, Vec<AblationRow>)> {
    let features = phonfeat.design_features(class);
    let fold_seed = seed::derive(opts.seed, &format!("cv|{class}"));
    let per_dim = Dimension::ALL
        .par_iter()
        .map(|&dim| -> Result<Option<(CvRow, Vec<AblationRow>)>> {
            let (contrasts, y) = complete_rows(rows, dim);
            if y.len() < 3 {
                return Ok(None);
            }
            let design = DesignMatrix::build(phonfeat, &contrasts, &features);
            let res = nested_cv(&design.x, &y, class, fold_seed, &opts.cv)?;
            let cv_row = CvRow {
                class,
                dimension: dim,
                n: y.len(),
                r2: res.r2,
                alpha: res.alpha,
                fold_alphas: res.fold_alphas.clone(),
                coefficients: features
                    .iter()
                    .map(|f| f.to_string())
                    .zip(res.coefficients.iter().copied())
                    .collect(),
                warning: res.warning.clone(),
            };
            let mut ablations = Vec::new();
            for fc in ABLATED {
                let drop = design.columns_of(phonfeat, fc);
                let (full, reduced, delta) = if drop.is_empty() {
                    (Some(res.r2), None, None)
                } else {
                    let (f, r, d) = ablate(&design.x, &y, &drop, class, fold_seed, &opts.cv)?;
                    (Some(f), Some(r), Some(d))
                };
                ablations.push(AblationRow {
                    class,
                    dimension: dim,
                    feature_class: fc.as_str().to_string(),
                    n_columns: drop.len(),
                    full_r2: full,
                    reduced_r2: reduced,
                    delta_r2: delta,
                });
            }
            Ok(Some((cv_row, ablations)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cv_rows = Vec::new();
    let mut ablations = Vec::new();
    for (row, abl) in per_dim.into_iter().flatten() {
        cv_rows.push(row);
        ablations.extend(abl);
    }
    Ok((cv_rows, ablations))
}

/// Runs the whole prediction stage.
pub fn predict(
    targets: &[(PairClass, Targets)],
    profile: &LetterProfile,
    phonfeat: &PhonFeat,
    hypotheses: &[Hypothesis],
    findings: &FindingSet,
    opts: &PredictOptions,
) -> Result<Prediction> {
    opts.cv.validate()?;
    let any_target = targets
        .iter()
        .any(|(_, rows)| rows.iter().any(|(_, ds)| ds.iter().any(Option::is_some)));
    if !any_target {
        return Err(Error::InsufficientData(
            "no consensus effects to predict".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut cv = Vec::new();
    let mut ablation = Vec::new();
    let mut correlations = Vec::new();
    for (class, rows) in targets {
        let (c, a) = model_class(phonfeat, *class, rows, opts)?;
        if c.len() < Dimension::COUNT {
            warnings.push(format!(
                "{class}: {} dimension(s) had fewer than 3 complete contrasts",
                Dimension::COUNT - c.len()
            ));
        }
        warnings.extend(c.iter().filter_map(|r| r.warning.clone()));
        cv.extend(c);
        ablation.extend(a);
        correlations.extend(feature_dimension_correlations(phonfeat, *class, rows));
    }
    let hyp = evaluate_hypotheses(hypotheses, phonfeat, targets)?;
    let missing = profile.missing().len();
    if missing > 0 {
        warnings.push(format!(
            "letter profile has {missing} missing cells; affected findings are undefined"
        ));
    }
    Ok(Prediction {
        cv,
        ablation,
        correlations,
        hypotheses_consistent: consistent_count(&hyp),
        hypotheses: hyp,
        classic: classic_findings(profile, findings)?,
        warnings,
    })
}

fn with_meta(t: Table, config_hash: &str) -> Table {
    t.with_meta("schema", PREDICT_SCHEMA)
        .with_meta("config_hash", config_hash)
}

fn opt_bool(b: Option<bool>) -> String {
    b.map_or("NA".into(), |v| if v { "1".into() } else { "0".into() })
}

/// Writes the prediction tables and the structured report into `dir`.
pub fn write_prediction(dir: &Path, p: &Prediction, config_hash: &str) -> Result<()> {
    let mut t = with_meta(
        Table::new(["class", "dimension", "n", "r2", "alpha"]),
        config_hash,
    );
    for r in &p.cv {
        t.push([
            r.class.to_string(),
            r.dimension.to_string(),
            r.n.to_string(),
            fmt_f64(r.r2),
            fmt_f64(r.alpha),
        ]);
    }
    t.write(&dir.join("cv.tsv"))?;

    let mut t = with_meta(
        Table::new([
            "class",
            "dimension",
            "feature_class",
            "n_columns",
            "full_r2",
            "reduced_r2",
            "delta_r2",
        ]),
        config_hash,
    );
    for r in &p.ablation {
        t.push([
            r.class.to_string(),
            r.dimension.to_string(),
            r.feature_class.clone(),
            r.n_columns.to_string(),
            fmt_opt(r.full_r2),
            fmt_opt(r.reduced_r2),
            fmt_opt(r.delta_r2),
        ]);
    }
    t.write(&dir.join("ablation.tsv"))?;

    let mut t = with_meta(
        Table::new(["class", "feature", "dimension", "r", "p", "q"]),
        config_hash,
    );
    for c in &p.correlations {
        t.push([
            c.class.to_string(),
            c.feature.clone(),
            c.dimension.to_string(),
            fmt_opt(c.r),
            fmt_opt(c.p),
            fmt_opt(c.q),
        ]);
    }
    t.write(&dir.join("correlations.tsv"))?;

    let mut t = with_meta(
        Table::new([
            "hypothesis",
            "class",
            "feature",
            "dimension",
            "expected_sign",
            "r",
            "p",
            "n",
            "verdict",
            "significant",
        ]),
        config_hash,
    );
    for h in &p.hypotheses {
        let verdict = match h.verdict {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Na => "n/a",
        };
        t.push([
            h.name.clone(),
            h.class.to_string(),
            h.feature.clone(),
            h.dimension.to_string(),
            h.expected_sign.to_string(),
            fmt_opt(h.r),
            fmt_opt(h.p),
            h.n.to_string(),
            verdict.to_string(),
            opt_bool(Some(h.significant)),
        ]);
    }
    t.write(&dir.join("hypotheses.tsv"))?;

    let mut t = with_meta(
        Table::new([
            "finding",
            "category",
            "dimension",
            "observed",
            "rho",
            "high_mean",
            "low_mean",
            "consistent",
        ]),
        config_hash,
    );
    for f in &p.classic {
        t.push([
            f.name.clone(),
            f.category.clone(),
            f.dimension.to_string(),
            f.observed.clone(),
            fmt_opt(f.rho),
            fmt_opt(f.high_mean),
            fmt_opt(f.low_mean),
            opt_bool(f.consistent),
        ]);
    }
    t.write(&dir.join("classic_findings.tsv"))?;

    let mut json = serde_json::to_value(p).expect("prediction serializes");
    json["config_hash"] = config_hash.into();
    json["schema"] = PREDICT_SCHEMA.into();
    let mut text = serde_json::to_string_pretty(&json).expect("value serializes");
    text.push('\n');
    tsv::write_file(&dir.join("prediction.json"), text.as_bytes())
}
